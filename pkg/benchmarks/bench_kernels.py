"""Compare the compiled training kernels against the numpy fallback.

Times the three hot operations on realistic shapes and prints nanoseconds
per call for each backend plus the speedup. Run from a checkout where the
extension built::

    python3 benchmarks/bench_kernels.py
"""

from __future__ import annotations

import timeit

import numpy as np

from explinfo._kernels import numpy_backend

try:
    from explinfo._kernels import _core
except ImportError:
    _core = None

INFONCE_SHAPES = [(64, 64), (256, 64), (256, 1024)]
XENT_SHAPES = [(16, 64), (256, 1024)]
ADAM_SIZES = [64 * 64, 1024 * 1024]
REPEAT = 5


def _best(fn, number):
    return min(timeit.repeat(fn, number=number, repeat=REPEAT)) / number


def _report(label, numpy_time, core_time):
    if core_time is None:
        print(f"{label:<28} numpy {numpy_time * 1e6:9.1f} us   cython        n/a")
        return
    print(
        f"{label:<28} numpy {numpy_time * 1e6:9.1f} us   cython {core_time * 1e6:9.1f} us   "
        f"x{numpy_time / core_time:.2f}"
    )


def bench_infonce():
    for n, d in INFONCE_SHAPES:
        rng = np.random.default_rng(0)
        xs = rng.standard_normal((n, d))
        es = rng.standard_normal((n, d))
        W = rng.standard_normal((d, d)) * 0.01
        number = max(1, int(2e7 / (n * n * d)))
        t_np = _best(lambda: numpy_backend.infonce_loss_grad(xs, es, W), number)
        t_c = _best(lambda: _core.infonce_loss_grad(xs, es, W), number) if _core else None
        _report(f"infonce n={n} d={d}", t_np, t_c)


def bench_xent():
    for n, d in XENT_SHAPES:
        rng = np.random.default_rng(1)
        inputs = rng.standard_normal((n, d))
        labels = rng.integers(0, 3, size=n)
        W = rng.standard_normal((d, 3)) * 0.01
        b = np.zeros(3)
        number = max(10, int(2e7 / (n * d)))
        t_np = _best(lambda: numpy_backend.xent_loss_grad(inputs, labels, W, b), number)
        t_c = _best(lambda: _core.xent_loss_grad(inputs, labels, W, b), number) if _core else None
        _report(f"xent    n={n} d={d}", t_np, t_c)


def bench_adam():
    for size in ADAM_SIZES:
        rng = np.random.default_rng(2)
        grad = rng.standard_normal(size)

        def run(backend):
            param = np.zeros(size)
            m = np.zeros(size)
            v = np.zeros(size)
            backend.adam_update(param, grad, m, v, 1, 1e-3, 0.9, 0.999, 1e-8)

        number = max(5, int(2e7 / size))
        t_np = _best(lambda: run(numpy_backend), number)
        t_c = _best(lambda: run(_core), number) if _core else None
        _report(f"adam    size={size}", t_np, t_c)


def main():
    if _core is None:
        print("compiled extension not importable; timing the fallback only")
    bench_infonce()
    bench_xent()
    bench_adam()


if __name__ == "__main__":
    main()
