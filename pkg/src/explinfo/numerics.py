"""Numerical core: bilinear critic, linear classifier, Adam, log-softmax.

Everything trains in 64-bit floats; embeddings arrive as float32 and are
widened on ingestion. Training is single-threaded per run so that equal
seeds give bit-identical trajectories.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from explinfo import _kernels

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class NumericsError(ValueError):
    pass


class ShapeError(NumericsError):
    pass


class NonFiniteGradientError(NumericsError):
    def __init__(self, name):
        super().__init__(f"non-finite gradient for parameter {name!r}")
        self.name = name


def as_f64(arr) -> np.ndarray:
    """Widen to a C-contiguous float64 array (kernel calling convention)."""
    return np.ascontiguousarray(arr, dtype=np.float64)


def log_softmax(logits) -> np.ndarray:
    """Log of softmax probabilities, stabilized by max subtraction."""
    v = np.asarray(logits, dtype=np.float64)
    if v.size == 0:
        raise NumericsError("log_softmax of an empty vector")
    if not np.all(np.isfinite(v)):
        raise NumericsError("log_softmax requires finite logits")
    m = v.max()
    shifted = v - m
    return shifted - np.log(np.exp(shifted).sum())


def bilinear_logit(x, W, e) -> float:
    """The scalar x' W e; its exponential is the critic's score."""
    x = as_f64(x)
    e = as_f64(e)
    W = as_f64(W)
    if W.shape != (x.shape[0], e.shape[0]):
        raise ShapeError(f"W has shape {W.shape}, expected {(x.shape[0], e.shape[0])}")
    return float(x @ W @ e)


def init_bilinear(d_x: int, d_e: int, rng: np.random.Generator) -> np.ndarray:
    """Fan-scaled uniform init on +-sqrt(6 / (d_x + d_e))."""
    bound = np.sqrt(6.0 / (d_x + d_e))
    return rng.uniform(-bound, bound, size=(d_x, d_e))


@dataclass
class BilinearCritic:
    """Trainable scoring matrix for pairing inputs with explanans."""

    W: np.ndarray

    @classmethod
    def init(cls, d_x, d_e, rng) -> "BilinearCritic":
        return cls(W=init_bilinear(d_x, d_e, rng))


@dataclass
class LinearPredictor:
    """Linear softmax classifier over explanan vectors."""

    weights: np.ndarray
    bias: np.ndarray

    @classmethod
    def init(cls, dim, n_classes=3) -> "LinearPredictor":
        return cls(weights=np.zeros((dim, n_classes)), bias=np.zeros(n_classes))

    def logits(self, inputs) -> np.ndarray:
        return as_f64(inputs) @ self.weights + self.bias

    def log_proba(self, inputs) -> np.ndarray:
        z = self.logits(inputs)
        m = z.max(axis=1, keepdims=True)
        shifted = z - m
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


@dataclass
class AdamState:
    """Optimizer state for a named parameter set; moments start at zero."""

    first_moment: dict
    second_moment: dict
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPS

    @classmethod
    def init(cls, params: dict, lr: float, **kwargs) -> "AdamState":
        return cls(
            first_moment={k: np.zeros_like(v) for k, v in params.items()},
            second_moment={k: np.zeros_like(v) for k, v in params.items()},
            lr=lr,
            **kwargs,
        )


def adam_step(params: dict, grads: dict, state: AdamState):
    """Apply one Adam update to every parameter, in place.

    Returns the same ``(params, state)`` objects for chaining. Gradients
    must be finite and shape-compatible; violations name the parameter.
    """
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name)
    state.step_count += 1
    for name, p in params.items():
        _kernels.adam_update(
            p.reshape(-1),
            as_f64(grads[name]).reshape(-1),
            state.first_moment[name].reshape(-1),
            state.second_moment[name].reshape(-1),
            state.step_count,
            state.lr,
            state.beta1,
            state.beta2,
            state.epsilon,
        )
    return params, state


def infonce_loss_grad(xs, es, W):
    """Batch contrastive loss and its gradient in the critic matrix."""
    return _kernels.infonce_loss_grad(as_f64(xs), as_f64(es), as_f64(W))


def xent_loss_grad(inputs, labels, W, b):
    """Mean negative log-likelihood of a linear classifier plus gradients."""
    return _kernels.xent_loss_grad(
        as_f64(inputs),
        np.ascontiguousarray(labels, dtype=np.int64),
        as_f64(W),
        as_f64(b),
    )


def save_checkpoint(path, params: dict, state: AdamState, rng: np.random.Generator | None = None, extra: dict | None = None):
    """Persist parameters, optimizer state, and RNG state for exact resume."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for k, v in params.items():
        arrays[f"param_{k}"] = v
    for k, v in state.first_moment.items():
        arrays[f"m1_{k}"] = v
    for k, v in state.second_moment.items():
        arrays[f"m2_{k}"] = v
    meta = {
        "param_names": sorted(params),
        "step_count": state.step_count,
        "lr": state.lr,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "epsilon": state.epsilon,
        "rng_state": rng.bit_generator.state if rng is not None else None,
        "extra": extra or {},
    }
    arrays["meta_json"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    with path.open("wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Restore ``(params, state, rng, extra)`` saved by ``save_checkpoint``."""
    with np.load(Path(path)) as data:
        meta = json.loads(bytes(data["meta_json"]).decode("utf-8"))
        params = {k: data[f"param_{k}"].copy() for k in meta["param_names"]}
        state = AdamState(
            first_moment={k: data[f"m1_{k}"].copy() for k in meta["param_names"]},
            second_moment={k: data[f"m2_{k}"].copy() for k in meta["param_names"]},
            step_count=meta["step_count"],
            lr=meta["lr"],
            beta1=meta["beta1"],
            beta2=meta["beta2"],
            epsilon=meta["epsilon"],
        )
    rng = None
    if meta["rng_state"] is not None:
        rng = np.random.default_rng(0)
        rng.bit_generator.state = meta["rng_state"]
    return params, state, rng, meta["extra"]


def kernel_backend() -> str:
    """Name of the active kernel backend (``cython`` or ``numpy``)."""
    return _kernels.BACKEND_NAME
