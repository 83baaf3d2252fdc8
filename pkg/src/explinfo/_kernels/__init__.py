"""Training kernel backend selection.

The compiled Cython extension is preferred when it imported cleanly; the
numpy fallback is always available. Set ``EXPLINFO_PURE_PY=1`` to force
the fallback (useful for benchmarking and debugging).
"""

import os

from explinfo._kernels import numpy_backend

if os.environ.get("EXPLINFO_PURE_PY"):
    _backend = numpy_backend
else:
    try:
        from explinfo._kernels import _core as _backend
    except ImportError:
        _backend = numpy_backend

BACKEND_NAME = _backend.NAME

infonce_loss_grad = _backend.infonce_loss_grad
xent_loss_grad = _backend.xent_loss_grad
adam_update = _backend.adam_update
