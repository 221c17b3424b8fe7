"""Backend selection for the MLP hot loop.

The compiled core (``_ckernels``) is used when it imports; otherwise, or when
the environment variable ``GLS_LAB_PURE=1`` is set, the numpy fallback runs.
Both expose ``batch_loss_grad`` and ``predict_probs`` with identical contracts;
they agree to rounding error but are not bit-identical to each other.
"""

import os

from . import _pykernels

if os.environ.get("GLS_LAB_PURE") == "1":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.BACKEND
batch_loss_grad = _impl.batch_loss_grad
predict_probs = _impl.predict_probs

__all__ = ["BACKEND", "batch_loss_grad", "predict_probs", "_pykernels"]
