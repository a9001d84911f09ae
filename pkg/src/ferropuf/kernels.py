"""Backend selection for the attack kernels.

The Cython extension ``ferropuf._core`` is used when it was built; otherwise,
or when the environment variable ``FERROPUF_PURE_PYTHON`` is set to a
non-empty value other than ``0``, the NumPy fallback is used.  ``BACKEND``
names the active one.
"""
import os

from . import _core_py

_force_py = os.environ.get("FERROPUF_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_py:
        raise ImportError("pure-Python backend forced")
    from . import _core as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _core_py
    BACKEND = "python"

xor_loss_grad = _impl.xor_loss_grad
xor_predict = _impl.xor_predict
rprop_fit = _impl.rprop_fit

__all__ = ["BACKEND", "xor_loss_grad", "xor_predict", "rprop_fit"]
