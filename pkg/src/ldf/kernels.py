"""Hot-kernel dispatch.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
NumPy versions in ``_kernels_py`` are. ``LDF_KERNELS=python`` forces the
fallback and ``LDF_KERNELS=cython`` makes a missing extension an error.
"""

import os

from . import _kernels_py

_choice = os.environ.get("LDF_KERNELS", "").strip().lower()

if _choice == "python":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        if _choice == "cython":
            raise
        _impl = _kernels_py
        BACKEND = "python"

conv1d_same_forward = _impl.conv1d_same_forward
conv1d_same_backward = _impl.conv1d_same_backward
masked_softmax_forward = _impl.masked_softmax_forward
masked_softmax_backward = _impl.masked_softmax_backward


def available_backends():
    """Map of backend name to kernel module for every importable backend."""
    out = {"python": _kernels_py}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
