"""Selects the gradient-descent kernel at import time.

The compiled extension is preferred when importable; otherwise the numpy
fallback takes over transparently. Set ``NRC_LAB_BACKEND=numpy`` or
``NRC_LAB_BACKEND=compiled`` to force a choice (forcing the compiled kernel
raises if the extension is missing). Both kernels implement the same
``run_gd_chunk`` contract and follow the same update order.
"""

from __future__ import annotations

import os

from . import _gd_numpy

_choice = os.environ.get("NRC_LAB_BACKEND", "auto").strip().lower() or "auto"

HAVE_COMPILED = False
try:
    from . import _speedups

    HAVE_COMPILED = True
except ImportError:
    _speedups = None

if _choice in ("auto", ""):
    _impl = _speedups if HAVE_COMPILED else _gd_numpy
elif _choice in ("compiled", "cython"):
    if not HAVE_COMPILED:
        raise ImportError(
            "NRC_LAB_BACKEND requests the compiled kernel but the extension "
            "is not importable; rebuild or unset the variable"
        )
    _impl = _speedups
elif _choice in ("numpy", "python"):
    _impl = _gd_numpy
else:
    raise ValueError(
        f"NRC_LAB_BACKEND must be auto, compiled, or numpy, got {_choice!r}"
    )

BACKEND = _impl.BACKEND_NAME
run_gd_chunk = _impl.run_gd_chunk

__all__ = ["BACKEND", "HAVE_COMPILED", "run_gd_chunk"]
