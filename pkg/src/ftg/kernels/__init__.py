"""Backend dispatch for the hot kernels.

The numba backend is used when importable; set FTG_NUMBA=0 to force the
pure-numpy fallback or FTG_NUMBA=1 to require numba (import error if
missing). Both backends expose the same three functions with identical
semantics; see numpy_impl for the contracts.
"""

from __future__ import annotations

import os

from ftg.kernels import numpy_impl

_FALSE = ("0", "false", "off", "no")
_TRUE = ("1", "true", "on", "yes")


def _pick_backend():
    flag = os.environ.get("FTG_NUMBA", "").strip().lower()
    if flag in _FALSE:
        return numpy_impl, "numpy"
    try:
        from ftg.kernels import numba_impl
        return numba_impl, "numba"
    except ImportError:
        if flag in _TRUE:
            raise
        return numpy_impl, "numpy"


_impl, BACKEND = _pick_backend()
USING_NUMBA = BACKEND == "numba"

conv3x3_forward = _impl.conv3x3_forward
conv3x3_backward = _impl.conv3x3_backward
rhythm_select = _impl.rhythm_select


def get_impl(name: str):
    """Explicit backend lookup ("numpy" | "numba") for tests and benchmarks."""
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        from ftg.kernels import numba_impl
        return numba_impl
    raise ValueError(f"unknown kernel backend {name!r}")
