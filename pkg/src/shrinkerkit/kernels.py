"""Kernel selection: compiled extension when importable, numpy otherwise.

Set ``SHRINKERKIT_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py as fallback

compiled = None
if os.environ.get("SHRINKERKIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else fallback
BACKEND = "compiled" if compiled is not None else "python"

END_CLAMPED = fallback.END_CLAMPED
END_AXIS = fallback.END_AXIS

tridiag_solve = _impl.tridiag_solve
cyclic_tridiag_solve = _impl.cyclic_tridiag_solve
curve_step = _impl.curve_step
spline_eval = _impl.spline_eval
polyline_distance = _impl.polyline_distance
