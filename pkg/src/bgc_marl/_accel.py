"""Numba switch.

Kernels exist in two flavours: a compiled one (``numba.njit``) and a pure-numpy
one. ``BGC_NUMBA=0`` in the environment selects the numpy flavour at import
time; the compiled flavour is also used only if numba imports cleanly.
"""
import os

try:
    import numba as _nb
except ImportError:  # pragma: no cover
    _nb = None

HAVE_NUMBA = _nb is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get("BGC_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


def njit(func):
    """Compile ``func`` with numba if it is installed, else return it as is.

    Compilation is lazy, so decorating costs nothing when the numpy path is
    selected.
    """
    if HAVE_NUMBA:
        return _nb.njit(cache=True, nogil=True)(func)
    return func  # pragma: no cover
