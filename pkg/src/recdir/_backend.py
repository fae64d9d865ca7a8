"""Kernel backend selection.

Hot loops ship in two flavours: a numba ``@njit`` version and a pure-numpy
version. ``RECDIR_BACKEND=numpy`` (or a missing numba install) selects the
numpy path; anything else uses numba.
"""
import os

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAS_NUMBA = False

_requested = os.environ.get("RECDIR_BACKEND", "numba").strip().lower()
BACKEND = "numba" if (HAS_NUMBA and _requested != "numpy") else "numpy"


def njit(fn):
    """Compile ``fn`` with numba when available, else return it unchanged."""
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True)(fn)


def pick(numba_impl, numpy_impl, backend=None):
    backend = backend or BACKEND
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and HAS_NUMBA:
        return numba_impl
    return numpy_impl
