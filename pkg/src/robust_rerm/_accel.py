"""Backend switch for the compiled kernels.

Set ``ROBUST_RERM_NO_NUMBA=1`` before import to force the pure-numpy path.
"""
import os

_FLAG = os.environ.get("ROBUST_RERM_NO_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and _FLAG not in ("1", "true", "yes", "on")
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(func):
    """Compile ``func`` in nopython mode when numba is usable, else return it."""
    if not NUMBA_AVAILABLE:
        return func
    return numba.njit(cache=True)(func)
