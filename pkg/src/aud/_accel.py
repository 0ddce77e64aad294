"""Optional numba acceleration.

Set ``AUD_DISABLE_NUMBA=1`` in the environment to force the pure-numpy
kernels (read once, at import time).
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_flag = os.environ.get("AUD_DISABLE_NUMBA", "0").strip().lower()
USE_NUMBA = numba is not None and _flag not in ("1", "true", "yes", "on")


def njit(func):
    """Compile ``func`` with numba in nopython mode, releasing the GIL.

    Returns ``func`` unchanged when numba is unavailable, so the plain
    Python loops still run (slowly) and stay testable.
    """
    if numba is None:
        return func
    return numba.njit(cache=False, nogil=True)(func)
