"""Optional numba acceleration for the model kernels.

numba is used when it imports cleanly, unless the environment variable
``TRFUNNEL_DISABLE_NUMBA`` is set to a truthy value ("1", "true", "yes").
The flag is read once, at import time.
"""

import os

_FLAG = "TRFUNNEL_DISABLE_NUMBA"


def _disabled_by_env():
    return os.environ.get(_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


try:
    import numba as _numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional speedup
    _numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _disabled_by_env()


def njit(fn):
    """Compile ``fn`` in nopython mode when numba is importable.

    Returns the plain function otherwise so callers can always invoke the
    decorated name.
    """
    if _numba is None:
        return fn
    return _numba.njit(cache=True, fastmath=False)(fn)
