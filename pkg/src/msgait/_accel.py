"""Optional numba acceleration.

Set ``MSGAIT_DISABLE_NUMBA=1`` to force the pure-numpy code paths. When numba
is not importable the numpy paths are used automatically.
"""
import os
import warnings

_FALSY = {"", "0", "false", "no", "off"}

NUMBA_REQUESTED = os.environ.get("MSGAIT_DISABLE_NUMBA", "").strip().lower() in _FALSY

try:
    if not NUMBA_REQUESTED:
        raise ImportError("numba disabled via MSGAIT_DISABLE_NUMBA")
    import numba
    from numba import njit, prange

    # an outdated system TBB only means numba falls back to another threading layer
    warnings.filterwarnings("ignore", message=".*TBB threading layer.*")
    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        """No-op stand-in for ``numba.njit``."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap
