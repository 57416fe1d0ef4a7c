"""Optional numba acceleration.

Set ``MAGWELL_NUMBA=0`` in the environment to force the pure-numpy paths.
Both implementations of every kernel stay importable so tests and the
benchmark can compare them directly.
"""
import os

_flag = os.environ.get("MAGWELL_NUMBA", "1").strip().lower()
_wanted = _flag not in ("0", "false", "no", "off")

try:
    if not _wanted:
        raise ImportError("disabled by MAGWELL_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def backend():
    return "numba" if HAS_NUMBA else "numpy"
