"""Numba switch.

Set ``ERGOTRANSPORT_DISABLE_NUMBA=1`` to force the pure-numpy kernels (useful
for debugging and for checking that both paths agree).
"""

import os

_DISABLED = os.environ.get("ERGOTRANSPORT_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


def backend():
    return "numba" if HAS_NUMBA else "numpy"
