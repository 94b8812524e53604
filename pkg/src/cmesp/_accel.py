"""Optional numba acceleration.

Set ``CMESP_DISABLE_NUMBA=1`` in the environment before import to force the
pure-numpy kernels (useful for debugging and for the benchmark baseline).
"""

import os

try:
    from numba import njit as _njit

    NUMBA_INSTALLED = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_INSTALLED = False

USE_NUMBA = NUMBA_INSTALLED and os.environ.get("CMESP_DISABLE_NUMBA", "0").lower() not in (
    "1",
    "true",
    "yes",
)


def optional_njit(*args, **kwargs):
    """``numba.njit`` when available, identity otherwise.

    Unlike the module-level flag this always compiles if numba is installed,
    so the benchmark can time both variants in one process.
    """

    def decorator(func):
        if NUMBA_INSTALLED:
            return _njit(*args, **kwargs)(func)
        return func

    return decorator
