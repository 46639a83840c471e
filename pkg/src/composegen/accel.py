"""Numba acceleration toggle.

Hot pixel kernels ship in two variants: a numba ``@njit`` loop version and a
vectorized pure-numpy version. Set ``COMPOSEGEN_NO_NUMBA=1`` to force the
numpy path (useful on platforms without a working numba, and for benchmarking
one against the other).
"""

import os

NUMBA_ENABLED = os.environ.get("COMPOSEGEN_NO_NUMBA", "0") not in ("1", "true", "yes")

if NUMBA_ENABLED:
    try:
        import numba  # noqa: F401
    except ImportError:
        NUMBA_ENABLED = False


def njit_or_fallback(func):
    """Compile with numba when enabled, otherwise return func unchanged."""
    if NUMBA_ENABLED:
        import numba

        return numba.njit(cache=True)(func)
    return func
