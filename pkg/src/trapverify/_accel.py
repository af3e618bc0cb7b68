"""Backend selection for the hot kernels.

Set ``TRAPVERIFY_NO_NUMBA=1`` to force the pure-numpy implementations. Numba is
also skipped automatically when it cannot be imported.
"""
from __future__ import annotations

import os

_FLAG = os.environ.get("TRAPVERIFY_NO_NUMBA", "").strip().lower()
DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(fn):
    """Compile ``fn`` with numba when available, otherwise return it unchanged."""
    if not HAVE_NUMBA:
        return fn
    return _numba.njit(cache=True, nogil=True)(fn)
