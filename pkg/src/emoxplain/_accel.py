"""Backend selection for the numeric kernels.

Kernels are compiled with numba when it is importable. Setting
``EMOXPLAIN_DISABLE_NUMBA=1`` forces the vectorized numpy implementations,
which must agree with the compiled ones (see ``tests/test_kernels.py``).
"""

from __future__ import annotations

import os

_FALSY = {"", "0", "false", "no", "off"}


def numba_disabled_by_env() -> bool:
    return os.environ.get("EMOXPLAIN_DISABLE_NUMBA", "").strip().lower() not in _FALSY


try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and not numba_disabled_by_env()


def njit(*args, **kwargs):
    """``numba.njit`` with caching, or a no-op decorator when numba is absent."""
    if _numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return _numba.njit(*args, **kwargs)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
