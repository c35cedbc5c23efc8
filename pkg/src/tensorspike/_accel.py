"""Backend selection for the compiled kernels.

Set ``TENSORSPIKE_BACKEND=numpy`` to force the pure-numpy fallback.  The
default is ``numba`` whenever numba can be imported.
"""

from __future__ import annotations

import os

try:  # pragma: no cover - exercised implicitly
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

_ENV = os.environ.get("TENSORSPIKE_BACKEND", "numba").strip().lower()
if _ENV not in ("numba", "numpy"):
    raise ImportError(f"TENSORSPIKE_BACKEND must be 'numba' or 'numpy', got {_ENV!r}")

HAVE_NUMBA = _numba is not None
DEFAULT_BACKEND = "numba" if (_ENV == "numba" and HAVE_NUMBA) else "numpy"


def resolve_backend(backend: str | None) -> str:
    """Map ``None`` to the default backend and validate explicit choices."""
    if backend is None:
        return DEFAULT_BACKEND
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


def njit(*args, **kwargs):
    """``numba.njit`` with caching, or an identity decorator without numba."""
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return _numba.njit(*args, **kwargs)


if HAVE_NUMBA:
    prange = _numba.prange
else:  # pragma: no cover
    prange = range


def set_threads(n: int | None) -> int:
    """Cap the numba worker count; returns the value in effect."""
    if not HAVE_NUMBA:
        return 1
    limit = _numba.config.NUMBA_NUM_THREADS
    if n is not None:
        _numba.set_num_threads(max(1, min(int(n), limit)))
    return _numba.get_num_threads()
