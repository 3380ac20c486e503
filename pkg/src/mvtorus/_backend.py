"""Kernel backend selection.

The hot loops in :mod:`mvtorus.kernels` exist twice: a numba ``@njit`` version
and a pure-numpy version. ``MVTORUS_BACKEND=numpy`` forces the fallback, the
default is numba whenever it can be imported.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

ENV_FLAG = "MVTORUS_BACKEND"
BACKENDS = ("numba", "numpy")


def _requested():
    value = os.environ.get(ENV_FLAG, "numba").strip().lower()
    if value not in BACKENDS:
        raise ValueError(f"{ENV_FLAG} must be one of {BACKENDS}, got {value!r}")
    return value


HAVE_NUMBA = numba is not None
DEFAULT_BACKEND = "numba" if (_requested() == "numba" and HAVE_NUMBA) else "numpy"


def resolve(backend=None):
    """Return the backend name to use for a call, honouring an explicit override."""
    if backend is None:
        return DEFAULT_BACKEND
    backend = backend.lower()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        return "numpy"
    return backend


def njit(func):
    if numba is None:
        return func
    return numba.njit(cache=True, fastmath=False)(func)
