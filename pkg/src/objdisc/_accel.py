"""Backend selection for the hot kernels.

Kernels in :mod:`objdisc.kernels` come in two flavours: a numba-compiled
loop version and a pure-numpy (or plain Python) fallback.  The active
backend is read from the ``OBJDISC_BACKEND`` environment variable at import
time (``numba`` or ``numpy``) and can be switched at runtime with
:func:`set_backend` or the :func:`backend` context manager.
"""

from __future__ import annotations

import contextlib
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

BACKENDS = ("numba", "numpy")

HAVE_NUMBA = numba is not None


def _initial_backend() -> str:
    name = os.environ.get("OBJDISC_BACKEND", "numba").strip().lower()
    if name not in BACKENDS:
        raise ValueError(f"OBJDISC_BACKEND must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


_backend = _initial_backend()


def get_backend() -> str:
    return _backend


def use_numba() -> bool:
    return _backend == "numba"


def set_backend(name: str) -> None:
    global _backend
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextlib.contextmanager
def backend(name: str):
    """Temporarily switch the kernel backend."""
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def njit(fn):
    """Compile ``fn`` with numba when available, else return it unchanged.

    The original Python function stays reachable as ``.py_func`` either way.
    """
    if not HAVE_NUMBA:
        fn.py_func = fn
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
