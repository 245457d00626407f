"""Kernel backend selection.

Two interchangeable kernel modules exist: numba-compiled loops and pure
numpy. The active one is chosen by the ASCERTAIN_BACKEND environment
variable ("auto", "numba", "numpy"; default "auto" prefers numba when it
imports). Tests and benchmarks can switch explicitly with `use`.
"""

import contextlib
import os

from . import _kernels_numpy
from .errors import ValidationError

_CHOICES = ("auto", "numba", "numpy")

_active_name = None
_active_module = None


def _load_numba_kernels():
    from . import _kernels_numba

    return _kernels_numba


def _numba_available():
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def _resolve(name):
    if name not in _CHOICES:
        raise ValidationError(
            f"unknown backend {name!r}; expected one of {', '.join(_CHOICES)}"
        )
    if name == "auto":
        name = "numba" if _numba_available() else "numpy"
    if name == "numba":
        if not _numba_available():
            raise ValidationError("numba backend requested but numba is not importable")
        return "numba", _load_numba_kernels()
    return "numpy", _kernels_numpy


def active():
    """Return the active kernel module, initializing it on first use."""
    global _active_name, _active_module
    if _active_module is None:
        requested = os.environ.get("ASCERTAIN_BACKEND", "auto")
        _active_name, _active_module = _resolve(requested)
    return _active_module


def active_name():
    active()
    return _active_name


@contextlib.contextmanager
def use(name):
    """Temporarily switch the kernel backend."""
    global _active_name, _active_module
    prev = _active_name, _active_module
    _active_name, _active_module = _resolve(name)
    try:
        yield _active_module
    finally:
        _active_name, _active_module = prev
