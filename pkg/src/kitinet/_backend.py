"""Selects the compiled kernels when importable, else the Python fallback.

Set ``KITINET_PURE_PYTHON=1`` to force the fallback at import time, or call
:func:`use` at runtime.
"""
import os

from . import _pykernels

try:
    if os.environ.get("KITINET_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("compiled kernels disabled by KITINET_PURE_PYTHON")
    from . import _ckernels
except ImportError:
    _ckernels = None

_active = "compiled" if _ckernels is not None else "python"


def available():
    return ("compiled", "python") if _ckernels is not None else ("python",)


def use(name):
    """Switch backend; returns the previous name."""
    global _active
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and _ckernels is None:
        raise RuntimeError("compiled kernels are not built")
    prev, _active = _active, name
    return prev


def name():
    return _active


def compiled():
    """The compiled module if active, else None."""
    return _ckernels if _active == "compiled" else None


def dsmc_collide():
    return _ckernels.dsmc_collide if _active == "compiled" else _pykernels.dsmc_collide
