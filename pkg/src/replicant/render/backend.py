"""Rasterizer backend selection.

The compiled Cython kernel is used when its extension imported cleanly;
otherwise we fall back to the numpy implementation. Override with
REPLICANT_BACKEND=numpy|compiled (requesting ``compiled`` without the
extension built is an error).
"""

from __future__ import annotations

import os
from types import ModuleType

from . import numpy_backend

_compiled: ModuleType | None
try:
    from . import _rasterizer as _compiled_mod

    _compiled = _compiled_mod
except ImportError:
    _compiled = None

_forced: ModuleType | None = None


def active() -> ModuleType:
    if _forced is not None:
        return _forced
    choice = os.environ.get("REPLICANT_BACKEND", "").lower()
    if choice == "numpy":
        return numpy_backend
    if choice == "compiled":
        if _compiled is None:
            raise RuntimeError("REPLICANT_BACKEND=compiled but the extension is not built")
        return _compiled
    return _compiled if _compiled is not None else numpy_backend


def active_name() -> str:
    mod = active()
    return "compiled" if mod is _compiled and _compiled is not None else "numpy"


def has_compiled() -> bool:
    return _compiled is not None


class use_backend:
    """Context manager pinning the backend, for tests and benchmarks."""

    def __init__(self, name: str):
        self.name = name
        self._prev: ModuleType | None = None

    def __enter__(self):
        global _forced
        self._prev = _forced
        if self.name == "numpy":
            _forced = numpy_backend
        elif self.name == "compiled":
            if _compiled is None:
                raise RuntimeError("compiled backend unavailable")
            _forced = _compiled
        else:
            raise ValueError(f"unknown backend: {self.name}")
        return self

    def __exit__(self, *exc):
        global _forced
        _forced = self._prev
        return False
