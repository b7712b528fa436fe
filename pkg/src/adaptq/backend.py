"""Selects the Q-network math backend at import time.

The compiled extension (adaptq._qnet_core) is preferred; the numpy module
is the fallback.  ADAPTQ_BACKEND=numpy|cython forces a choice, and
load_backend() lets tests and benchmarks address both explicitly.
"""

from __future__ import annotations

import os

from . import _qnet_numpy


def load_backend(name: str):
    if name == "numpy":
        return _qnet_numpy
    if name == "cython":
        from . import _qnet_core

        return _qnet_core
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    names = []
    try:
        load_backend("cython")
        names.append("cython")
    except ImportError:
        pass
    names.append("numpy")
    return names


def default_backend():
    forced = os.environ.get("ADAPTQ_BACKEND", "").strip().lower()
    if forced:
        return load_backend(forced)
    try:
        return load_backend("cython")
    except ImportError:
        return _qnet_numpy
