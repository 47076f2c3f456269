"""Selects the compiled kernels when available, the Python ones otherwise.

Set ``MULTISCALE_MDP_PURE_PYTHON=1`` to force the fallback (the benchmark
and the equivalence tests switch backends through :func:`get_backend`).
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

COMPILED_AVAILABLE = _ckernels is not None


def get_backend(name: str | None = None) -> ModuleType:
    """Kernel module: ``"compiled"``, ``"python"`` or ``None`` for the default."""
    if name is None:
        forced = os.environ.get("MULTISCALE_MDP_PURE_PYTHON", "") not in ("", "0")
        name = "python" if forced or not COMPILED_AVAILABLE else "compiled"
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built; reinstall the package")
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def backend_name() -> str:
    return "compiled" if get_backend() is not _pykernels else "python"
