"""Kernel backend selection.

The compiled extension is used when importable; otherwise (or when the
environment variable ``TRAFFICLAB_PURE_PYTHON`` is set to a non-empty value
other than ``0``) the pure-Python twin is used.  Both produce identical
results for identical generator states.
"""
from __future__ import annotations

import os

from . import _kernels_py

_py = _kernels_py
try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_force_py = os.environ.get("TRAFFICLAB_PURE_PYTHON", "") not in ("", "0")
impl = _py if (_compiled is None or _force_py) else _compiled
BACKEND = impl.BACKEND


def backend(name: str | None = None):
    """Return a kernel module: 'compiled', 'python', or the active one."""
    if name is None:
        return impl
    if name == "python":
        return _py
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def available() -> list[str]:
    return ["python"] + (["compiled"] if _compiled is not None else [])
