"""Kernel selection: compiled extension when importable, NumPy fallback otherwise.

Set ``CATWELL_PURE_PYTHON=1`` to force the fallback (benchmarks, debugging).
"""

from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
_compiled = None

if os.environ.get("CATWELL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _compiled = None

cn_steps = _compiled.cn_steps if _compiled is not None else _fallback.cn_steps


def get_backend(name: str | None = None):
    """Return the kernel namespace by name ('compiled' or 'python'); default: active one."""
    name = name or BACKEND
    if name == "python":
        return _fallback
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not available; build with `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def has_compiled() -> bool:
    return _compiled is not None
