"""Pick the sequence kernel at import time.

The compiled extension is used when it was built; otherwise the pure-Python
kernel takes over. Set ``RNNEVO_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _pykernel


def _load_compiled():
    try:
        from . import _kernel
    except ImportError:
        return None
    return _kernel


_compiled = _load_compiled()


def get_backend(name: str | None = None):
    """Return a kernel module by name ("cython" or "python"), or the default."""
    name = name or os.environ.get("RNNEVO_BACKEND") or ("cython" if _compiled else "python")
    if name == "python":
        return _pykernel
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernel rnnevo._kernel is not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def available() -> list[str]:
    return ["cython", "python"] if _compiled else ["python"]


kernel = get_backend()
