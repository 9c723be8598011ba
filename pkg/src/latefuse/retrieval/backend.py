"""Kernel backend selection.

The compiled Cython kernels are preferred; the pure NumPy fallback is used
when the extension is missing or when LATEFUSE_BACKEND=python is set.
"""

from __future__ import annotations

import os

_forced = os.environ.get("LATEFUSE_BACKEND", "").lower()

if _forced == "python":
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels_py as kernels  # type: ignore[no-redef]

BACKEND = kernels.BACKEND_NAME

search_layer = kernels.search_layer
select_heuristic = kernels.select_heuristic


def get_backend(name: str | None = None):
    """Explicit backend handle, mainly for benchmarks ("compiled"/"python")."""
    if name in (None, "", "auto"):
        return kernels
    if name == "python":
        from . import _kernels_py
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend: {name!r}")
