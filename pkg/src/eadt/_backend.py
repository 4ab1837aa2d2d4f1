"""Kernel lane selection.

The compiled extension is preferred when importable; the numpy lane is the
fallback. Setting the environment variable ``EADT_PURE_PYTHON`` to a
non-empty value other than "0" forces the numpy lane (useful for
benchmarking and for debugging the kernels).
"""
from __future__ import annotations

import os

if os.environ.get("EADT_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as kernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as kernels  # type: ignore[no-redef]
        BACKEND = "python"


def active_backend() -> str:
    """Name of the kernel lane in use: "cython" or "python"."""
    return BACKEND
