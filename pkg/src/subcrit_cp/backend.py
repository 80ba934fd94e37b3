"""Select the compiled kernels when available, else the Python reference.

Set ``SUBCRIT_CP_PURE_PYTHON=1`` to force the Python implementation.
"""
from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("SUBCRIT_CP_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"


def get(name: str):
    """Return the kernel ``name`` from the active backend."""
    return getattr(kernels, name)
