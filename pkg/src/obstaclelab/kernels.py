"""Kernel selection: compiled extension when importable, pure Python otherwise.

Set ``OBSTACLELAB_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _psor_py

BACKEND = "python"
psor_sweep = _psor_py.psor_sweep

if os.environ.get("OBSTACLELAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._psor import psor_sweep  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

__all__ = ["psor_sweep", "BACKEND"]
