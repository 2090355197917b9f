"""Pick the compiled kernels when available; ``STAYGO_PURE_PYTHON=1`` forces numpy."""
import os

from . import _kernels_py

if os.environ.get("STAYGO_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels_cy as kernels
    except ImportError:
        kernels = _kernels_py

BACKEND = kernels.NAME
