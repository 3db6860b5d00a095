"""Pick the compiled kernels when available; ``RHYDE_PURE_PYTHON=1`` forces the fallback."""

import os

from . import _pykernels

if os.environ.get("RHYDE_PURE_PYTHON", "") not in ("", "0"):
    kernels = _pykernels
else:
    try:
        from . import _ckernels as kernels
    except ImportError:
        kernels = _pykernels

BACKEND = "cython" if kernels is not _pykernels else "python"
