"""Selects the render kernel implementation at import time.

The compiled extension is preferred. Setting ``SPECTRACK_PURE=1`` in the
environment forces the numpy fallback.
"""

import os

from . import _fallback

if os.environ.get("SPECTRACK_PURE", "") not in ("", "0"):
    kernels = _fallback
    NAME = "numpy"
else:
    try:
        from . import _kernels as kernels
        NAME = "cython"
    except ImportError:
        kernels = _fallback
        NAME = "numpy"


def available():
    """Return ``{name: module}`` for every kernel implementation that imports."""
    found = {"numpy": _fallback}
    try:
        from . import _kernels
        found["cython"] = _kernels
    except ImportError:
        pass
    return found
