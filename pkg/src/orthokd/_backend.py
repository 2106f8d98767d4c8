"""Kernel selection, resolved once at import.

The compiled extension is preferred.  ``ORTHOKD_PURE_PYTHON=1`` forces the
numpy fallback, which is also used when the extension was never built.
"""
import os

from . import _fallback

NAME = "python"
gemm = _fallback.gemm
col_dist = _fallback.col_dist

if not os.environ.get("ORTHOKD_PURE_PYTHON"):
    try:
        from . import _kernels
    except ImportError:  # extension not built
        pass
    else:
        NAME = "cython"
        gemm = _kernels.gemm
        col_dist = _kernels.col_dist
