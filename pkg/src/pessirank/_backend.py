"""Kernel backend selection, done once at import."""
import os

if os.environ.get("PESSIRANK_PURE_PYTHON"):
    from pessirank import _fallback as kernels

    BACKEND = "python"
else:
    try:
        from pessirank import _speedups as kernels

        BACKEND = "compiled"
    except ImportError:
        from pessirank import _fallback as kernels

        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
