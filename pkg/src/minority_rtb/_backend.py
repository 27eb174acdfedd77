"""Kernel backend selection.

The compiled ``_core`` extension is used when importable. Set
``MINORITY_RTB_BACKEND=python`` to force the numpy fallback, or
``MINORITY_RTB_BACKEND=compiled`` to fail loudly when the extension is
missing.
"""
import os

from . import _pycore

_choice = os.environ.get("MINORITY_RTB_BACKEND", "auto").lower()

if _choice == "python":
    kernels = _pycore
    BACKEND = "python"
else:
    try:
        from . import _core as kernels
        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise
        kernels = _pycore
        BACKEND = "python"

nearest_centroid = kernels.nearest_centroid
centroid_sums = kernels.centroid_sums
mg_play = kernels.mg_play
mg_update = kernels.mg_update

__all__ = [
    "BACKEND",
    "nearest_centroid",
    "centroid_sums",
    "mg_play",
    "mg_update",
]
