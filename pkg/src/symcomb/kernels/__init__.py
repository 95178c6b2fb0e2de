"""Hot kernels: compiled extension when available, numpy fallback otherwise."""
import os

BACKEND = "python"
try:
    if os.environ.get("SYMCOMB_PURE_PYTHON"):
        raise ImportError
    from ._schur_ext import schur_block  # type: ignore
    BACKEND = "cython"
except ImportError:  # pragma: no cover - exercised when the extension is absent
    from ._schur_py import schur_block

from ._schur_py import schur_block as schur_block_py

__all__ = ["schur_block", "schur_block_py", "BACKEND"]
