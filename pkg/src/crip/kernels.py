"""Hot-loop backend selection.

The compiled extension is used when it was built; set ``CRIP_PURE_PYTHON=1``
to force the NumPy fallback.  ``BACKEND`` names whichever one was loaded.
"""

import os

from . import _kernels_py

if os.environ.get("CRIP_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

reaction_update = _impl.reaction_update
neg_laplacian_3d = _impl.neg_laplacian_3d
pair_exchange = _impl.pair_exchange
pair_rate_rowsum = _impl.pair_rate_rowsum

__all__ = ["BACKEND", "reaction_update", "neg_laplacian_3d", "pair_exchange", "pair_rate_rowsum"]
