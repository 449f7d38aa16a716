"""Hot-loop kernels: compiled extension when available, numpy fallback otherwise.

Both backends implement identical semantics (and bit-identical distance
comparisons; the extension is built with FMA contraction disabled). Set
AUTOLABEL3D_PURE=1 to force the numpy implementation.
"""

import os

if os.environ.get("AUTOLABEL3D_PURE", "0") not in ("", "0"):
    from . import pure as _impl
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        from . import pure as _impl  # type: ignore[no-redef]

BACKEND: str = _impl.BACKEND
dbscan_labels = _impl.dbscan_labels
lshape_scores = _impl.lshape_scores
nearest_neighbors = _impl.nearest_neighbors

__all__ = ["BACKEND", "dbscan_labels", "lshape_scores", "nearest_neighbors"]
