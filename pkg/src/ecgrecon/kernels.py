"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set ``ECGR_PURE_PYTHON=1`` before import to force the numpy versions.
"""

import os

from . import _fallback

BACKEND = "python"
if os.environ.get("ECGR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ext as _impl
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _fallback
else:
    _impl = _fallback


def col2im2d(cols, b, c, hp, wp, kh, kw, sh, sw, ho, wo):
    if _impl is not _fallback:
        import numpy as np
        cols = np.ascontiguousarray(cols)
    return _impl.col2im2d(cols, b, c, hp, wp, kh, kw, sh, sw, ho, wo)


def dtw(a, b):
    """``(cost, path_length)`` of the optimal alignment of two 1D arrays."""
    if _impl is not _fallback:
        import numpy as np
        a = np.ascontiguousarray(a, dtype=np.float64)
        b = np.ascontiguousarray(b, dtype=np.float64)
    return _impl.dtw(a, b)


def dtw_many(a, b):
    """Pairwise rows: ``(costs, path_lengths)`` for ``a[k]`` against ``b[k]``."""
    import numpy as np
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ValueError("a and b need the same number of rows")
    if a.shape[1] == 0 or b.shape[1] == 0:
        raise ValueError("empty sequences")
    return _impl.dtw_many(a, b)
