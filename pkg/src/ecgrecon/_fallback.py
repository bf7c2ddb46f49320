"""Pure numpy versions of the compiled kernels in ``_ext.pyx``.

Same signatures and semantics; used when the extension is not built or
``ECGR_PURE_PYTHON=1`` is set.
"""

import numpy as np


def col2im2d(cols, b, c, hp, wp, kh, kw, sh, sw, ho, wo):
    cols = np.ascontiguousarray(cols.reshape(b, ho, wo, c, kh, kw).transpose(4, 5, 0, 1, 2, 3))
    canvas = np.zeros((b, hp, wp, c), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            canvas[:, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += cols[i, j]
    return np.ascontiguousarray(canvas.transpose(0, 3, 1, 2))


def dtw(a, b):
    """Row-vectorized DTW returning ``(cost, path_length)``.

    Within a row the horizontal recurrence ``D[j] = min(v[j], D[j-1] + c[j])``
    unrolls to ``D[j] = C[j] + min_{k<=j} (v[k] - C[k])`` with ``C`` the
    running sum of local costs, which ``minimum.accumulate`` evaluates.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = a.size, b.size
    idx = np.arange(m)
    cost = np.abs(a[0] - b)
    prev = np.cumsum(cost)
    lprev = idx + 1
    for i in range(1, n):
        cost = np.abs(a[i] - b)
        # best non-horizontal predecessor, diagonal preferred on ties
        diag = np.empty(m)
        diag[0] = np.inf
        diag[1:] = prev[:-1]
        ldiag = np.empty(m, dtype=lprev.dtype)
        ldiag[0] = 0
        ldiag[1:] = lprev[:-1]
        up_better = prev < diag
        v = np.where(up_better, prev, diag) + cost
        lv = np.where(up_better, lprev, ldiag) + 1
        csum = np.cumsum(cost)
        key = v - csum
        run = np.minimum.accumulate(key)
        # latest index attaining the running minimum -> fewest horizontal steps
        hit = np.where(key <= run, idx, 0)
        k = np.maximum.accumulate(hit)
        cur = np.where(k == idx, v, run + csum)
        lcur = lv[k] + (idx - k)
        prev, lprev = cur, lcur
    return float(prev[-1]), int(lprev[-1])


def dtw_many(a, b):
    """Row-by-row :func:`dtw` of two ``(P, n)`` and ``(P, m)`` matrices.

    Many short rows are vectorized across the batch with the scalar cell
    recurrence; few long rows go through :func:`dtw` one at a time. Tie order
    is the same either way.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ValueError("a and b need the same number of rows")
    n, m = a.shape[1], b.shape[1]
    if a.shape[0] < m:
        res = [dtw(x, y) for x, y in zip(a, b)]
        return (np.array([c for c, _ in res], dtype=np.float64),
                np.array([k for _, k in res], dtype=np.int_))
    prev = np.cumsum(np.abs(a[:, :1] - b), axis=1)
    lprev = np.broadcast_to(np.arange(1, m + 1), prev.shape).copy()
    for i in range(1, n):
        c = np.abs(a[:, i:i + 1] - b)
        cur = np.empty_like(prev)
        lcur = np.empty_like(lprev)
        cur[:, 0] = prev[:, 0] + c[:, 0]
        lcur[:, 0] = lprev[:, 0] + 1
        for j in range(1, m):
            best, blen = prev[:, j - 1], lprev[:, j - 1]
            up = prev[:, j] < best
            best = np.where(up, prev[:, j], best)
            blen = np.where(up, lprev[:, j], blen)
            left = cur[:, j - 1] < best
            best = np.where(left, cur[:, j - 1], best)
            blen = np.where(left, lcur[:, j - 1], blen)
            cur[:, j] = best + c[:, j]
            lcur[:, j] = blen + 1
        prev, lprev = cur, lcur
    return prev[:, -1].copy(), lprev[:, -1].copy()
