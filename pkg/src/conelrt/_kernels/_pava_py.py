"""Pure-Python fallback for the pool-adjacent-violators kernels.

Same interface as the compiled module `conelrt._kernels._pava`; used when
the extension is unavailable or CONELRT_FORCE_PYTHON is set.
"""

import numpy as np


def _pava_row(y, fit, bsum, bcnt, bstart):
    n = y.shape[0]
    top = -1
    for i in range(n):
        top += 1
        bsum[top] = y[i]
        bcnt[top] = 1
        bstart[top] = i
        # >= on block means pools ties, so block values end up strictly increasing
        while top > 0 and bsum[top - 1] * bcnt[top] >= bsum[top] * bcnt[top - 1]:
            bsum[top - 1] += bsum[top]
            bcnt[top - 1] += bcnt[top]
            top -= 1
    nb = top + 1
    pos = 0
    for b in range(nb):
        c = bcnt[b]
        fit[pos:pos + c] = bsum[b] / c
        pos += c
    return nb


def pava_batch(Y):
    """Row-wise isotonic (monotone nondecreasing) least-squares fit."""
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    m, n = Y.shape
    F = np.empty_like(Y)
    nb = np.empty(m, dtype=np.int64)
    bsum = np.empty(n, dtype=np.float64)
    bcnt = np.empty(n, dtype=np.int64)
    bstart = np.empty(n, dtype=np.int64)
    for i in range(m):
        nb[i] = _pava_row(Y[i], F[i], bsum, bcnt, bstart)
    return F, nb


def pava_single(y):
    """Isotonic fit of one vector.  Returns (fit, block_starts)."""
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.shape[0]
    fit = np.empty(n, dtype=np.float64)
    bsum = np.empty(n, dtype=np.float64)
    bcnt = np.empty(n, dtype=np.int64)
    bstart = np.empty(n, dtype=np.int64)
    nb = _pava_row(y, fit, bsum, bcnt, bstart)
    return fit, bstart[:nb].copy()
