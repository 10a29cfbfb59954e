# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Pool-adjacent-violators kernels.

The monotone-cone projection is the one hot loop in the Monte-Carlo engine
that cannot be vectorized across replications with numpy (the merge pattern
is data dependent), so it lives here.  `conelrt._kernels._pava_py` provides
a pure-Python implementation with the same interface; the package selects
between the two at import time.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _pava_row(const double* y, double* fit, double* bsum,
                                 double* bcnt, Py_ssize_t* bstart,
                                 Py_ssize_t n) nogil:
    """PAVA on one row.  Returns the number of blocks.

    Merging uses `>=` on block means so that ties pool into a single block;
    block values are therefore strictly increasing.
    """
    cdef Py_ssize_t top = -1
    cdef Py_ssize_t i, b, j, pos
    cdef double v
    for i in range(n):
        top += 1
        bsum[top] = y[i]
        bcnt[top] = 1.0
        bstart[top] = i
        while top > 0 and bsum[top - 1] * bcnt[top] >= bsum[top] * bcnt[top - 1]:
            bsum[top - 1] += bsum[top]
            bcnt[top - 1] += bcnt[top]
            top -= 1
    pos = 0
    for b in range(top + 1):
        v = bsum[b] / bcnt[b]
        j = <Py_ssize_t> bcnt[b]
        while j > 0:
            fit[pos] = v
            pos += 1
            j -= 1
    return top + 1


def pava_batch(cnp.ndarray[cnp.float64_t, ndim=2] Y not None):
    """Row-wise isotonic (monotone nondecreasing) least-squares fit.

    Returns (fit, nblocks) where fit has the shape of Y and nblocks[i] is
    the number of constant blocks in row i.
    """
    cdef Py_ssize_t m = Y.shape[0]
    cdef Py_ssize_t n = Y.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] F = np.empty((m, n), dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] nb = np.empty(m, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bsum = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bcnt = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] bstart = np.empty(n, dtype=np.intp)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Yc = np.ascontiguousarray(Y)
    cdef Py_ssize_t i
    for i in range(m):
        nb[i] = _pava_row(&Yc[i, 0], &F[i, 0], &bsum[0], &bcnt[0],
                          <Py_ssize_t*> &bstart[0], n)
    return F, nb


def pava_single(cnp.ndarray[cnp.float64_t, ndim=1] y not None):
    """Isotonic fit of one vector.  Returns (fit, block_starts)."""
    cdef Py_ssize_t n = y.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] fit = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bsum = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bcnt = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] bstart = np.empty(n, dtype=np.intp)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] yc = np.ascontiguousarray(y)
    cdef Py_ssize_t nb = _pava_row(&yc[0], &fit[0], &bsum[0], &bcnt[0],
                                   <Py_ssize_t*> &bstart[0], n)
    return fit, np.asarray(bstart[:nb]).copy()
