# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: patch extraction, max-pooling and canonical row ordering."""
import numpy as np

cimport numpy as cnp
from libc.stdlib cimport qsort
from libc.string cimport memcpy

cnp.import_array()


def extract_patches(const double[:, :, :, ::1] maps, Py_ssize_t window, Py_ssize_t stride):
    cdef Py_ssize_t n = maps.shape[0], h = maps.shape[1], w = maps.shape[2], c = maps.shape[3]
    cdef Py_ssize_t oh = (h - window) // stride + 1
    cdef Py_ssize_t ow = (w - window) // stride + 1
    # one window row (window columns x c channels) is contiguous in a C-ordered map
    cdef Py_ssize_t row_len = window * c
    out = np.empty((n * oh * ow, window * window * c), dtype=np.float64)
    if out.size == 0:
        return out
    cdef double[:, ::1] dst = out
    cdef double* row
    cdef Py_ssize_t i, y, x, dy, r = 0
    with nogil:
        for i in range(n):
            for y in range(oh):
                for x in range(ow):
                    row = &dst[r, 0]
                    for dy in range(window):
                        memcpy(row + dy * row_len, &maps[i, y * stride + dy, x * stride, 0],
                               row_len * sizeof(double))
                    r += 1
    return out


def max_pool(const double[:, :, :, ::1] maps, Py_ssize_t pool):
    cdef Py_ssize_t n = maps.shape[0], c = maps.shape[3]
    cdef Py_ssize_t oh = maps.shape[1] // pool, ow = maps.shape[2] // pool
    out = np.empty((n, oh, ow, c), dtype=np.float64)
    if out.size == 0:
        return out
    cdef double[:, :, :, ::1] dst = out
    cdef Py_ssize_t i, y, x, ch, dy, dx
    cdef double best, v
    with nogil:
        for i in range(n):
            for y in range(oh):
                for x in range(ow):
                    for ch in range(c):
                        best = maps[i, y * pool, x * pool, ch]
                        for dy in range(pool):
                            for dx in range(pool):
                                v = maps[i, y * pool + dy, x * pool + dx, ch]
                                if v > best:
                                    best = v
                        dst[i, y, x, ch] = best
    return out


# qsort comparators cannot take context; these are only touched with the GIL held
cdef const double* _rows
cdef Py_ssize_t _dim


cdef int _compare_rows(const void* a, const void* b) noexcept nogil:
    cdef Py_ssize_t ia = (<const Py_ssize_t*>a)[0], ib = (<const Py_ssize_t*>b)[0]
    cdef const double* pa = _rows + ia * _dim
    cdef const double* pb = _rows + ib * _dim
    cdef Py_ssize_t k
    for k in range(_dim):
        if pa[k] < pb[k]:
            return -1
        if pa[k] > pb[k]:
            return 1
    return (ia > ib) - (ia < ib)


def lex_order(const double[:, ::1] rows):
    """Row indices in lexicographic order, ties by index (same as a stable lexsort)."""
    global _rows, _dim
    cdef Py_ssize_t n = rows.shape[0]
    order = np.arange(n, dtype=np.intp)
    if n < 2 or rows.shape[1] == 0:
        return order
    cdef Py_ssize_t[::1] idx = order
    _rows = &rows[0, 0]
    _dim = rows.shape[1]
    qsort(&idx[0], n, sizeof(Py_ssize_t), _compare_rows)
    _rows = NULL
    return order
