# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Schur-complement kernel: M[i, j] = Tr(A_i X A_j Zinv) over one block."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef void _row_product(const long long[:] indptr, const long long[:] indices, const double[:] data,
                       const double[:, ::1] X, const double[:, ::1] Zinv, Py_ssize_t i,
                       double[:, ::1] T) noexcept nogil:
    # T = X A_i Zinv, with A_i given by its nonzeros (p, q, a)
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t k, p, q, r, s
    cdef double a, xa
    for r in range(n):
        for s in range(n):
            T[r, s] = 0.0
    for k in range(indptr[i], indptr[i + 1]):
        p = indices[k] // n
        q = indices[k] % n
        a = data[k]
        for r in range(n):
            xa = a * X[r, p]
            if xa != 0.0:
                for s in range(n):
                    T[r, s] += xa * Zinv[q, s]


def schur_block(indptr, indices, data, X, Zinv):
    """Dense M with M[i, j] = Tr(A_i X A_j Zinv) for the CSR rows A_i of one block."""
    cdef const long long[:] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const long long[:] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[:] dv = np.ascontiguousarray(data, dtype=np.float64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] Zv = np.ascontiguousarray(Zinv, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0]
    cdef Py_ssize_t r = ip.shape[0] - 1
    out = np.zeros((r, r))
    cdef double[:, ::1] M = out
    cdef double[:, ::1] T = np.empty((n, n))
    cdef Py_ssize_t i, j, k, p, q
    cdef double acc
    with nogil:
        for i in range(r):
            _row_product(ip, ix, dv, Xv, Zv, i, T)
            for j in range(i + 1):
                acc = 0.0
                for k in range(ip[j], ip[j + 1]):
                    p = ix[k] // n
                    q = ix[k] % n
                    # Tr(A_j T) with A_j symmetric
                    acc += dv[k] * T[q, p]
                M[i, j] = acc
                M[j, i] = acc
    return out
