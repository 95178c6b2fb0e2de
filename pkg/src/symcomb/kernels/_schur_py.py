"""Pure numpy Schur-complement kernel (fallback for the compiled version)."""
import numpy as np


def schur_block(indptr, indices, data, X, Zinv):
    """Dense M with M[i, j] = Tr(A_i X A_j Zinv) for the CSR rows A_i of one block.

    Row i of the CSR matrix is the row-major vectorization of a symmetric
    n x n matrix A_i.
    """
    n = X.shape[0]
    r = len(indptr) - 1
    Ad = np.zeros((r, n * n))
    for i in range(r):
        lo, hi = indptr[i], indptr[i + 1]
        Ad[i, indices[lo:hi]] = data[lo:hi]
    T = np.matmul(np.matmul(X, Ad.reshape(r, n, n)), Zinv).reshape(r, n * n)
    M = T @ Ad.T
    return (M + M.T) / 2
