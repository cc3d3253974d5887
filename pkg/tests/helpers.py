"""Shared test utilities: dense operands and scalar brute-force oracles."""

import numpy as np

from loops_spmm import CsrMatrix, Precision


def dense_operand(nrows, ncols, precision=Precision.FP64, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(nrows, ncols)).astype(precision.dtype)


def coo_to_dense(nrows, ncols, entries):
    """Scalar accumulation of (row, col, val) triplets into a dense array."""
    out = np.zeros((nrows, ncols), dtype=np.float64)
    for r, c, v in entries:
        out[r, c] += v
    return out


def csr_to_entries(m: CsrMatrix):
    rows = np.repeat(np.arange(m.nrows), np.diff(m.row_ptr))
    return list(zip(rows.tolist(), m.col_idx.tolist(), m.vals.tolist()))


def dense_gemm_oracle(a_dense, b):
    """Brute-force GEMM in float64, independent of every kernel path."""
    a64 = np.asarray(a_dense, dtype=np.float64)
    b64 = np.asarray(b, dtype=np.float64)
    n, m, k = a64.shape[0], b64.shape[1], a64.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for p in range(k):
                acc += a64[i, p] * b64[p, j]
            out[i, j] = acc
    return out
