"""Core matrix types, random matrix generation, and the dense reference oracle.

Sparse matrices live in canonical CSR form (sorted, deduplicated, no explicit
zeros); dense operands are plain 2-D C-contiguous numpy arrays. All other
modules build on and verify against the types and the oracle defined here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Precision",
    "CsrMatrix",
    "random_sparse",
    "reference_spmm",
    "densify",
    "error_scale",
    "max_relative_error",
    "SPMM_ERROR_BOUNDS",
]


class Precision(enum.Enum):
    """Value precision of a matrix. FP16 inputs always accumulate in FP32."""

    FP64 = "fp64"
    FP32 = "fp32"
    FP16 = "fp16"

    @property
    def dtype(self) -> np.dtype:
        return _DTYPES[self]

    @property
    def accum_dtype(self) -> np.dtype:
        """Dtype used for products and running sums at this precision."""
        if self is Precision.FP16:
            return np.dtype(np.float32)
        return self.dtype

    @classmethod
    def from_dtype(cls, dtype) -> "Precision":
        dtype = np.dtype(dtype)
        for prec, dt in _DTYPES.items():
            if dt == dtype:
                return prec
        raise ValueError(f"unsupported value dtype {dtype!r}")

    @classmethod
    def parse(cls, name: str) -> "Precision":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown precision {name!r}; expected fp64, fp32 or fp16") from None


_DTYPES = {
    Precision.FP64: np.dtype(np.float64),
    Precision.FP32: np.dtype(np.float32),
    Precision.FP16: np.dtype(np.float16),
}

# Max relative error (against the FP64 oracle, scaled by the row-wise 1-norm
# magnitude) permitted per precision. Shared by `verify` runs and the tests.
SPMM_ERROR_BOUNDS = {
    Precision.FP64: 1e-12,
    Precision.FP32: 1e-5,
    Precision.FP16: 5e-2,
}


@dataclass(frozen=True)
class CsrMatrix:
    """Compressed sparse row matrix in canonical form.

    Canonical means: ``row_ptr`` starts at 0, is non-decreasing and ends at
    nnz; column indices are strictly increasing within each row. Construction
    validates all of this; use :meth:`from_coo` to canonicalize raw triplets.
    """

    nrows: int
    ncols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_ptr", np.ascontiguousarray(self.row_ptr, dtype=np.int64))
        object.__setattr__(self, "col_idx", np.ascontiguousarray(self.col_idx, dtype=np.int64))
        object.__setattr__(self, "vals", np.ascontiguousarray(self.vals))
        self.validate()

    @property
    def nnz(self) -> int:
        return len(self.vals)

    @property
    def precision(self) -> Precision:
        return Precision.from_dtype(self.vals.dtype)

    def validate(self) -> None:
        """Check every canonical-form invariant; raise ValueError on the first failure."""
        if self.nrows < 0 or self.ncols < 0:
            raise ValueError("matrix dimensions must be non-negative")
        if self.vals.dtype not in _DTYPES.values():
            raise ValueError(f"unsupported value dtype {self.vals.dtype!r}")
        if self.row_ptr.shape != (self.nrows + 1,):
            raise ValueError(f"row_ptr must have length nrows+1 = {self.nrows + 1}, got {len(self.row_ptr)}")
        if self.nrows >= 0 and self.row_ptr[0] != 0:
            raise ValueError("row_ptr[0] must be 0")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        nnz = int(self.row_ptr[-1])
        if len(self.col_idx) != nnz or len(self.vals) != nnz:
            raise ValueError("col_idx/vals length must equal row_ptr[-1]")
        if nnz:
            if self.col_idx.min() < 0 or self.col_idx.max() >= self.ncols:
                raise ValueError("column index out of range")
            # Strictly increasing within each row: every adjacent pair must
            # grow unless the second element starts a new row.
            starts = np.zeros(nnz, dtype=bool)
            row_starts = self.row_ptr[1:-1]
            starts[row_starts[row_starts < nnz]] = True
            within = ~starts[1:]
            if np.any(np.diff(self.col_idx)[within] <= 0):
                raise ValueError("column indices must be strictly increasing within each row")

    @classmethod
    def from_coo(cls, nrows, ncols, rows, cols, vals, *, dtype=None, drop_zeros=True) -> "CsrMatrix":
        """Build a canonical CSR matrix from triplets.

        Duplicate (row, col) entries are summed (in float64, then cast to the
        target dtype). Entries whose final value is zero are dropped when
        ``drop_zeros`` is set, so the result carries no explicit zeros.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals)
        if dtype is None:
            dtype = vals.dtype if vals.dtype in _DTYPES.values() else np.float64
        if not (len(rows) == len(cols) == len(vals)):
            raise ValueError("rows, cols and vals must have equal length")
        if len(rows):
            if rows.min() < 0 or rows.max() >= nrows:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= ncols:
                raise ValueError("column index out of range")

        key = rows * np.int64(ncols) + cols
        uniq, inverse = np.unique(key, return_inverse=True)
        if len(uniq) != len(key):
            summed = np.zeros(len(uniq), dtype=np.float64)
            np.add.at(summed, inverse, vals.astype(np.float64))
            vals = summed
            key = uniq
        else:
            order = np.argsort(key, kind="stable")
            key = key[order]
            vals = vals[order]
        vals = vals.astype(dtype)
        if drop_zeros:
            keep = vals != 0
            key = key[keep]
            vals = vals[keep]

        rows = key // ncols if ncols else key
        cols = key % ncols if ncols else key
        row_ptr = np.zeros(nrows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=nrows), out=row_ptr[1:])
        return cls(nrows, ncols, row_ptr, cols, vals)

    def row_slice(self, start: int, stop: int) -> "CsrMatrix":
        """Extract rows [start, stop) as a standalone CSR matrix."""
        if not (0 <= start <= stop <= self.nrows):
            raise ValueError(f"invalid row window [{start}, {stop})")
        lo, hi = self.row_ptr[start], self.row_ptr[stop]
        return CsrMatrix(
            stop - start,
            self.ncols,
            self.row_ptr[start : stop + 1] - lo,
            self.col_idx[lo:hi].copy(),
            self.vals[lo:hi].copy(),
        )


def densify(a: CsrMatrix, dtype=None) -> np.ndarray:
    """Expand a CSR matrix to a dense 2-D array."""
    out = np.zeros((a.nrows, a.ncols), dtype=dtype if dtype is not None else a.vals.dtype)
    rows = np.repeat(np.arange(a.nrows), np.diff(a.row_ptr))
    out[rows, a.col_idx] = a.vals if dtype is None else a.vals.astype(out.dtype)
    return out


def random_sparse(nrows, ncols, density, seed, precision=Precision.FP64) -> CsrMatrix:
    """Deterministic random CSR matrix with round(density*nrows*ncols) nonzeros.

    Values are uniform in [-1, 1] at the requested precision; any value that
    rounds to zero at that precision is replaced so the matrix never carries
    explicit zeros. Identical (shape, density, seed, precision) arguments give
    bit-identical matrices.
    """
    if not 0 < density <= 1:
        if density == 0 or nrows == 0 or ncols == 0:
            return CsrMatrix(nrows, ncols, np.zeros(nrows + 1, np.int64), [], np.zeros(0, precision.dtype))
        raise ValueError(f"density must be in (0, 1], got {density}")
    ncells = nrows * ncols
    nnz = int(round(density * ncells))
    if ncells == 0 or nnz == 0:
        return CsrMatrix(nrows, ncols, np.zeros(nrows + 1, np.int64), [], np.zeros(0, precision.dtype))

    rng = np.random.default_rng(seed)
    flat = rng.choice(ncells, size=nnz, replace=False)
    vals = rng.uniform(-1.0, 1.0, size=nnz).astype(precision.dtype)
    vals[vals == 0] = precision.dtype.type(0.5)
    return CsrMatrix.from_coo(nrows, ncols, flat // ncols, flat % ncols, vals, dtype=precision.dtype)


def reference_spmm(a: CsrMatrix, b: np.ndarray) -> np.ndarray:
    """Row-by-row inner-product SpMM oracle, accumulated entirely in FP64.

    This is the accuracy reference every kernel path is measured against; it
    deliberately shares no code with the tile engine or the kernels.
    """
    b = np.asarray(b)
    if b.ndim != 2 or a.ncols != b.shape[0]:
        raise ValueError(f"dimension mismatch: A is {a.nrows}x{a.ncols}, B is {b.shape}")
    b64 = b.astype(np.float64, copy=False)
    vals64 = a.vals.astype(np.float64, copy=False)
    out = np.zeros((a.nrows, b.shape[1]), dtype=np.float64)
    row_ptr = a.row_ptr
    for i in range(a.nrows):
        lo, hi = row_ptr[i], row_ptr[i + 1]
        if lo != hi:
            out[i, :] = vals64[lo:hi] @ b64[a.col_idx[lo:hi], :]
    return out


def error_scale(a: CsrMatrix, b: np.ndarray) -> np.ndarray:
    """Row-wise 1-norm magnitude sum_k |a_ik|*|b_kj| of each output entry."""
    abs_a = CsrMatrix(a.nrows, a.ncols, a.row_ptr, a.col_idx, np.abs(a.vals.astype(np.float64)))
    return reference_spmm(abs_a, np.abs(np.asarray(b, dtype=np.float64)))


def max_relative_error(a: CsrMatrix, b: np.ndarray, c: np.ndarray, reference=None, scale=None) -> float:
    """Worst-case |C - oracle| scaled by the row-wise 1-norm magnitude of the sum.

    The scale for entry (i, j) is sum_k |a_ik|*|b_kj|, the natural magnitude
    of the accumulation feeding that entry. Entries with zero scale must be
    exactly zero in both C and the oracle; any deviation there reports inf.
    `reference` and `scale` may be passed in when comparing many results
    against one matrix.
    """
    if reference is None:
        reference = reference_spmm(a, b)
    if scale is None:
        scale = error_scale(a, b)
    err = np.abs(c.astype(np.float64) - reference)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, err / scale, np.where(err > 0, np.inf, 0.0))
    return float(rel.max()) if rel.size else 0.0
