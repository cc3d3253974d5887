"""The hybrid row-split format and its CSR conversions.

A matrix is split at ``r_boundary``: rows below it stay in CSR and feed the
row-wise vector kernel; the remaining rows are regrouped into lanes x 1
column tiles (vector-wise blocked CSR) for the outer-product tile kernel.
Row indices inside the blocked part are rebased to zero; kernels add
``r_boundary`` back when touching the output.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .core import CsrMatrix, Precision

__all__ = [
    "BcsrPart",
    "LoopsMatrix",
    "convert_csr_to_loops",
    "loops_to_csr",
    "block_density",
    "write_loops_file",
    "read_loops_file",
]


@dataclass(frozen=True)
class BcsrPart:
    """Vector-wise blocked region: zero-padded lanes x 1 tiles, grouped by row block.

    ``tile_vals`` is tile-major: tile t occupies [t*B_r*B_c, (t+1)*B_r*B_c),
    lane p of tile t holding the value of rebased row (block*B_r + p). Tiles
    within a row block are sorted by column. Every stored tile has at least
    one nonzero.
    """

    n_rows: int
    ncols: int
    B_r: int
    B_c: int
    row_block_count: int
    block_row_ptr: np.ndarray
    block_col_idx: np.ndarray
    tile_vals: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "block_row_ptr", np.ascontiguousarray(self.block_row_ptr, dtype=np.int64))
        object.__setattr__(self, "block_col_idx", np.ascontiguousarray(self.block_col_idx, dtype=np.int64))
        object.__setattr__(self, "tile_vals", np.ascontiguousarray(self.tile_vals))
        self.validate()

    @property
    def ntiles(self) -> int:
        return len(self.block_col_idx)

    @property
    def nnz(self) -> int:
        """Nonzero lanes actually stored (padding excluded)."""
        return int(np.count_nonzero(self.tile_vals))

    @property
    def precision(self) -> Precision:
        return Precision.from_dtype(self.tile_vals.dtype)

    def validate(self) -> None:
        if self.B_c != 1:
            raise ValueError("tile column width is fixed at 1")
        if self.B_r < 1:
            raise ValueError("tile row size must be >= 1")
        expected_blocks = -(-self.n_rows // self.B_r) if self.n_rows else 0
        if self.row_block_count != expected_blocks:
            raise ValueError(f"row_block_count must be ceil(n_rows / B_r) = {expected_blocks}")
        if self.block_row_ptr.shape != (self.row_block_count + 1,):
            raise ValueError("block_row_ptr must have length row_block_count + 1")
        if self.block_row_ptr[0] != 0 or np.any(np.diff(self.block_row_ptr) < 0):
            raise ValueError("block_row_ptr must start at 0 and be non-decreasing")
        ntiles = int(self.block_row_ptr[-1])
        if len(self.block_col_idx) != ntiles:
            raise ValueError("block_col_idx length must equal the final block_row_ptr entry")
        if len(self.tile_vals) != ntiles * self.B_r * self.B_c:
            raise ValueError("tile_vals length must be ntiles * B_r * B_c")
        if ntiles:
            if self.block_col_idx.min() < 0 or self.block_col_idx.max() * self.B_c >= self.ncols:
                raise ValueError("tile column index out of range")
            starts = np.zeros(ntiles, dtype=bool)
            block_starts = self.block_row_ptr[1:-1]
            starts[block_starts[block_starts < ntiles]] = True
            if np.any(np.diff(self.block_col_idx)[~starts[1:]] <= 0):
                raise ValueError("tiles within a row block must have strictly increasing columns")
            lanes_per_tile = self.tile_vals.reshape(ntiles, self.B_r * self.B_c)
            if not np.all(np.any(lanes_per_tile != 0, axis=1)):
                raise ValueError("all-zero tiles must not be stored")


@dataclass(frozen=True)
class LoopsMatrix:
    """Hybrid matrix: CSR rows [0, r_boundary) plus a blocked part for the rest."""

    nrows: int
    ncols: int
    r_boundary: int
    csr_part: CsrMatrix
    bcsr_part: BcsrPart

    def __post_init__(self):
        if not 0 <= self.r_boundary <= self.nrows:
            raise ValueError(f"r_boundary must be in [0, {self.nrows}], got {self.r_boundary}")
        if self.csr_part.nrows != self.r_boundary:
            raise ValueError("csr_part must cover exactly the rows below r_boundary")
        if self.bcsr_part.n_rows != self.nrows - self.r_boundary:
            raise ValueError("bcsr_part must cover exactly the rows at and above r_boundary")
        if self.csr_part.ncols != self.ncols or self.bcsr_part.ncols != self.ncols:
            raise ValueError("part column counts must match the matrix")
        if self.csr_part.vals.dtype != self.bcsr_part.tile_vals.dtype:
            raise ValueError("both parts must share one value dtype")

    @property
    def nnz(self) -> int:
        return self.csr_part.nnz + self.bcsr_part.nnz

    @property
    def precision(self) -> Precision:
        return Precision.from_dtype(self.csr_part.vals.dtype)

    @property
    def lanes(self) -> int:
        return self.bcsr_part.B_r


def convert_csr_to_loops(src: CsrMatrix, r_boundary: int, lanes: int) -> LoopsMatrix:
    """Split ``src`` at ``r_boundary`` and tile the remainder into lanes x 1 blocks.

    Rows below the boundary are copied verbatim. Each remaining nonzero
    (i, j) lands in tile (tile_r, tile_c) = ((i - r_boundary) // lanes, j) at
    intra-tile offset (i - r_boundary) % lanes; tiles are materialized
    zero-padded and sorted by column within each row block.
    """
    if not 0 <= r_boundary <= src.nrows:
        raise ValueError(f"r_boundary must be in [0, {src.nrows}], got {r_boundary}")
    if lanes < 1:
        raise ValueError(f"lanes must be >= 1, got {lanes}")

    csr_part = src.row_slice(0, r_boundary)

    n_rows = src.nrows - r_boundary
    row_block_count = -(-n_rows // lanes) if n_rows else 0
    split = src.row_ptr[r_boundary]
    rebased = np.repeat(np.arange(n_rows, dtype=np.int64), np.diff(src.row_ptr[r_boundary:]))
    cols = src.col_idx[split:]
    region_vals = src.vals[split:]

    tile_r = rebased // lanes
    offset = rebased % lanes
    key = tile_r * np.int64(src.ncols) + cols
    uniq, inverse = np.unique(key, return_inverse=True)
    ntiles = len(uniq)

    block_row_ptr = np.zeros(row_block_count + 1, dtype=np.int64)
    if ntiles:
        counts = np.bincount(uniq // src.ncols, minlength=row_block_count)
        np.cumsum(counts, out=block_row_ptr[1:])
    tile_vals = np.zeros(ntiles * lanes, dtype=src.vals.dtype)
    tile_vals[inverse * lanes + offset] = region_vals

    bcsr = BcsrPart(
        n_rows=n_rows,
        ncols=src.ncols,
        B_r=lanes,
        B_c=1,
        row_block_count=row_block_count,
        block_row_ptr=block_row_ptr,
        block_col_idx=uniq % src.ncols if ntiles else np.zeros(0, np.int64),
        tile_vals=tile_vals,
    )
    return LoopsMatrix(src.nrows, src.ncols, r_boundary, csr_part, bcsr)


def loops_to_csr(m: LoopsMatrix) -> CsrMatrix:
    """Reassemble the canonical CSR matrix; padded zero lanes are skipped.

    Exact inverse of :func:`convert_csr_to_loops` for inputs without explicit
    zero values, reproducing them bit for bit.
    """
    csr = m.csr_part
    rows_a = np.repeat(np.arange(csr.nrows, dtype=np.int64), np.diff(csr.row_ptr))
    cols_a = csr.col_idx
    vals_a = csr.vals

    p = m.bcsr_part
    lanes = p.B_r
    tiles = p.tile_vals.reshape(p.ntiles, lanes)
    t_idx, lane = np.nonzero(tiles)
    tile_r = np.repeat(np.arange(p.row_block_count, dtype=np.int64), np.diff(p.block_row_ptr))
    rows_b = m.r_boundary + tile_r[t_idx] * lanes + lane
    cols_b = p.block_col_idx[t_idx] * p.B_c
    vals_b = tiles[t_idx, lane]

    return CsrMatrix.from_coo(
        m.nrows,
        m.ncols,
        np.concatenate([rows_a, rows_b]),
        np.concatenate([cols_a, cols_b]),
        np.concatenate([vals_a, vals_b]),
        dtype=vals_a.dtype,
        drop_zeros=False,
    )


def block_density(p: BcsrPart) -> float:
    """Average nonzeros per stored tile; in (0, B_r*B_c]."""
    if p.ntiles == 0:
        raise ValueError("block density is undefined for a part with no tiles")
    return p.nnz / p.ntiles


_MAGIC = b"LOOPSMTX"
_VERSION = 1
_HEADER = struct.Struct("<8sIB3xQQQQ")
_PRECISION_TAGS = {Precision.FP64: 0, Precision.FP32: 1, Precision.FP16: 2}
_TAG_PRECISIONS = {v: k for k, v in _PRECISION_TAGS.items()}


def write_loops_file(m: LoopsMatrix, path) -> None:
    """Binary dump: versioned header then the arrays in declared order, little-endian."""
    buf = io.BytesIO()
    buf.write(
        _HEADER.pack(
            _MAGIC,
            _VERSION,
            _PRECISION_TAGS[m.precision],
            m.nrows,
            m.ncols,
            m.r_boundary,
            m.lanes,
        )
    )
    val_dtype = m.precision.dtype.newbyteorder("<")
    for arr, dtype in (
        (m.csr_part.row_ptr, "<i8"),
        (m.csr_part.col_idx, "<i8"),
        (m.csr_part.vals, val_dtype),
        (m.bcsr_part.block_row_ptr, "<i8"),
        (m.bcsr_part.block_col_idx, "<i8"),
        (m.bcsr_part.tile_vals, val_dtype),
    ):
        buf.write(arr.astype(dtype, copy=False).tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def read_loops_file(path) -> LoopsMatrix:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or raw[:8] != _MAGIC:
        raise ValueError(f"{path}: not a LOOPS cache file")
    magic, version, tag, nrows, ncols, r_boundary, lanes = _HEADER.unpack_from(raw)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    if tag not in _TAG_PRECISIONS:
        raise ValueError(f"{path}: unknown precision tag {tag}")
    precision = _TAG_PRECISIONS[tag]
    val_dtype = np.dtype(precision.dtype).newbyteorder("<")

    pos = _HEADER.size

    def take(dtype, count):
        nonlocal pos
        dtype = np.dtype(dtype)
        end = pos + dtype.itemsize * count
        if end > len(raw):
            raise ValueError(f"{path}: truncated cache file")
        out = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
        pos = end
        return out.astype(dtype.newbyteorder("="))

    row_ptr = take("<i8", r_boundary + 1)
    nnz = int(row_ptr[-1])
    col_idx = take("<i8", nnz)
    vals = take(val_dtype, nnz)
    csr_part = CsrMatrix(r_boundary, ncols, row_ptr, col_idx, vals)

    n_rows = nrows - r_boundary
    row_block_count = -(-n_rows // lanes) if n_rows else 0
    block_row_ptr = take("<i8", row_block_count + 1)
    ntiles = int(block_row_ptr[-1])
    block_col_idx = take("<i8", ntiles)
    tile_vals = take(val_dtype, ntiles * lanes)
    bcsr = BcsrPart(n_rows, ncols, lanes, 1, row_block_count, block_row_ptr, block_col_idx, tile_vals)
    return LoopsMatrix(nrows, ncols, r_boundary, csr_part, bcsr)
