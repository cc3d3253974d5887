"""Portable model of the streaming-vector tile unit the kernels execute on.

Everything here is semantically exact and deterministic: a configurable
vector length, square tile accumulators, rank-1 outer-product accumulation
(plain and 2-way FP16-widening), register interleave, and bounds-guarded
tile load/store. Lane vectors are 1-D numpy arrays; a tile accumulator is a
square 2-D numpy array at the accumulation dtype, exclusively owned by its
caller. No timing or pipelining is modeled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Precision

__all__ = [
    "EngineConfig",
    "make_accumulator",
    "fmopa",
    "zip_lower",
    "zip_upper",
    "fmopa_2way_fp16",
    "load_tile",
    "store_tile",
]

_VALID_SVL_BITS = (128, 256, 512, 1024)


@dataclass(frozen=True)
class EngineConfig:
    """Streaming vector length and the lane/tile budget it implies."""

    svl_bits: int = 512

    def __post_init__(self):
        if self.svl_bits not in _VALID_SVL_BITS:
            raise ValueError(f"svl_bits must be one of {_VALID_SVL_BITS}, got {self.svl_bits}")

    @property
    def cntd(self) -> int:
        return self.svl_bits // 64

    @property
    def cntf(self) -> int:
        return self.svl_bits // 32

    @property
    def cnth(self) -> int:
        return self.svl_bits // 16

    def lanes(self, precision: Precision) -> int:
        """Elements of `precision` held by one vector register."""
        return self.svl_bits // (8 * precision.dtype.itemsize)

    def acc_dim(self, precision: Precision) -> int:
        """Side length of a tile accumulator: lanes at the accumulation dtype."""
        return self.svl_bits // (8 * precision.accum_dtype.itemsize)

    def max_tiles(self, precision: Precision) -> int:
        """Independent accumulators a kernel may keep in flight."""
        return 8 if precision is Precision.FP64 else 4


def make_accumulator(cfg: EngineConfig, precision: Precision) -> np.ndarray:
    dim = cfg.acc_dim(precision)
    return np.zeros((dim, dim), dtype=precision.accum_dtype)


def fmopa(acc: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rank-1 outer-product accumulate: acc[i, j] += a[i] * b[j].

    Operands narrower than the accumulator (FP16 into an FP32 tile) are
    widened before the multiply, so products never round at the narrow width.
    """
    dim = acc.shape[0]
    if acc.shape != (dim, dim):
        raise ValueError(f"accumulator must be square, got shape {acc.shape}")
    if a.shape != (dim,) or b.shape != (dim,):
        raise ValueError(f"lane count mismatch: acc dim {dim}, a {a.shape}, b {b.shape}")
    if a.dtype != acc.dtype:
        a = a.astype(acc.dtype)
    if b.dtype != acc.dtype:
        b = b.astype(acc.dtype)
    acc += a[:, None] * b[None, :]
    return acc


def zip_lower(v0: np.ndarray, v1: np.ndarray) -> np.ndarray:
    """Interleave the lower halves: [v0[0], v1[0], v0[1], v1[1], ...]."""
    return _zip_half(v0, v1, upper=False)


def zip_upper(v0: np.ndarray, v1: np.ndarray) -> np.ndarray:
    """Interleave the upper halves of v0 and v1."""
    return _zip_half(v0, v1, upper=True)


def _zip_half(v0, v1, upper):
    n = v0.shape[0]
    if v1.shape != v0.shape:
        raise ValueError(f"lane count mismatch: {v0.shape} vs {v1.shape}")
    if n % 2:
        raise ValueError(f"lane count must be even, got {n}")
    half = n // 2
    lo = half if upper else 0
    out = np.empty(n, dtype=v0.dtype)
    out[0::2] = v0[lo : lo + half]
    out[1::2] = v1[lo : lo + half]
    return out


def fmopa_2way_fp16(acc: np.ndarray, h0: np.ndarray, h1: np.ndarray) -> np.ndarray:
    """Two-way widening outer-product accumulate for FP16 pairs.

    Even lanes of h0/h1 are widened to FP32 and rank-1 accumulated, then the
    odd lanes likewise: acc[i, j] += h0[2i]*h1[2j] + h0[2i+1]*h1[2j+1], with
    every product and sum carried in FP32. Bit-identical to two sequential
    `fmopa` calls on the widened even and odd sub-vectors.
    """
    dim = acc.shape[0]
    if acc.shape != (dim, dim) or acc.dtype != np.float32:
        raise ValueError(f"accumulator must be a square float32 tile, got {acc.shape} {acc.dtype}")
    if h0.shape != (2 * dim,) or h1.shape != (2 * dim,):
        raise ValueError(f"expected {2 * dim} FP16 lanes, got {h0.shape} and {h1.shape}")
    if h0.dtype != np.float16 or h1.dtype != np.float16:
        raise ValueError("fmopa_2way_fp16 operands must be float16")
    e0 = h0[0::2].astype(np.float32)
    e1 = h1[0::2].astype(np.float32)
    acc += e0[:, None] * e1[None, :]
    o0 = h0[1::2].astype(np.float32)
    o1 = h1[1::2].astype(np.float32)
    acc += o0[:, None] * o1[None, :]
    return acc


def load_tile(acc: np.ndarray, c: np.ndarray, row0: int, col0: int, valid_rows: int) -> np.ndarray:
    """Fill acc from C[row0:row0+valid_rows, col0:col0+dim]; remaining rows zero."""
    dim = _check_tile_window(acc, c, row0, col0, valid_rows)
    acc[:] = 0
    acc[:valid_rows, :] = c[row0 : row0 + valid_rows, col0 : col0 + dim]
    return acc


def store_tile(acc: np.ndarray, c: np.ndarray, row0: int, col0: int, valid_rows: int) -> np.ndarray:
    """Write the first valid_rows rows of acc back into C; other rows untouched."""
    dim = _check_tile_window(acc, c, row0, col0, valid_rows)
    c[row0 : row0 + valid_rows, col0 : col0 + dim] = acc[:valid_rows, :]
    return c


def _check_tile_window(acc, c, row0, col0, valid_rows):
    dim = acc.shape[0]
    if acc.shape != (dim, dim):
        raise ValueError(f"accumulator must be square, got shape {acc.shape}")
    if not 0 <= valid_rows <= dim:
        raise ValueError(f"valid_rows must be in [0, {dim}], got {valid_rows}")
    if col0 < 0 or col0 + dim > c.shape[1]:
        raise ValueError(f"column window [{col0}, {col0 + dim}) out of bounds for {c.shape[1]} columns")
    if row0 < 0 or row0 + valid_rows > c.shape[0]:
        raise ValueError(f"row window [{row0}, {row0 + valid_rows}) out of bounds for {c.shape[0]} rows")
    if c.dtype != acc.dtype:
        raise ValueError(f"dtype mismatch: tile {acc.dtype}, target {c.dtype}")
    return dim
