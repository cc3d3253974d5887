"""SpMM kernel paths and the hybrid dispatcher.

Three execution paths: a row-wise AXPY kernel for the CSR part, an
outer-product tile kernel for the blocked part (FP64/FP32), and the 2-way
widening FP16 variant. ``spmm_loops`` runs the CSR and blocked parts in two
concurrent worker groups; every output row has exactly one writer, so the
result is bit-identical across worker counts.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .core import CsrMatrix, Precision
from .engine import EngineConfig, fmopa, fmopa_2way_fp16, load_tile, store_tile, zip_lower, zip_upper
from .formats import BcsrPart, LoopsMatrix

if TYPE_CHECKING:
    from .scheduler import ScheduleDecision

__all__ = [
    "KernelConfig",
    "spmm_csr_rows",
    "spmm_bcsr_blocks",
    "spmm_bcsr_blocks_fp16",
    "spmm_loops",
    "flop_count",
    "downcast_to_fp16",
    "split_range",
]


@dataclass(frozen=True)
class KernelConfig:
    """Engine, accumulator budget and dense-operand width for one execution."""

    engine: EngineConfig
    n_cols_b: int
    tiles_in_flight: int | None = None  # None: saturate the budget

    def tiles_for(self, precision: Precision) -> int:
        budget = self.engine.max_tiles(precision)
        tif = self.tiles_in_flight if self.tiles_in_flight is not None else budget
        if not 1 <= tif <= budget:
            raise ValueError(f"tiles_in_flight must be in [1, {budget}] for {precision.value}, got {tif}")
        return tif


def split_range(n: int, parts: int) -> list[range]:
    """Static contiguous partition of [0, n) into `parts` chunks by count."""
    parts = max(1, parts)
    return [range(w * n // parts, (w + 1) * n // parts) for w in range(parts)]


def spmm_csr_rows(part: CsrMatrix, b: np.ndarray, c: np.ndarray, rows: range) -> np.ndarray:
    """Row-wise AXPY path: C[i, :] += a_ij * B[j, :] over each nonzero of row i.

    Only rows in `rows` are touched. FP16 operands are widened to FP32 and
    accumulated there; FP64/FP32 accumulate at input precision.
    """
    if part.ncols != b.shape[0]:
        raise ValueError(f"dimension mismatch: part has {part.ncols} cols, B has {b.shape[0]} rows")
    if c.shape[1] != b.shape[1] or c.shape[0] < part.nrows:
        raise ValueError("output shape does not cover this part")
    if rows and (rows[0] < 0 or rows[-1] >= part.nrows):
        raise ValueError(f"row range {rows} outside [0, {part.nrows})")
    acc_dtype = c.dtype
    row_ptr, col_idx, vals = part.row_ptr, part.col_idx, part.vals
    for i in rows:
        lo, hi = row_ptr[i], row_ptr[i + 1]
        if lo == hi:
            continue
        coeffs = vals[lo:hi].astype(acc_dtype, copy=False)
        c[i, :] += coeffs @ b[col_idx[lo:hi], :].astype(acc_dtype, copy=False)
    return c


def _b_segment(b_row: np.ndarray, col0: int, width: int, valid: int) -> np.ndarray:
    if valid == width:
        return b_row[col0 : col0 + width]
    seg = np.zeros(width, dtype=b_row.dtype)
    seg[:valid] = b_row[col0 : col0 + valid]
    return seg


def spmm_bcsr_blocks(
    part: BcsrPart,
    b: np.ndarray,
    c: np.ndarray,
    blocks: range,
    cfg: KernelConfig,
    r_boundary: int,
) -> np.ndarray:
    """Outer-product tile path for FP64/FP32 blocked parts.

    Per row block and per column window of B: load the output tile, apply one
    rank-1 accumulate per stored tile, store back. `tiles_in_flight` windows
    advance together, each owning its own accumulator, all updated inside the
    single pass over the block's tiles; a trailing narrow window goes through
    zero-padded local buffers.
    """
    precision = part.precision
    if precision not in (Precision.FP64, Precision.FP32):
        raise ValueError(f"this path handles FP64/FP32 parts, got {precision.value}")
    lanes = cfg.engine.lanes(precision)
    if part.B_r != lanes:
        raise ValueError(f"part was tiled for {part.B_r} lanes but the engine has {lanes}")
    tif = cfg.tiles_for(precision)
    n = b.shape[1]
    if n != cfg.n_cols_b:
        raise ValueError(f"B has {n} columns, config says {cfg.n_cols_b}")

    tiles = part.tile_vals.reshape(-1, lanes)
    block_row_ptr, block_col_idx = part.block_row_ptr, part.block_col_idx
    for ib in blocks:
        t0, t1 = int(block_row_ptr[ib]), int(block_row_ptr[ib + 1])
        if t0 == t1:
            continue
        r_begin = ib * lanes
        valid_rows = min(lanes, part.n_rows - r_begin)
        row0 = r_boundary + r_begin
        j = 0
        while j < n:
            nwin = min(tif, -(-(n - j) // lanes))
            windows = []
            for w in range(nwin):
                c0 = j + w * lanes
                vc = min(lanes, n - c0)
                acc = np.zeros((lanes, lanes), dtype=c.dtype)
                if vc == lanes:
                    load_tile(acc, c, row0, c0, valid_rows)
                else:
                    acc[:valid_rows, :vc] = c[row0 : row0 + valid_rows, c0 : c0 + vc]
                windows.append((c0, vc, acc))
            for k in range(t0, t1):
                a = tiles[k]
                b_row = b[block_col_idx[k]]
                for c0, vc, acc in windows:
                    fmopa(acc, a, _b_segment(b_row, c0, lanes, vc))
            for c0, vc, acc in windows:
                if vc == lanes:
                    store_tile(acc, c, row0, c0, valid_rows)
                else:
                    c[row0 : row0 + valid_rows, c0 : c0 + vc] = acc[:valid_rows, :vc]
            j += nwin * lanes
    return c


def spmm_bcsr_blocks_fp16(
    part: BcsrPart,
    b: np.ndarray,
    c: np.ndarray,
    blocks: range,
    cfg: KernelConfig,
    r_boundary: int,
) -> np.ndarray:
    """2-way widening path for FP16 blocked parts, accumulating into FP32 C.

    Tiles are consumed in pairs: the pair's value vectors and the matching B
    row segments are interleaved with zip_lower/zip_upper, then four 2-way
    outer products land in four accumulators mapped onto the quadrants of the
    cnth x cnth output window (even lanes carry the first tile of the pair,
    odd lanes the second). A trailing unpaired tile runs against the all-zero
    register.
    """
    if part.precision is not Precision.FP16:
        raise ValueError(f"this path handles FP16 parts, got {part.precision.value}")
    if c.dtype != np.float32:
        raise ValueError("FP16 output accumulates in FP32")
    cnth = cfg.engine.cnth
    if part.B_r != cnth:
        raise ValueError(f"part was tiled for {part.B_r} lanes but the engine has {cnth}")
    cfg.tiles_for(Precision.FP16)  # the four quadrant tiles are the whole budget
    cntf = cnth // 2
    n = b.shape[1]
    if n != cfg.n_cols_b:
        raise ValueError(f"B has {n} columns, config says {cfg.n_cols_b}")

    tiles = part.tile_vals.reshape(-1, cnth)
    block_row_ptr, block_col_idx = part.block_row_ptr, part.block_col_idx
    zero_reg = np.zeros(cnth, dtype=np.float16)
    for ib in blocks:
        t0, t1 = int(block_row_ptr[ib]), int(block_row_ptr[ib + 1])
        if t0 == t1:
            continue
        r_begin = ib * cnth
        valid_rows = min(cnth, part.n_rows - r_begin)
        row0 = r_boundary + r_begin
        vr_lo = min(valid_rows, cntf)
        vr_hi = valid_rows - vr_lo
        for j in range(0, n, cnth):
            vc = min(cnth, n - j)
            vc_lo = min(vc, cntf)
            vc_hi = vc - vc_lo
            quadrants = (
                (row0, j, vr_lo, vc_lo),
                (row0, j + cntf, vr_lo, vc_hi),
                (row0 + cntf, j, vr_hi, vc_lo),
                (row0 + cntf, j + cntf, vr_hi, vc_hi),
            )
            accs = []
            for r0, c0, vr, vcq in quadrants:
                acc = np.zeros((cntf, cntf), dtype=np.float32)
                if vr and vcq:
                    if vcq == cntf:
                        load_tile(acc, c, r0, c0, vr)
                    else:
                        acc[:vr, :vcq] = c[r0 : r0 + vr, c0 : c0 + vcq]
                accs.append(acc)
            for k in range(t0, t1, 2):
                a0 = tiles[k]
                b0 = _b_segment(b[block_col_idx[k]], j, cnth, vc)
                if k + 1 < t1:
                    a1 = tiles[k + 1]
                    b1 = _b_segment(b[block_col_idx[k + 1]], j, cnth, vc)
                else:
                    a1 = zero_reg
                    b1 = zero_reg
                r0_a = zip_lower(a0, a1)
                r1_a = zip_upper(a0, a1)
                r0_b = zip_lower(b0, b1)
                r1_b = zip_upper(b0, b1)
                fmopa_2way_fp16(accs[0], r0_a, r0_b)
                fmopa_2way_fp16(accs[1], r0_a, r1_b)
                fmopa_2way_fp16(accs[2], r1_a, r0_b)
                fmopa_2way_fp16(accs[3], r1_a, r1_b)
            for acc, (r0, c0, vr, vcq) in zip(accs, quadrants):
                if vr and vcq:
                    if vcq == cntf:
                        store_tile(acc, c, r0, c0, vr)
                    else:
                        c[r0 : r0 + vr, c0 : c0 + vcq] = acc[:vr, :vcq]
    return c


def spmm_loops(m: LoopsMatrix, b: np.ndarray, decision: ScheduleDecision, cfg: KernelConfig) -> np.ndarray:
    """Hybrid SpMM: both parts execute concurrently under `decision`.

    The CSR part is partitioned row-wise across the vector-path workers, the
    blocked part row-block-wise across the tile-path workers. Output rows of
    the two parts are disjoint, so the only synchronization is the final
    join. A group whose part holds work always gets at least one worker; a
    group whose part is empty is not launched.
    """
    b = np.asarray(b)
    if decision.r_boundary != m.r_boundary:
        raise ValueError(
            f"schedule was solved for r_boundary={decision.r_boundary}, matrix has {m.r_boundary}"
        )
    if decision.t_neon < 0 or decision.t_sme < 0:
        raise ValueError("worker counts must be non-negative")
    if b.ndim != 2 or b.shape[0] != m.ncols:
        raise ValueError(f"dimension mismatch: matrix is {m.nrows}x{m.ncols}, B is {b.shape}")
    if b.dtype != m.precision.dtype:
        raise ValueError(f"B must be {m.precision.dtype} to match the matrix, got {b.dtype}")
    if cfg.n_cols_b != b.shape[1]:
        raise ValueError(f"B has {b.shape[1]} columns, config says {cfg.n_cols_b}")

    c = np.zeros((m.nrows, b.shape[1]), dtype=m.precision.accum_dtype)
    csr_work = m.csr_part.nnz > 0
    bcsr_work = m.bcsr_part.ntiles > 0
    if not (csr_work or bcsr_work):
        return c
    if decision.t_neon == 0 and decision.t_sme == 0:
        raise ValueError("at least one worker group must be populated")

    jobs = []
    if csr_work:
        for chunk in split_range(m.r_boundary, max(1, decision.t_neon)):
            if chunk:
                jobs.append((spmm_csr_rows, (m.csr_part, b, c, chunk)))
    if bcsr_work:
        kernel = spmm_bcsr_blocks_fp16 if m.precision is Precision.FP16 else spmm_bcsr_blocks
        for chunk in split_range(m.bcsr_part.row_block_count, max(1, decision.t_sme)):
            if chunk:
                jobs.append((kernel, (m.bcsr_part, b, c, chunk, cfg, m.r_boundary)))

    failures: list[BaseException] = []

    def run(fn, args):
        try:
            fn(*args)
        except BaseException as exc:  # joined below; re-raised on the caller
            failures.append(exc)

    workers = [threading.Thread(target=run, args=job) for job in jobs]
    for t in workers:
        t.start()
    for t in workers:
        t.join()
    if failures:
        raise failures[0]
    return c


def flop_count(m: LoopsMatrix, n_cols: int) -> int:
    """Useful flops of one SpMM: 2 * nnz * N. Padded tile lanes do not count."""
    return 2 * m.nnz * n_cols


def downcast_to_fp16(c: np.ndarray) -> np.ndarray:
    """Round an FP32 result down to FP16 storage.

    FP16 executions keep C in FP32; callers that want half-width storage opt
    in through this and accept the rounding.
    """
    if c.dtype != np.float32:
        raise ValueError(f"expected an FP32 result, got {c.dtype}")
    return c.astype(np.float16)
