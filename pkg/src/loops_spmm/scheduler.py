"""Adaptive scheduling: calibration, performance-model fit, and the split solve.

The execution of a hybrid matrix is fully parameterized by three numbers:
vector-path workers, tile-path workers, and the row boundary between the two
parts. Thread counts come from fitting a cross-term-free quadratic surface
perf(x, y) = a0 + a1*x + a2*y + a3*x^2 + a4*y^2 to measured samples and
taking the argmax over x + y <= T; the boundary then equalizes per-path work
against per-path throughput in closed form.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import CsrMatrix, Precision
from .formats import convert_csr_to_loops
from . import kernels

__all__ = [
    "PerfModel",
    "CalibrationSample",
    "ThroughputEstimate",
    "ScheduleDecision",
    "RankDeficientError",
    "fit_perf_model",
    "predict",
    "select_threads",
    "solve_row_boundary",
    "measure_throughput",
    "calibrate",
    "default_candidates",
    "schedule_to_json",
    "schedule_from_json",
]

BASIS_NAMES = ("1", "x", "y", "x^2", "y^2")


@dataclass(frozen=True)
class PerfModel:
    """Coefficients of the quadratic performance surface (no cross term)."""

    a0: float
    a1: float
    a2: float
    a3: float
    a4: float

    def coefficients(self) -> np.ndarray:
        return np.array([self.a0, self.a1, self.a2, self.a3, self.a4], dtype=np.float64)


@dataclass(frozen=True)
class CalibrationSample:
    x: int  # vector-path workers
    y: int  # tile-path workers
    perf: float  # measured GFLOPS


@dataclass(frozen=True)
class ThroughputEstimate:
    tp_neon: float  # per-worker GFLOPS on the CSR path
    tp_sme: float  # per-worker GFLOPS on the blocked path


@dataclass(frozen=True)
class ScheduleDecision:
    t_neon: int
    t_sme: int
    r_boundary: int


class RankDeficientError(ValueError):
    """The calibration samples cannot identify every model coefficient."""

    def __init__(self, column: str):
        self.column = column
        super().__init__(f"design matrix is rank deficient: basis column {column!r} is not identifiable")


def _design_matrix(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones_like(xs), xs, ys, xs**2, ys**2])


def fit_perf_model(samples: list[CalibrationSample]) -> PerfModel:
    """Least-squares fit of the five surface coefficients.

    Requires at least five samples spanning all basis directions; otherwise a
    RankDeficientError names a basis column that the samples cannot identify.
    """
    if len(samples) < 5:
        raise ValueError(f"need at least 5 calibration samples, got {len(samples)}")
    xs = np.array([s.x for s in samples], dtype=np.float64)
    ys = np.array([s.y for s in samples], dtype=np.float64)
    perf = np.array([s.perf for s in samples], dtype=np.float64)
    design = _design_matrix(xs, ys)
    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        # Name a redundant column: one whose removal does not lower the rank.
        for col in range(design.shape[1] - 1, -1, -1):
            reduced = np.delete(design, col, axis=1)
            if np.linalg.matrix_rank(reduced) == rank:
                raise RankDeficientError(BASIS_NAMES[col])
        raise RankDeficientError(BASIS_NAMES[0])
    coef, *_ = np.linalg.lstsq(design, perf, rcond=None)
    return PerfModel(*coef)


def predict(model: PerfModel, x: float, y: float) -> float:
    return model.a0 + model.a1 * x + model.a2 * y + model.a3 * x * x + model.a4 * y * y


def select_threads(model: PerfModel, total: int) -> tuple[int, int]:
    """Exhaustive argmax of the model over x >= 0, y >= 0, 0 < x + y <= total.

    Ties prefer the larger worker total, then more vector-path workers.
    """
    if total < 1:
        raise ValueError(f"need at least one worker, got budget {total}")
    best = None
    best_key = None
    for x in range(total + 1):
        for y in range(total + 1 - x):
            if x == 0 and y == 0:
                continue
            key = (predict(model, x, y), x + y, x)
            if best_key is None or key > best_key:
                best_key = key
                best = (x, y)
    return best


def solve_row_boundary(r_total: int, tp: ThroughputEstimate, t_neon: int, t_sme: int) -> int:
    """Closed-form split: rows below the boundary feed the vector path so that
    boundary * tp_neon * t_neon = (r_total - boundary) * tp_sme * t_sme.

    The real-valued solution is rounded half-up and clamped to [0, r_total];
    a zero worker count on either path degenerates to giving the other path
    every row.
    """
    if t_neon < 0 or t_sme < 0:
        raise ValueError("worker counts must be non-negative")
    if t_neon == 0 and t_sme == 0:
        raise ValueError("at least one path must have workers")
    if r_total == 0:
        return 0
    if t_neon == 0:
        return 0
    if t_sme == 0:
        return r_total
    if tp.tp_neon <= 0 or tp.tp_sme <= 0:
        raise ValueError("throughput estimates must be positive")
    weight_neon = tp.tp_neon * t_neon
    weight_sme = tp.tp_sme * t_sme
    boundary = int(np.floor(r_total * weight_sme / (weight_neon + weight_sme) + 0.5))
    return min(max(boundary, 0), r_total)


def _time_run(fn, reps: int, timer) -> float:
    start = timer()
    for _ in range(reps):
        fn()
    elapsed = timer() - start
    return max(elapsed / reps, 1e-9)


def measure_throughput(
    a: CsrMatrix,
    b: np.ndarray,
    cfg: kernels.KernelConfig,
    probe_rows: int = 256,
    timer=time.perf_counter,
) -> ThroughputEstimate:
    """Single-threaded GFLOPS of each path on a sampled row range of the matrix.

    Feeds the row-boundary solve; measured on the matrix itself so sparsity
    effects are folded in rather than assuming hardware constants.
    """
    nrows = a.nrows
    count = min(nrows, probe_rows)
    start = (nrows - count) // 2
    probe = a.row_slice(start, start + count)
    if probe.nnz == 0:
        return ThroughputEstimate(1.0, 1.0)
    gflop = 2 * probe.nnz * b.shape[1] / 1e9

    c = np.zeros((probe.nrows, b.shape[1]), dtype=probe.precision.accum_dtype)
    t_csr = _time_run(lambda: kernels.spmm_csr_rows(probe, b, c, range(probe.nrows)), 1, timer)

    lanes = cfg.engine.lanes(probe.precision)
    blocked = convert_csr_to_loops(probe, 0, lanes).bcsr_part
    tile_kernel = (
        kernels.spmm_bcsr_blocks_fp16 if probe.precision is Precision.FP16 else kernels.spmm_bcsr_blocks
    )
    c[:] = 0
    t_tile = _time_run(
        lambda: tile_kernel(blocked, b, c, range(blocked.row_block_count), cfg, 0), 1, timer
    )
    return ThroughputEstimate(max(gflop / t_csr, 1e-12), max(gflop / t_tile, 1e-12))


def default_candidates(total: int) -> list[tuple[int, int]]:
    """Axis and budget-frontier configurations: O(log T + T) warm-up runs."""
    if total < 1:
        raise ValueError(f"need at least one worker, got budget {total}")
    axis = []
    v = 1
    while v < total:
        axis.append(v)
        v *= 2
    axis.append(total)
    candidates = [(x, 0) for x in axis]
    candidates += [(0, y) for y in axis]
    candidates += [(x, total - x) for x in range(total + 1)]
    seen = set()
    out = []
    for cand in candidates:
        if cand not in seen and cand != (0, 0):
            seen.add(cand)
            out.append(cand)
    return out


def calibrate(
    a: CsrMatrix,
    b: np.ndarray,
    candidates: list[tuple[int, int]],
    cfg: kernels.KernelConfig,
    core_budget: int | None = None,
    warmup: int = 2,
    reps: int = 5,
    timer=time.perf_counter,
) -> list[CalibrationSample]:
    """Measure GFLOPS for each candidate worker assignment.

    Each candidate gets a provisional split from the micro-measured per-path
    throughputs, the converted matrix is run `warmup` untimed plus `reps`
    timed times, and the median GFLOPS becomes the sample. Duplicates in
    `candidates` produce duplicate samples.
    """
    if not candidates:
        raise ValueError("candidate list must not be empty")
    if core_budget is None:
        import os

        core_budget = os.cpu_count() or 1
    for x, y in candidates:
        if x < 0 or y < 0 or (x == 0 and y == 0):
            raise ValueError(f"invalid candidate ({x}, {y})")
        if x + y > core_budget:
            raise ValueError(f"candidate ({x}, {y}) exceeds the {core_budget}-core budget")

    tp = measure_throughput(a, b, cfg, timer=timer)
    lanes = cfg.engine.lanes(a.precision)
    samples = []
    for x, y in candidates:
        boundary = solve_row_boundary(a.nrows, tp, x, y)
        m = convert_csr_to_loops(a, boundary, lanes)
        decision = ScheduleDecision(x, y, boundary)
        gflop = kernels.flop_count(m, b.shape[1]) / 1e9
        for _ in range(warmup):
            kernels.spmm_loops(m, b, decision, cfg)
        times = [_time_run(lambda: kernels.spmm_loops(m, b, decision, cfg), 1, timer) for _ in range(reps)]
        samples.append(CalibrationSample(x, y, gflop / float(np.median(times))))
    return samples


def schedule_to_json(model: PerfModel, decision: ScheduleDecision, svl_bits: int, precision: Precision) -> dict:
    """Flat cacheable document; exactly the keys a schedule needs to replay."""
    return {
        "a0": model.a0,
        "a1": model.a1,
        "a2": model.a2,
        "a3": model.a3,
        "a4": model.a4,
        "t_neon": decision.t_neon,
        "t_sme": decision.t_sme,
        "r_boundary": decision.r_boundary,
        "svl_bits": svl_bits,
        "precision": precision.value,
    }


def schedule_from_json(doc: dict) -> tuple[PerfModel, ScheduleDecision, int, Precision]:
    model = PerfModel(*(float(doc[k]) for k in ("a0", "a1", "a2", "a3", "a4")))
    decision = ScheduleDecision(int(doc["t_neon"]), int(doc["t_sme"]), int(doc["r_boundary"]))
    return model, decision, int(doc["svl_bits"]), Precision.parse(doc["precision"])
