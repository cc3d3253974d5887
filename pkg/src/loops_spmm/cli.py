"""Command-line front end: convert, verify, calibrate and benchmark matrices.

Exit codes: 0 success, 1 verification failure, 2 input error.
"""

from __future__ import annotations

import json
import os
import sys
import time
from dataclasses import dataclass

import click
import numpy as np

from .core import (
    SPMM_ERROR_BOUNDS,
    CsrMatrix,
    Precision,
    max_relative_error,
    reference_spmm,
)
from .engine import EngineConfig
from .formats import block_density, convert_csr_to_loops, write_loops_file
from .kernels import KernelConfig, flop_count, spmm_loops
from .mtxio import MatrixMarketError, parse_matrix_market
from .scheduler import (
    PerfModel,
    ScheduleDecision,
    calibrate,
    default_candidates,
    fit_perf_model,
    measure_throughput,
    schedule_from_json,
    schedule_to_json,
    select_threads,
    solve_row_boundary,
)

# Seed for the dense operand used by verify/bench so runs reproduce anywhere.
B_SEED = 8191
WARMUP_RUNS = 5


class InputError(click.ClickException):
    exit_code = 2


def _load_matrix(path: str, precision: Precision) -> CsrMatrix:
    try:
        with open(path, "rb") as fh:
            return parse_matrix_market(fh, precision)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from exc
    except MatrixMarketError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _dense_operand(ncols_a: int, n: int, precision: Precision) -> np.ndarray:
    rng = np.random.default_rng(B_SEED)
    return rng.uniform(-1.0, 1.0, size=(ncols_a, n)).astype(precision.dtype)


precision_option = click.option(
    "--precision",
    type=click.Choice(["fp64", "fp32", "fp16"]),
    default="fp64",
    show_default=True,
    help="Value precision of the computation.",
)
svl_option = click.option(
    "--svl-bits",
    type=click.Choice(["128", "256", "512", "1024"]),
    default="512",
    show_default=True,
    help="Streaming vector length of the tile engine.",
)
ncols_option = click.option(
    "--n-cols", type=int, default=32, show_default=True, help="Columns of the dense operand."
)
threads_option = click.option(
    "--threads", type=int, default=None, help="Total worker budget [default: CPU count]."
)
tiles_option = click.option(
    "--tiles-in-flight", type=int, default=None, help="Accumulators advanced together [default: budget]."
)


@click.group()
def main():
    """Hybrid-format SpMM engine: row-wise CSR plus vector-wise tiled execution."""


@dataclass
class BenchReport:
    matrix_id: str
    precision: str
    nnz: int
    n: int
    decision: ScheduleDecision
    gflops_median: float
    gflops_mean: float
    gflops_all: list[float]
    block_density: float | None
    convert_time: float
    exec_time_median: float
    exec_time_mean: float

    def to_json(self) -> dict:
        doc = {
            "matrix_id": self.matrix_id,
            "precision": self.precision,
            "nnz": self.nnz,
            "n": self.n,
            "t_neon": self.decision.t_neon,
            "t_sme": self.decision.t_sme,
            "r_boundary": self.decision.r_boundary,
            "gflops_median": self.gflops_median,
            "gflops_mean": self.gflops_mean,
            "gflops_all": self.gflops_all,
            "block_density": self.block_density,
            "convert_time": self.convert_time,
            "exec_time_median": self.exec_time_median,
            "exec_time_mean": self.exec_time_mean,
        }
        return doc

    def to_csv_lines(self) -> list[str]:
        doc = self.to_json()
        doc.pop("gflops_all")  # per-run samples stay JSON-only
        keys = list(doc)
        return [
            ",".join(keys),
            ",".join("" if doc[k] is None else str(doc[k]) for k in keys),
        ]


def _schedule_for(
    a: CsrMatrix,
    b: np.ndarray,
    cfg: KernelConfig,
    threads_total: int,
    cache_path: str | None,
) -> tuple[PerfModel, ScheduleDecision, bool]:
    """Load a cached schedule if present, else calibrate, fit, select and solve."""
    if cache_path and os.path.exists(cache_path):
        with open(cache_path, "r", encoding="ascii") as fh:
            model, decision, _, _ = schedule_from_json(json.load(fh))
        return model, decision, True
    samples = calibrate(a, b, default_candidates(threads_total), cfg, core_budget=threads_total)
    model = fit_perf_model(samples)
    t_neon, t_sme = select_threads(model, threads_total)
    tp = measure_throughput(a, b, cfg)
    boundary = solve_row_boundary(a.nrows, tp, t_neon, t_sme)
    return model, ScheduleDecision(t_neon, t_sme, boundary), False


@main.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="Cache file [default: INPUT.loops].")
@click.option("--r-boundary", default="auto", show_default=True, help="Row split, an integer or 'auto'.")
@precision_option
@svl_option
@ncols_option
@threads_option
@click.option("--schedule-cache", type=click.Path(dir_okay=False), default=None)
def convert(input_path, output, r_boundary, precision, svl_bits, n_cols, threads, schedule_cache):
    """Convert a Matrix Market file into the hybrid binary cache format."""
    prec = Precision.parse(precision)
    engine = EngineConfig(int(svl_bits))
    a = _load_matrix(input_path, prec)
    output = output or input_path + ".loops"

    if r_boundary == "auto":
        cfg = KernelConfig(engine, n_cols)
        b = _dense_operand(a.ncols, n_cols, prec)
        threads_total = threads or os.cpu_count() or 1
        model, decision, _ = _schedule_for(a, b, cfg, threads_total, schedule_cache)
        boundary = decision.r_boundary
        sidecar = schedule_cache or output + ".schedule.json"
        with open(sidecar, "w", encoding="ascii") as fh:
            json.dump(schedule_to_json(model, decision, engine.svl_bits, prec), fh, indent=2)
            fh.write("\n")
        click.echo(f"schedule: {sidecar}")
    else:
        try:
            boundary = int(r_boundary)
        except ValueError:
            raise InputError(f"--r-boundary must be an integer or 'auto', got {r_boundary!r}") from None
        if not 0 <= boundary <= a.nrows:
            raise InputError(f"--r-boundary must be in [0, {a.nrows}], got {boundary}")

    m = convert_csr_to_loops(a, boundary, engine.lanes(prec))
    try:
        write_loops_file(m, output)
    except OSError as exc:
        raise InputError(f"{output}: {exc.strerror or exc}") from exc
    click.echo(f"wrote {output} (r_boundary={boundary}, lanes={m.lanes}, nnz={m.nnz})")


@main.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@precision_option
@svl_option
@ncols_option
@tiles_option
def verify(input_path, precision, svl_bits, n_cols, tiles_in_flight):
    """Check hybrid execution against the FP64 oracle at several splits."""
    prec = Precision.parse(precision)
    engine = EngineConfig(int(svl_bits))
    cfg = KernelConfig(engine, n_cols, tiles_in_flight)
    a = _load_matrix(input_path, prec)
    b = _dense_operand(a.ncols, n_cols, prec)
    oracle = reference_spmm(a, b)
    bound = SPMM_ERROR_BOUNDS[prec]

    splits = sorted({0, a.nrows // 3, a.nrows // 2, a.nrows})
    all_ok = True
    for boundary in splits:
        m = convert_csr_to_loops(a, boundary, engine.lanes(prec))
        for t_neon, t_sme in ((1, 1), (2, 2)):
            c = spmm_loops(m, b, ScheduleDecision(t_neon, t_sme, boundary), cfg)
            err = max_relative_error(a, b, c, oracle)
            ok = err <= bound
            all_ok &= ok
            click.echo(
                f"r_boundary={boundary:<8d} threads=({t_neon},{t_sme}) "
                f"max_rel_err={err:.3e} bound={bound:.0e} {'ok' if ok else 'FAIL'}"
            )
    if not all_ok:
        click.echo("verification FAILED", err=True)
        sys.exit(1)
    click.echo("verification passed")


@main.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@precision_option
@svl_option
@ncols_option
@threads_option
@tiles_option
@click.option("--reps", type=int, default=50, show_default=True, help="Timed repetitions.")
@click.option("--out", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("--schedule-cache", type=click.Path(dir_okay=False), default=None)
def bench(input_path, precision, svl_bits, n_cols, threads, tiles_in_flight, reps, out, schedule_cache):
    """Calibrate, schedule and time hybrid SpMM, reporting GFLOPS."""
    if reps < 1:
        raise InputError(f"--reps must be >= 1, got {reps}")
    prec = Precision.parse(precision)
    engine = EngineConfig(int(svl_bits))
    cfg = KernelConfig(engine, n_cols, tiles_in_flight)
    a = _load_matrix(input_path, prec)
    b = _dense_operand(a.ncols, n_cols, prec)
    threads_total = threads or os.cpu_count() or 1

    model, decision, cached = _schedule_for(a, b, cfg, threads_total, schedule_cache)
    if schedule_cache and not cached:
        with open(schedule_cache, "w", encoding="ascii") as fh:
            json.dump(schedule_to_json(model, decision, engine.svl_bits, prec), fh, indent=2)
            fh.write("\n")

    t0 = time.perf_counter()
    m = convert_csr_to_loops(a, decision.r_boundary, engine.lanes(prec))
    convert_time = time.perf_counter() - t0

    for _ in range(WARMUP_RUNS):
        spmm_loops(m, b, decision, cfg)
    gflop = flop_count(m, n_cols) / 1e9
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        spmm_loops(m, b, decision, cfg)
        times.append(max(time.perf_counter() - t0, 1e-9))
    times_arr = np.array(times)
    exec_median = float(np.median(times_arr))

    density = block_density(m.bcsr_part) if m.bcsr_part.ntiles else None
    report = BenchReport(
        matrix_id=os.path.splitext(os.path.basename(input_path))[0],
        precision=prec.value,
        nnz=m.nnz,
        n=n_cols,
        decision=decision,
        gflops_median=gflop / exec_median,
        gflops_mean=float(np.mean(gflop / times_arr)),
        gflops_all=[gflop / t for t in times],
        block_density=density,
        convert_time=convert_time,
        exec_time_median=exec_median,
        exec_time_mean=float(np.mean(times_arr)),
    )
    if out == "json":
        click.echo(json.dumps(report.to_json(), indent=2))
    else:
        click.echo("\n".join(report.to_csv_lines()))


@main.command(name="calibrate")
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@precision_option
@svl_option
@ncols_option
@threads_option
@tiles_option
@click.option("--schedule-cache", type=click.Path(dir_okay=False), default=None)
def calibrate_cmd(input_path, precision, svl_bits, n_cols, threads, tiles_in_flight, schedule_cache):
    """Fit the performance model and emit the schedule document."""
    prec = Precision.parse(precision)
    engine = EngineConfig(int(svl_bits))
    cfg = KernelConfig(engine, n_cols, tiles_in_flight)
    a = _load_matrix(input_path, prec)
    b = _dense_operand(a.ncols, n_cols, prec)
    threads_total = threads or os.cpu_count() or 1

    model, decision, cached = _schedule_for(a, b, cfg, threads_total, schedule_cache)
    doc = schedule_to_json(model, decision, engine.svl_bits, prec)
    if schedule_cache and not cached:
        with open(schedule_cache, "w", encoding="ascii") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    click.echo(json.dumps(doc, indent=2))


if __name__ == "__main__":
    main()
