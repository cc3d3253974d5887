"""Hybrid-format SpMM engine.

Splits a sparse matrix into a row-wise CSR part and a vector-wise tiled
part, executes them on dedicated kernel paths (row AXPY vs. outer-product
tile accumulation) concurrently, and balances the split with a calibrated
quadratic performance model.
"""

from .core import (
    SPMM_ERROR_BOUNDS,
    CsrMatrix,
    Precision,
    densify,
    error_scale,
    max_relative_error,
    random_sparse,
    reference_spmm,
)
from .engine import (
    EngineConfig,
    fmopa,
    fmopa_2way_fp16,
    load_tile,
    make_accumulator,
    store_tile,
    zip_lower,
    zip_upper,
)
from .formats import (
    BcsrPart,
    LoopsMatrix,
    block_density,
    convert_csr_to_loops,
    loops_to_csr,
    read_loops_file,
    write_loops_file,
)
from .kernels import (
    KernelConfig,
    downcast_to_fp16,
    flop_count,
    spmm_bcsr_blocks,
    spmm_bcsr_blocks_fp16,
    spmm_csr_rows,
    spmm_loops,
    split_range,
)
from .mtxio import MatrixMarketError, parse_matrix_market, write_matrix_market
from .scheduler import (
    CalibrationSample,
    PerfModel,
    RankDeficientError,
    ScheduleDecision,
    ThroughputEstimate,
    calibrate,
    default_candidates,
    fit_perf_model,
    measure_throughput,
    predict,
    schedule_from_json,
    schedule_to_json,
    select_threads,
    solve_row_boundary,
)

__version__ = "0.1.0"
