"""Benchmark harness: ledger experiments, cipher timing, CSV/histogram export."""
from .experiments import (
    DEFAULT_SIZES,
    KB,
    PAPER_DIFFICULTY,
    ExperimentConfig,
    MessageSizeResult,
    RunResult,
    SizeStats,
    concurrency_schedule,
    least_squares_slope,
    message_size_schedule,
    run_concurrency_experiment,
    run_message_size_experiment,
)
from .output import (
    CSV_HEADER,
    Row,
    concurrency_rows,
    histogram,
    message_size_rows,
    read_csv,
    sm3_rows,
    sm4_rows,
    write_csv,
    write_histograms,
    write_sidecar,
)
from .timing import (
    SM3_PAYLOAD,
    SM3_REFERENCE_MS,
    SM4_SIZES,
    Distribution,
    Sm3Timing,
    Sm4Timing,
    run_sm3_timing,
    run_sm4_timing,
)

__all__ = [name for name in dir() if not name.startswith("_")]
