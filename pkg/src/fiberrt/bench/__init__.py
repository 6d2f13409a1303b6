"""Raw switch timing (csloop) and the twelve-kernel run time system suite."""

from .harness import (
    BenchmarkRecord,
    BenchmarkSpec,
    CsloopResult,
    TimingSample,
    calibrate_loop_overhead,
    count_switches,
    csloop,
    run_backends,
    run_kernel,
    run_suite,
    timer_resolution_ns,
)
from .kernels import COUNTERPART, KERNEL_CLASS, KERNEL_NAMES, KERNELS
from .report import records_from_csv, records_from_json, records_from_text, report_render

__all__ = [
    "BenchmarkRecord", "BenchmarkSpec", "CsloopResult", "TimingSample",
    "calibrate_loop_overhead", "count_switches", "csloop", "run_backends", "run_kernel",
    "run_suite", "timer_resolution_ns", "COUNTERPART", "KERNEL_CLASS", "KERNEL_NAMES",
    "KERNELS", "records_from_csv", "records_from_json", "records_from_text", "report_render",
]
