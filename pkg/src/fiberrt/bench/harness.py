"""Measurement loop: raw switch timing, loop calibration, kernel sampling."""

from __future__ import annotations

import gc
import logging
import statistics
import time
from dataclasses import dataclass, field
from itertools import repeat

from ..ctxcore.stack import stack_new
from ..errors import UnknownKernel
from ..sched import Runtime
from .kernels import KERNEL_CLASS, KERNEL_FUNCS, KERNEL_NAMES

log = logging.getLogger(__name__)

DEFAULT_REPETITIONS = 10
MIN_SAMPLE_NS = 50_000_000
MAX_ITERATIONS = 50_000_000
COUNT_LO, COUNT_HI = 4, 12


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    op_class: int
    inner_iterations: int = 0  # 0: scale until one sample takes MIN_SAMPLE_NS
    repetitions: int = DEFAULT_REPETITIONS

    @classmethod
    def named(cls, name: str, **kw) -> "BenchmarkSpec":
        if name not in KERNEL_CLASS:
            raise UnknownKernel(f"unknown kernel {name!r}")
        return cls(name, KERNEL_CLASS[name], **kw)


@dataclass(frozen=True)
class TimingSample:
    elapsed_ns: int
    iterations: int  # operations performed in the sample

    @property
    def per_op(self) -> float:
        return self.elapsed_ns / self.iterations


@dataclass
class BenchmarkRecord:
    spec: BenchmarkSpec
    backend: str
    samples: list[TimingSample] = field(default_factory=list)
    median_per_op: float = 0.0  # ns, net of loop overhead, clamped at 0
    raw_median_per_op: float = 0.0
    loop_overhead: float | None = 0.0  # None when the source did not record it
    switch_count_per_op: int = 0
    inner_iterations: int = 0
    clamped: bool = False

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def op_class(self) -> int:
        return self.spec.op_class


@dataclass(frozen=True)
class CsloopResult:
    backend: str
    switches_total: int
    ns_per_switch: float
    seconds: float


def timer_resolution_ns(probes: int = 2000) -> int:
    """Smallest non-zero step observed between consecutive clock reads."""
    clock = time.perf_counter_ns
    best = None
    last = clock()
    for _ in range(probes):
        now = clock()
        step = now - last
        if step and (best is None or step < best):
            best = step
        last = now
    declared = int(time.get_clock_info("perf_counter").resolution * 1e9) or 1
    return max(best or declared, declared)


def csloop(rt: Runtime, seconds: float) -> CsloopResult:
    """Ping-pong the lane owner and one partner context for about ``seconds``."""
    if not seconds >= 1:
        raise ValueError(f"csloop needs seconds >= 1, got {seconds!r}")
    if rt.current is not None:
        raise RuntimeError("csloop must run on the lane owner, outside green processes")
    backend = rt.backend
    swap = backend.swap
    owner = rt.idle_ctx
    box = []

    def pong(_):
        partner = box[0]
        while True:
            swap(partner, owner)

    partner = backend.context_init(stack_new(rt.default_stack_bytes), pong, None)
    box.append(partner)
    chunk = 1024
    rounds = 0
    clock = time.perf_counter_ns
    deadline = clock() + int(seconds * 1e9)
    gc_was = gc.isenabled()
    gc.disable()
    try:
        t0 = clock()
        while True:
            for _ in repeat(None, chunk):
                swap(owner, partner)
            rounds += chunk
            if clock() >= deadline:
                break
        elapsed = clock() - t0
    finally:
        if gc_was:
            gc.enable()
        backend.discard(partner)
    switches = 2 * rounds
    return CsloopResult(backend.name, switches, elapsed / switches, elapsed / 1e9)


def _sample(kernel, rt, n) -> TimingSample:
    gc_was = gc.isenabled()
    gc.disable()
    try:
        elapsed, ops = kernel(rt, n)
    finally:
        if gc_was:
            gc.enable()
    return TimingSample(elapsed, ops)


def _scale(kernel, rt, min_sample_ns) -> int:
    n = 16
    while n < MAX_ITERATIONS:
        s = _sample(kernel, rt, n)
        if s.elapsed_ns >= min_sample_ns:
            break
        factor = min_sample_ns / max(s.elapsed_ns, 1) * 1.2
        n = min(MAX_ITERATIONS, int(n * min(max(factor, 2.0), 64.0)))
    return n


def count_switches(rt: Runtime, kernel) -> int:
    """Exact scheduler transfers per operation, from two small runs."""
    before = rt.switches
    _, ops_lo = kernel(rt, COUNT_LO)
    s_lo = rt.switches - before
    before = rt.switches
    _, ops_hi = kernel(rt, COUNT_HI)
    s_hi = rt.switches - before
    per, rem = divmod(s_hi - s_lo, ops_hi - ops_lo)
    if rem:
        raise RuntimeError(f"switch count {s_hi - s_lo} over {ops_hi - ops_lo} ops is not integral")
    return per


def _collect(rt, spec, min_sample_ns):
    kernel = KERNEL_FUNCS[spec.name]
    n = spec.inner_iterations or _scale(kernel, rt, min_sample_ns)
    _sample(kernel, rt, n)  # warm-up, discarded
    samples = [_sample(kernel, rt, n) for _ in range(spec.repetitions)]
    return n, samples


def calibrate_loop_overhead(rt: Runtime, repetitions: int = 5,
                            min_sample_ns: int = MIN_SAMPLE_NS) -> float:
    """Median cost of one empty benchmark-loop iteration, in ns.

    Calibrates twice and warns when the two disagree by more than half.
    """
    spec = BenchmarkSpec.named("loop control overhead", repetitions=repetitions)
    results = []
    for _ in range(2):
        _, samples = _collect(rt, spec, min_sample_ns)
        results.append(statistics.median(s.per_op for s in samples))
    a, b = results
    if abs(a - b) > 0.5 * min(a, b):
        log.warning("loop calibration unstable: %.3f ns vs %.3f ns", a, b)
    return b


def run_kernel(rt: Runtime, spec: BenchmarkSpec | str, *, loop_overhead: float | None = None,
               min_sample_ns: int = MIN_SAMPLE_NS) -> BenchmarkRecord:
    if isinstance(spec, str):
        spec = BenchmarkSpec.named(spec)
    if spec.name not in KERNEL_FUNCS:
        raise UnknownKernel(f"unknown kernel {spec.name!r}")
    if loop_overhead is None:
        loop_overhead = calibrate_loop_overhead(rt, min_sample_ns=min_sample_ns)
    switches = count_switches(rt, KERNEL_FUNCS[spec.name])
    n, samples = _collect(rt, spec, min_sample_ns)
    raw = statistics.median(s.per_op for s in samples)
    net = raw - loop_overhead
    clamped = net < 0
    if clamped:
        if spec.name != "loop control overhead":
            log.warning("%s on %s: %.3f ns below loop overhead, clamped to 0",
                        spec.name, rt.backend_name, -net)
        net = 0.0
    return BenchmarkRecord(spec, rt.backend_name, samples, net, raw, loop_overhead,
                           switches, n, clamped)


def _plan(rt, names, inner_iterations, min_sample_ns):
    """Switch counts and iteration counts for each kernel, plus one warm-up."""
    plan = {}
    for name in names:
        kernel = KERNEL_FUNCS[name]
        switches = count_switches(rt, kernel)
        n = inner_iterations or _scale(kernel, rt, min_sample_ns)
        _sample(kernel, rt, n)
        plan[name] = (n, switches)
    return plan


def _finish_records(backend, plan, samples, repetitions, inner_iterations):
    # the loop-control row doubles as the calibration: it nets out to 0 and
    # every other row is reported net of the same overhead
    records = []
    overhead = statistics.median(s.per_op for s in samples[KERNEL_NAMES[0]])
    for name in KERNEL_NAMES:
        n, switches = plan[name]
        got = samples[name]
        raw = statistics.median(s.per_op for s in got)
        net = raw - overhead
        clamped = net < 0 and name != KERNEL_NAMES[0]
        if clamped:
            log.warning("%s on %s: %.3f ns below loop overhead, clamped to 0",
                        name, backend, -net)
        spec = BenchmarkSpec(name, KERNEL_CLASS[name], inner_iterations, repetitions)
        records.append(BenchmarkRecord(spec, backend, got, max(net, 0.0), raw, overhead,
                                       switches, n, clamped))
    return records


def run_backends(backends, repetitions: int = DEFAULT_REPETITIONS, *,
                 inner_iterations: int = 0, min_sample_ns: int = MIN_SAMPLE_NS,
                 **rt_options) -> list[BenchmarkRecord]:
    """All twelve kernels on every backend, in table order per backend.

    Samples are taken in rounds: each round visits every backend (rotating
    which goes first) and takes one sample of every kernel there.  Slow drift
    of the host's speed then lands on all rows alike instead of on whichever
    backend happened to run during a slow spell.
    """
    backends = list(backends)
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    plans = {}
    for name in backends:
        with Runtime(name, **rt_options) as rt:
            plans[name] = _plan(rt, KERNEL_NAMES, inner_iterations, min_sample_ns)
    samples = {b: {k: [] for k in KERNEL_NAMES} for b in backends}
    k = len(backends)
    for r in range(repetitions):
        for name in backends[r % k:] + backends[:r % k]:
            with Runtime(name, **rt_options) as rt:
                for kernel in KERNEL_NAMES:
                    n = plans[name][kernel][0]
                    samples[name][kernel].append(_sample(KERNEL_FUNCS[kernel], rt, n))
    records = []
    for name in backends:
        records += _finish_records(name, plans[name], samples[name], repetitions,
                                   inner_iterations)
    return records


def run_suite(rt: Runtime, repetitions: int = DEFAULT_REPETITIONS, *,
              inner_iterations: int = 0,
              min_sample_ns: int = MIN_SAMPLE_NS) -> list[BenchmarkRecord]:
    """All twelve kernels on one already-open runtime, sampled in rounds."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    plan = _plan(rt, KERNEL_NAMES, inner_iterations, min_sample_ns)
    samples = {k: [] for k in KERNEL_NAMES}
    for _ in range(repetitions):
        for kernel in KERNEL_NAMES:
            samples[kernel].append(_sample(KERNEL_FUNCS[kernel], rt, plan[kernel][0]))
    return _finish_records(rt.backend_name, plan, samples, repetitions, inner_iterations)


__all__ = [
    "BenchmarkSpec", "TimingSample", "BenchmarkRecord", "CsloopResult",
    "csloop", "calibrate_loop_overhead", "run_kernel", "run_suite", "run_backends",
    "count_switches", "timer_resolution_ns",
]
