"""Self-checking harness for the context switch layer and the runtime.

``run_cstest`` exercises switching and guard detection on one backend;
``run_vsuite`` runs the runtime-level semantics suite (sync invariants,
oracle equivalence against :mod:`fiberrt.refsim`, deadlock detection).
Both return a :class:`VerifyReport`; failures never raise.
"""

from __future__ import annotations

import contextlib
import faulthandler
import json
import random
import struct
import sys
import zlib
from collections import Counter
from dataclasses import asdict, dataclass, field

from .ctxcore import backends as _backends
from .ctxcore.stack import DEFAULT_STACK_BYTES, StackStatus, stack_check, stack_new
from .errors import BackendUnavailable, DeadlockDetected
from .programs import Program, execute, generate_program
from .refsim import simulate
from .sched import Runtime
from .sync import DIRECT, INPUT, Operation, Semaphore

PASS, FAIL, SKIP = "pass", "fail", "skip"

DEFAULT_TIMEOUT = 30.0


@dataclass
class CheckResult:
    name: str
    status: str
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == PASS


@dataclass
class VerifyReport:
    suite: str
    backend: str
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def overall(self) -> bool:
        return all(c.status != FAIL for c in self.checks)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if c.status == FAIL]

    def to_dict(self) -> dict:
        return {"suite": self.suite, "backend": self.backend, "overall": self.overall,
                "checks": [asdict(c) for c in self.checks]}

    def render(self) -> str:
        width = max((len(c.name) for c in self.checks), default=10)
        lines = [f"{self.suite} [{self.backend}]"]
        for i, c in enumerate(self.checks, 1):
            lines.append(f"  {i:2d}. {c.name:<{width}}  {c.status.upper():4}  {c.detail}".rstrip())
        lines.append(f"  overall: {'PASS' if self.overall else 'FAIL'}")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


class CheckFailed(AssertionError):
    pass


def _expect(cond, message):
    if not cond:
        raise CheckFailed(message)


@contextlib.contextmanager
def _watchdog(timeout):
    # a hung check can only be killed, not interrupted: cooperative code
    # never returns to us
    armed = False
    if timeout:
        try:
            faulthandler.dump_traceback_later(timeout, exit=True, file=sys.__stderr__)
            armed = True
        except (AttributeError, ValueError, OSError, RuntimeError):
            pass
    try:
        yield
    finally:
        if armed:
            faulthandler.cancel_dump_traceback_later()


def _run_checks(report, checks, timeout):
    for name, fn in checks:
        with _watchdog(timeout):
            try:
                detail = fn()
                report.checks.append(CheckResult(name, PASS, detail or ""))
            except _Skipped as skip:
                report.checks.append(CheckResult(name, SKIP, str(skip)))
            except Exception as exc:
                msg = str(exc) if isinstance(exc, CheckFailed) else f"{type(exc).__name__}: {exc}"
                report.checks.append(CheckResult(name, FAIL, msg))
    return report


class _Skipped(Exception):
    pass


# -- context switch test -----------------------------------------------------

FRAME_WORDS = 64


def _frame(rng):
    return struct.pack(f"<{FRAME_WORDS}I", *(rng.getrandbits(32) for _ in range(FRAME_WORDS)))


class _CsTest:
    def __init__(self, backend, guards, stack_bytes):
        self.backend = backend
        self.guards = guards
        self.stack_bytes = stack_bytes

    def runtime(self, **kw):
        return Runtime(self.backend, self.stack_bytes, guards=self.guards, **kw)

    def stack(self):
        return stack_new(self.stack_bytes, guards=self.guards)

    def ping_pong(self):
        with self.runtime() as rt:
            b = rt.backend
            owner = rt.idle_ctx
            sa, sb = self.stack(), self.stack()
            log, seen = [], []
            ctx = {}

            def fa(arg):
                seen.append(arg)
                for _ in range(3):
                    log.append("A")
                    b.swap(ctx["a"], ctx["b"])

            def fb(arg):
                seen.append(arg)
                for i in range(3):
                    log.append("B")
                    b.swap(ctx["b"], ctx["a"] if i < 2 else owner)

            ctx["a"] = b.context_init(sa, fa, 42)
            ctx["b"] = b.context_init(sb, fb, 43)
            b.swap(owner, ctx["a"])
            for c in ctx.values():
                b.discard(c)
            _expect(log == list("ABABAB"), f"interleaving {''.join(log)} != ABABAB")
            _expect(seen == [42, 43], f"entry arguments {seen} != [42, 43]")
            for s in (sa, sb):
                _expect(stack_check(s) is StackStatus.INTACT, f"{s!r} not intact")
        return "A,B,A,B,A,B"

    def round_trip(self, n_contexts=3, total=999):
        with self.runtime() as rt:
            b = rt.backend
            owner = rt.idle_ctx
            per = total // n_contexts
            ctxs = []
            activations = [0] * n_contexts
            errors = []

            def body(idx):
                stack = ctxs[idx].stack
                rng = random.Random(1000 + idx)
                nxt = (idx + 1) % n_contexts
                sp = stack.usable_hi
                saved = None
                for k in range(per):
                    if saved is not None:
                        local_i, local_f, local_t, frame_sp, crc = saved
                        if zlib.crc32(stack.read(frame_sp, FRAME_WORDS * 4)) != crc:
                            errors.append(f"ctx{idx} frame checksum changed at activation {k}")
                        if (local_i, local_f, local_t) != (k * 7 + idx, k / 3.0, (idx, k)):
                            errors.append(f"ctx{idx} locals changed at activation {k}")
                    activations[idx] += 1
                    frame = _frame(rng)
                    frame_sp = stack.push(sp, frame)
                    saved = (k + 1) * 7 + idx, (k + 1) / 3.0, (idx, k + 1), frame_sp, zlib.crc32(frame)
                    last = idx == n_contexts - 1 and k == per - 1
                    b.swap(ctxs[idx], owner if last else ctxs[nxt])

            for i in range(n_contexts):
                ctxs.append(b.context_init(self.stack(), body, i))
            b.swap(owner, ctxs[0])
            stacks = [c.stack for c in ctxs]
            for c in ctxs:
                b.discard(c)
            _expect(not errors, "; ".join(errors[:3]))
            _expect(activations == [per] * n_contexts,
                    f"activations {activations} != {[per] * n_contexts}")
            for s in stacks:
                _expect(stack_check(s) is StackStatus.INTACT, f"{s!r} not intact")
        return f"{n_contexts} contexts x {per} activations, checksums stable"

    def _victim(self, fault):
        with self.runtime() as rt:
            b = rt.backend
            owner = rt.idle_ctx
            bystander = self.stack()
            victim = self.stack()
            box = {}

            def runaway(_):
                # controlled writes only: the region is never left
                if fault == "overflow":
                    sp = victim.usable_hi
                    frame = bytes(256)
                    while sp - len(frame) >= victim.usable_lo:
                        sp = victim.push(sp, frame)
                    while sp - 4 >= victim.usable_lo:
                        sp = victim.push(sp, b"\0\0\0\0")
                    victim.push(sp, b"\xde\xad\xbe\xef")
                else:
                    victim.write(victim.usable_hi, b"\xde\xad\xbe\xef")
                b.swap(box["v"], owner)

            box["v"] = b.context_init(victim, runaway, None)
            box["o"] = b.context_init(bystander, lambda _: None, None)
            b.swap(owner, box["v"])
            b.discard(box["v"])
            b.discard(box["o"])
            status = stack_check(victim)
            want = StackStatus.OVERFLOW if fault == "overflow" else StackStatus.UNDERFLOW
            _expect(status is want, f"victim stack reports {status.value}, expected {want.value}")
            _expect(stack_check(bystander) is StackStatus.INTACT, "bystander stack damaged")
        return f"{want.value} detected on victim, bystander intact"

    def overflow(self):
        return self._victim("overflow")

    def underflow(self):
        return self._victim("underflow")

    def fairness(self, n=4, rounds=5):
        with self.runtime() as rt:
            log = []

            def body(_):
                for r in range(rounds):
                    log.append(rt.current.pid)
                    rt.yield_()

            pids = [rt.spawn(body) for _ in range(n)]
            rt.run_until_idle()
            want = pids * rounds
            _expect(log == want, f"activation order {log[:12]}... is not round-robin")
        return f"{n} processes x {rounds} rounds round-robin"

    def conservation(self, burst=100):
        with self.runtime() as rt:
            done = Semaphore(rt, 0)

            def child(_):
                done.v()

            def parent(_):
                rt.spawn(child)
                done.p()

            for _ in range(5):
                rt.spawn(parent)
            s = rt.run_until_idle()
            _expect(s.spawned == s.ended == 10, f"spawned {s.spawned} ended {s.ended}, expected 10/10")
            for _ in range(burst):
                rt.spawn(child)
            s = rt.run_until_idle()
            _expect(s.spawned == s.ended, f"spawned {s.spawned} != ended {s.ended}")
            _expect(len(rt.stack_pool) <= rt.pool_cap,
                    f"stack pool {len(rt.stack_pool)} exceeds cap {rt.pool_cap}")
            _expect(not rt.stack_faults, f"stack faults {rt.stack_faults}")
        return f"spawned = ended = {s.ended}"


CSTEST_CHECKS = (
    ("ping-pong trace", "ping_pong"),
    ("local-state round trip", "round_trip"),
    ("overflow detection", "overflow"),
    ("underflow detection", "underflow"),
    ("cycle fairness", "fairness"),
    ("spawn/exit conservation", "conservation"),
)


def run_cstest(backend_name: str = "fast", *, guards: bool | None = None,
               stack_bytes: int = DEFAULT_STACK_BYTES,
               timeout: float | None = DEFAULT_TIMEOUT) -> VerifyReport:
    """Run the six switching/guard checks on one backend.

    ``guards=False`` builds every stack without canaries (the negative
    control); checks 3 and 4 must then fail.
    """
    if not _backends.backend_available(backend_name):
        raise BackendUnavailable(f"backend {backend_name!r} is not available in this build")
    t = _CsTest(backend_name, guards, stack_bytes)
    report = VerifyReport("cstest", backend_name)
    return _run_checks(report, [(name, getattr(t, meth)) for name, meth in CSTEST_CHECKS], timeout)


# -- integrated suite ----------------------------------------------------------

@dataclass
class VsuiteConfig:
    backend: str = "fast"
    trace: bool = True
    programs: int = 24
    seed: int = 0x5EED
    stack_bytes: int = DEFAULT_STACK_BYTES
    perturb_ready_order: bool = False
    timeout: float | None = DEFAULT_TIMEOUT


def program_set(seed: int, count: int, max_procs: int = 4, max_events: int = 50) -> list[Program]:
    """``count`` seeded programs, roughly half of which run to completion."""
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        prog = generate_program(rng, max_procs, max_events)
        want_ok = len(out) % 2 == 0
        for _ in range(50):
            if (simulate(prog).status == "ok") == want_ok:
                break
            prog = generate_program(rng, max_procs, max_events)
        out.append(prog)
    return out


def _legal_transitions(trace) -> list[str]:
    state = {}
    moves = {
        "SPAWN": (None, "Ready"),
        "RUN": ("Ready", "Running"),
        "YIELD": ("Running", "Ready"),
        "BLOCK": ("Running", "Blocked"),
        "UNBLOCK": ("Blocked", "Ready"),
        "EXIT": ("Running", "Ended"),
    }
    bad = []
    running = None
    for seq, event, pid in trace:
        if event not in moves:
            if event in ("SEND", "CALLSTART", "REPLY", "RECV") and pid != 0 and state.get(pid) != "Running":
                bad.append(f"{seq}: {event} by non-running pid {pid}")
            continue
        src, dst = moves[event]
        if state.get(pid) != src:
            bad.append(f"{seq}: {event} {pid} from {state.get(pid)}")
        state[pid] = dst
        if dst == "Running":
            if running is not None:
                bad.append(f"{seq}: {pid} runs while {running} is running")
            running = pid
        elif src == "Running":
            running = None
    return bad


class _VSuite:
    def __init__(self, cfg: VsuiteConfig):
        self.cfg = cfg
        self.programs = program_set(cfg.seed, cfg.programs)
        self.stack_faults = []
        self._results = None

    def rt_options(self):
        return {"perturb_ready_order": self.cfg.perturb_ready_order,
                "default_stack_bytes": self.cfg.stack_bytes}

    def results(self):
        if self._results is None:
            self._results = []
            for prog in self.programs:
                out = execute(prog, self.cfg.backend, trace=self.cfg.trace, **self.rt_options())
                self.stack_faults += out.stack_faults
                self._results.append((prog, out))
        return self._results

    def need_trace(self):
        if not self.cfg.trace:
            raise _Skipped("tracing disabled")

    def oracle_equivalence(self):
        self.need_trace()
        mismatched = [i for i, (prog, out) in enumerate(self.results())
                      if simulate(prog).comparable() != out.comparable()]
        _expect(not mismatched, f"programs {mismatched[:5]} diverge from the reference simulator")
        ok = sum(out.status == "ok" for _, out in self.results())
        return f"{len(self.programs)} programs ({ok} terminating) match the reference"

    def semaphore_conservation(self):
        checked = 0
        for prog, out in self.results():
            if out.status != "ok":
                continue
            ops = Counter((ins[0], ins[1]) for body in prog.procs for ins in body if ins[0] in "PV")
            for s, init in enumerate(prog.sems):
                want = init + ops[("V", s)] - ops[("P", s)]
                _expect(out.sem_counts[s] == want,
                        f"semaphore {s}: final {out.sem_counts[s]} != {init} + #V - #P = {want}")
            checked += 1
        return f"{checked} terminating programs"

    def message_conservation(self):
        checked = 0
        for prog, out in self.results():
            if out.status != "ok":
                continue
            for o in range(prog.n_ops):
                sent = sum(1 for body in prog.procs for ins in body
                           if ins[0] in ("SEND", "CALL") and ins[1] == o)
                received = sum(1 for body in prog.procs for ins in body
                               if ins[0] in ("RECV", "SERVE") and ins[1] == o)
                _expect(sent == received + out.inbox[o],
                        f"operation {o}: sent {sent} != received {received} + residue {out.inbox[o]}")
            checked += 1
        return f"{checked} terminating programs"

    def no_lost_wakeups(self):
        self.need_trace()
        for i, (_, out) in enumerate(self.results()):
            if out.status != "ok":
                continue
            waiting = set()
            for seq, event, pid in out.trace:
                if event == "BLOCK":
                    waiting.add(pid)
                elif event == "UNBLOCK":
                    _expect(pid in waiting, f"program {i}: spurious wakeup of {pid} at {seq}")
                    waiting.discard(pid)
            _expect(not waiting, f"program {i}: {sorted(waiting)} never woken")
        return ""

    def state_machine(self):
        self.need_trace()
        for i, (_, out) in enumerate(self.results()):
            bad = _legal_transitions(out.trace)
            if bad:
                raise CheckFailed(f"program {i}: {bad[0]}")
        return "Ready->Running->{Ready,Blocked,Ended}, Blocked->Ready only"

    def fifo_wakeup(self):
        with Runtime(self.cfg.backend, **self.rt_options()) as rt:
            s = Semaphore(rt, 0)
            order = []

            def waiter(_):
                s.p()
                order.append(rt.current.pid)

            pids = [rt.spawn(waiter) for _ in range(3)]
            try:
                rt.run_until_idle()
            except DeadlockDetected:
                pass
            for _ in pids:
                s.v()
            rt.run_until_idle()
            _expect(order == pids, f"resume order {order} != block order {pids}")
        return "resume order = block order"

    def switch_arithmetic(self):
        counts = {}
        for name, fn in (("pair", _count_sem_pair), ("pingpong", _count_sem_pingpong),
                         ("local", _count_local_call), ("rendezvous", _count_rendezvous)):
            with Runtime(self.cfg.backend, **self.rt_options()) as rt:
                counts[name] = _per_op(rt, fn)
        _expect(counts["pair"] == 0, f"semaphore pair costs {counts['pair']} switches")
        _expect(counts["pingpong"] == counts["pair"] + 1,
                f"semaphore with switch costs {counts['pingpong']}, pair {counts['pair']}")
        _expect(counts["rendezvous"] == counts["local"] + 2,
                f"rendezvous costs {counts['rendezvous']}, local call {counts['local']}")
        return ", ".join(f"{k}={v}" for k, v in counts.items())

    def deadlock_detection(self):
        with Runtime(self.cfg.backend, **self.rt_options()) as rt:
            s = Semaphore(rt, 0)
            pid = rt.spawn(lambda _: s.p())
            try:
                rt.run_until_idle()
            except DeadlockDetected as exc:
                _expect(exc.blocked == [pid], f"blocked {exc.blocked} != [{pid}]")
                return "P on empty semaphore reported"
        raise CheckFailed("run_until_idle returned with a blocked process")

    def determinism(self):
        self.need_trace()
        prog = self.programs[0]
        a = execute(prog, self.cfg.backend, **self.rt_options())
        b = execute(prog, self.cfg.backend, **self.rt_options())
        _expect(a.comparable() == b.comparable(), "two runs of one program differ")
        return ""

    def guard_stability(self):
        self.results()
        _expect(not self.stack_faults, f"stack faults {self.stack_faults[:3]}")
        return ""


VSUITE_CHECKS = (
    ("oracle equivalence", "oracle_equivalence"),
    ("semaphore conservation", "semaphore_conservation"),
    ("message conservation", "message_conservation"),
    ("no lost wakeups", "no_lost_wakeups"),
    ("state machine", "state_machine"),
    ("FIFO wakeup", "fifo_wakeup"),
    ("switch-count arithmetic", "switch_arithmetic"),
    ("deadlock detection", "deadlock_detection"),
    ("determinism", "determinism"),
    ("guard stability", "guard_stability"),
)


def run_vsuite(config: VsuiteConfig | None = None, **overrides) -> VerifyReport:
    cfg = config or VsuiteConfig()
    for key, value in overrides.items():
        setattr(cfg, key, value)
    if not _backends.backend_available(cfg.backend):
        raise BackendUnavailable(f"backend {cfg.backend!r} is not available in this build")
    suite = _VSuite(cfg)
    report = VerifyReport("vsuite", cfg.backend)
    return _run_checks(report, [(name, getattr(suite, meth)) for name, meth in VSUITE_CHECKS],
                       cfg.timeout)


# -- switch counting helpers ------------------------------------------------------
#
# Each helper runs n operations and returns (switches, ops).  Per-op cost is
# taken as the difference between two iteration counts so that process
# start-up and exit drop out exactly.

def _per_op(rt, fn, lo=4, hi=12):
    s_lo, ops_lo = fn(rt, lo)
    s_hi, ops_hi = fn(rt, hi)
    per, rem = divmod(s_hi - s_lo, ops_hi - ops_lo)
    if rem:
        raise CheckFailed(f"non-integral switch count {(s_hi - s_lo)}/{ops_hi - ops_lo}")
    return per


def _switches(rt):
    before = rt.switches
    rt.run_until_idle()
    return rt.switches - before


def _count_sem_pair(rt, n):
    s = Semaphore(rt, 1)

    def body(_):
        for _ in range(n):
            s.p()
            s.v()
    rt.spawn(body)
    return _switches(rt), n


def _count_sem_pingpong(rt, n):
    sa, sb = Semaphore(rt, 0), Semaphore(rt, 0)

    def a(_):
        for _ in range(n):
            sb.v()
            sa.p()

    def b(_):
        for _ in range(n):
            sb.p()
            sa.v()
    rt.spawn(a)
    rt.spawn(b)
    return _switches(rt), 2 * n


def _count_local_call(rt, n):
    op = Operation(rt, DIRECT, 0, lambda x: x)

    def body(_):
        for i in range(n):
            op.call(i)
    rt.spawn(body, resource_id=0)
    return _switches(rt), n


def _count_rendezvous(rt, n):
    op = Operation(rt, INPUT)

    def caller(_):
        for i in range(n):
            op.call(i)

    def servicer(_):
        for _ in range(n):
            inv = op.receive()
            inv.reply(inv.args[0])
    rt.spawn(caller)
    rt.spawn(servicer)
    return _switches(rt), n
