"""Cooperative FIFO scheduler for green processes.

Switching is direct: a process that blocks, yields or exits hands control
straight to the head of the ready queue.  The lane owner's context (the
"idle" context) only regains control when the ready queue runs dry, which is
where deadlock is detected.
"""

from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass
from typing import Callable, Deque

from .ctxcore import backends as _backends
from .ctxcore.stack import (
    DEFAULT_STACK_BYTES,
    MIN_STACK_BYTES,
    STACK_ALIGNMENT,
    StackStatus,
    stack_check,
    stack_new,
)
from .errors import DeadlockDetected, NotInProcess, SchedulerError, StackFault

log = logging.getLogger(__name__)

DEFAULT_POOL_CAP = 64

TRACE_EVENTS = ("SPAWN", "RUN", "YIELD", "BLOCK", "UNBLOCK", "EXIT",
                "SEND", "RECV", "CALLSTART", "REPLY")

# pid used in trace lines for actions taken by the lane owner
OWNER_PID = 0


class ProcState(enum.Enum):
    READY = "Ready"
    RUNNING = "Running"
    BLOCKED = "Blocked"
    ENDED = "Ended"


READY = ProcState.READY
RUNNING = ProcState.RUNNING
BLOCKED = ProcState.BLOCKED
ENDED = ProcState.ENDED


class ProcessExit(BaseException):
    """Raised by :meth:`Runtime.exit` to unwind the calling process."""


class Process:
    """Scheduler-visible descriptor of one green process."""

    __slots__ = ("pid", "state", "stack", "ctx", "resource_id", "entry", "arg",
                 "mailbox")

    def __init__(self, pid, stack, resource_id, entry, arg):
        self.pid = pid
        self.state = READY
        self.stack = stack
        self.ctx = None
        self.resource_id = resource_id
        self.entry = entry
        self.arg = arg
        self.mailbox = None

    def __repr__(self):
        return f"<Process {self.pid} {self.state.value} resource={self.resource_id}>"


ProcessDescriptor = Process


@dataclass(frozen=True)
class RunSummary:
    spawned: int
    ended: int
    switches: int


class Runtime:
    """One virtual machine: a ready queue of green processes on one lane.

    Use as a context manager, or call :meth:`close`, so that the backend
    selection is released and any still-suspended processes are torn down.
    """

    def __init__(self, backend: str = "fast", default_stack_bytes: int = DEFAULT_STACK_BYTES, *,
                 trace: bool = False, pool: bool = True, pool_cap: int = DEFAULT_POOL_CAP,
                 min_stack_bytes: int = MIN_STACK_BYTES, check_on_switch: bool = False,
                 guards: bool | None = None, perturb_ready_order: bool = False):
        if default_stack_bytes < min_stack_bytes:
            # same floor stack_new enforces; fail before selecting a backend
            stack_new(default_stack_bytes, min_bytes=min_stack_bytes)
        self.backend = _backends.backend_select(backend)
        self.idle_ctx = self.backend.owner
        self._swap = self.backend.swap
        self._set = self.backend.set
        self.default_stack_bytes = default_stack_bytes
        self._pooled_size = -(-default_stack_bytes // STACK_ALIGNMENT) * STACK_ALIGNMENT
        self.min_stack_bytes = min_stack_bytes
        self.guards = guards
        self.check_on_switch = check_on_switch
        self.use_pool = pool
        self.pool_cap = pool_cap
        self.stack_pool: list = []
        self.ready: Deque[Process] = deque()
        self._pop_ready = self.ready.pop if perturb_ready_order else self.ready.popleft
        self.current: Process | None = None
        self.spawned_total = 0
        self.ended_total = 0
        self.switches = 0
        self.stack_faults: list[tuple[int, StackStatus]] = []
        self._next_pid = OWNER_PID + 1
        self._live: dict[int, Process] = {}
        self._failure: BaseException | None = None
        self._trace: list | None = [] if trace else None
        self.closed = False

    # -- lifecycle -------------------------------------------------------

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self) -> None:
        if self.closed:
            return
        if self.current is not None:
            raise SchedulerError("close() called from inside a green process")
        for proc in list(self._live.values()):
            if proc.ctx is not None:
                self.backend.discard(proc.ctx)
            proc.state = ENDED
        self._live.clear()
        self.ready.clear()
        _backends.backend_release(self.backend)
        self.closed = True

    @property
    def backend_name(self) -> str:
        return self.backend.name

    # -- tracing ---------------------------------------------------------

    @property
    def tracing(self) -> bool:
        return self._trace is not None

    def trace_event(self, event: str, pid: int) -> None:
        if self._trace is not None:
            self._trace.append((len(self._trace), event, pid))

    @property
    def trace(self) -> list[tuple[int, str, int]]:
        return list(self._trace or ())

    def trace_lines(self) -> list[str]:
        return format_trace(self._trace or ())

    def _actor(self) -> int:
        cur = self.current
        return OWNER_PID if cur is None else cur.pid

    # -- processes -------------------------------------------------------

    def _take_stack(self, stack_bytes):
        if stack_bytes is None and self.stack_pool:
            return self.stack_pool.pop()
        size = self.default_stack_bytes if stack_bytes is None else stack_bytes
        return stack_new(size, guards=self.guards, min_bytes=self.min_stack_bytes)

    def spawn(self, entry: Callable, arg=None, resource_id: int = 0, *,
              stack_bytes: int | None = None) -> int:
        """Create a Ready process running ``entry(arg)``; it does not run yet."""
        stack = self._take_stack(stack_bytes)
        pid = self._next_pid
        self._next_pid = pid + 1
        proc = Process(pid, stack, resource_id, entry, arg)
        proc.ctx = self.backend.context_init(stack, self._process_main, proc, self.idle_ctx)
        self.ready.append(proc)
        self._live[pid] = proc
        self.spawned_total += 1
        if self._trace is not None:
            self.trace_event("SPAWN", pid)
        return pid

    def _process_main(self, proc):
        try:
            proc.entry(proc.arg)
        except ProcessExit:
            pass
        except Exception as exc:
            if self._failure is None:
                self._failure = exc
        self._finish(proc)

    def _finish(self, proc):
        proc.state = ENDED
        self.ended_total += 1
        del self._live[proc.pid]
        if self._trace is not None:
            self.trace_event("EXIT", proc.pid)
        stack, proc.stack = proc.stack, None
        status = stack_check(stack)
        if status is not StackStatus.INTACT:
            self.stack_faults.append((proc.pid, status))
            if self._failure is None:
                self._failure = StackFault(proc.pid, status)
        elif (self.use_pool and len(self.stack_pool) < self.pool_cap
              and stack.size == self._pooled_size):
            self.stack_pool.append(stack)
        if self.ready and self._failure is None:
            nxt = self._pop_ready()
            nxt.state = RUNNING
            self.current = nxt
            self.switches += 1
            if self._trace is not None:
                self.trace_event("RUN", nxt.pid)
            self._set(nxt.ctx)
        self.current = None
        self._set(self.idle_ctx)

    def _guard(self, proc):
        status = stack_check(proc.stack)
        if status is not StackStatus.INTACT:
            self.stack_faults.append((proc.pid, status))
            raise StackFault(proc.pid, status)

    def yield_(self) -> None:
        proc = self.current
        if proc is None:
            raise NotInProcess("yield outside a green process")
        if self.check_on_switch:
            self._guard(proc)
        ready = self.ready
        if not ready:
            return
        # pick the successor before requeueing so no queue order can pick proc
        nxt = self._pop_ready()
        proc.state = READY
        ready.append(proc)
        if self._trace is not None:
            self.trace_event("YIELD", proc.pid)
        nxt.state = RUNNING
        self.current = nxt
        self.switches += 1
        if self._trace is not None:
            self.trace_event("RUN", nxt.pid)
        self._swap(proc.ctx, nxt.ctx)

    def block_current(self, wait_queue: Deque[Process]) -> None:
        proc = self.current
        if proc is None:
            raise NotInProcess("only a green process can block")
        if self.check_on_switch:
            self._guard(proc)
        proc.state = BLOCKED
        wait_queue.append(proc)
        if self._trace is not None:
            self.trace_event("BLOCK", proc.pid)
        # hot path of every switching primitive, kept flat on purpose
        if self.ready:
            nxt = self._pop_ready()
            nxt.state = RUNNING
            self.current = nxt
            self.switches += 1
            if self._trace is not None:
                self.trace_event("RUN", nxt.pid)
            self._swap(proc.ctx, nxt.ctx)
        else:
            self.current = None
            self._swap(proc.ctx, self.idle_ctx)

    def unblock_first(self, wait_queue: Deque[Process]) -> int | None:
        if not wait_queue:
            return None
        proc = wait_queue.popleft()
        proc.state = READY
        self.ready.append(proc)
        if self._trace is not None:
            self.trace_event("UNBLOCK", proc.pid)
        return proc.pid

    def exit(self):
        if self.current is None:
            raise NotInProcess("exit outside a green process")
        raise ProcessExit

    def run_until_idle(self) -> RunSummary:
        """Drive the ready queue until it is empty."""
        if self.current is not None:
            raise SchedulerError("run_until_idle called from inside a green process")
        if self.closed:
            raise SchedulerError("runtime is closed")
        ready = self.ready
        while ready:
            nxt = self._pop_ready()
            nxt.state = RUNNING
            self.current = nxt
            self.switches += 1
            if self._trace is not None:
                self.trace_event("RUN", nxt.pid)
            self._swap(self.idle_ctx, nxt.ctx)
            if self._failure is not None:
                exc, self._failure = self._failure, None
                raise exc
        if self._live:
            raise DeadlockDetected(sorted(self._live))
        return RunSummary(self.spawned_total, self.ended_total, self.switches)

    def summary(self) -> RunSummary:
        return RunSummary(self.spawned_total, self.ended_total, self.switches)

    def live_pids(self) -> list[int]:
        return sorted(self._live)

    def process(self, pid: int) -> Process | None:
        return self._live.get(pid)


def format_trace(trace) -> list[str]:
    return [f"{seq} {event} {pid}" for seq, event, pid in trace]


def parse_trace(lines) -> list[tuple[int, str, int]]:
    out = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        seq, event, pid = line.split()
        if event not in TRACE_EVENTS:
            raise ValueError(f"unknown trace event {event!r}")
        out.append((int(seq), event, int(pid)))
    return out


def rt_init(backend_name: str = "fast", default_stack_bytes: int = DEFAULT_STACK_BYTES,
            **options) -> Runtime:
    return Runtime(backend_name, default_stack_bytes, **options)


def process_spawn(rt: Runtime, entry, arg=None, resource_id: int = 0, **kw) -> int:
    return rt.spawn(entry, arg, resource_id, **kw)


def yield_(rt: Runtime) -> None:
    rt.yield_()


def block_current(rt: Runtime, wait_queue) -> None:
    rt.block_current(wait_queue)


def unblock_first(rt: Runtime, wait_queue) -> int | None:
    return rt.unblock_first(wait_queue)


def process_exit(rt: Runtime):
    rt.exit()


def run_until_idle(rt: Runtime) -> RunSummary:
    return rt.run_until_idle()
