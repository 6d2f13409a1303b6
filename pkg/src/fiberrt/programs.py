"""Small straight-line concurrent programs, a seeded generator for them, and
an interpreter that runs them on the real runtime.

Instruction set (tuples):

=================  ====================================================
``("P", s)``       P on semaphore ``s``
``("V", s)``       V on semaphore ``s``
``("Y",)``         yield
``("SEND", o, x)`` asynchronous send of ``x`` to input operation ``o``
``("RECV", o)``    receive from ``o``; the argument is logged
``("CALL", o, x)`` synchronous call of ``o``; the reply is logged
``("SERVE", o)``   receive from ``o``; a CALL is answered with ``x + 1``
=================  ====================================================

Processes get pids 1..n in program order.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .errors import DeadlockDetected
from .sched import Runtime
from .sync import CALL, INPUT, Operation, Semaphore


@dataclass(frozen=True)
class Program:
    sems: tuple[int, ...]
    n_ops: int
    procs: tuple[tuple[tuple, ...], ...]

    @property
    def n_events(self) -> int:
        return sum(len(p) for p in self.procs)


@dataclass
class Outcome:
    trace: list = field(default_factory=list)
    status: str = "ok"
    blocked: tuple = ()
    sem_counts: tuple = ()
    inbox: tuple = ()
    got: dict = field(default_factory=dict)
    stack_faults: list = field(default_factory=list)

    def comparable(self, with_trace: bool = True):
        key = (self.status, self.blocked, self.sem_counts, self.inbox,
               tuple(sorted(self.got.items())))
        return (tuple(self.trace),) + key if with_trace else key


def generate_program(rng: random.Random, max_procs: int = 4, max_events: int = 50) -> Program:
    """Draw a random program; most draws pair every blocking action with a
    potential waker so that a fair share of programs terminate."""
    n_procs = rng.randint(1, max_procs)
    sems = tuple(rng.randint(0, 2) for _ in range(rng.randint(1, 3)))
    n_ops = rng.randint(1, 3)
    call_ops = [o for o in range(n_ops) if rng.random() < 0.5]
    msg_ops = [o for o in range(n_ops) if o not in call_ops]
    procs = [[] for _ in range(n_procs)]
    budget = rng.randint(2, max_events)
    used = 0

    def put(pid, ins):
        body = procs[pid]
        body.insert(rng.randint(0, len(body)), ins)

    while used + 2 <= budget:
        a = rng.randrange(n_procs)
        b = rng.randrange(n_procs)
        kind = rng.choice(("sem", "sem", "yield", "msg", "call", "stray"))
        if kind == "sem":
            s = rng.randrange(len(sems))
            put(a, ("P", s))
            put(b, ("V", s))
            used += 2
        elif kind == "yield":
            put(a, ("Y",))
            used += 1
        elif kind == "msg" and msg_ops:
            o = rng.choice(msg_ops)
            put(a, ("SEND", o, rng.randint(0, 99)))
            if rng.random() < 0.85:
                put(b, ("RECV", o))
                used += 1
            used += 1
        elif kind == "call" and call_ops and a != b:
            o = rng.choice(call_ops)
            put(a, ("CALL", o, rng.randint(0, 99)))
            put(b, ("SERVE", o))
            used += 2
        elif kind == "stray":
            s = rng.randrange(len(sems))
            put(a, (rng.choice("PV"), s))
            used += 1
    return Program(sems, n_ops, tuple(tuple(p) for p in procs))


def _interpreter(rt, sems, ops, body, got):
    def run(_):
        log = got[rt.current.pid]
        for ins in body:
            op = ins[0]
            if op == "P":
                sems[ins[1]].p()
            elif op == "V":
                sems[ins[1]].v()
            elif op == "Y":
                rt.yield_()
            elif op == "SEND":
                ops[ins[1]].send(ins[2])
            elif op == "RECV":
                log.append(("recv", ops[ins[1]].receive().args[0]))
            elif op == "CALL":
                log.append(("reply", ops[ins[1]].call(ins[2])))
            elif op == "SERVE":
                inv = ops[ins[1]].receive()
                log.append(("recv", inv.args[0]))
                if inv.kind is CALL:
                    inv.reply(inv.args[0] + 1)
            else:
                raise ValueError(f"unknown instruction {ins!r}")
    return run


def execute(program: Program, backend: str = "fast", *, trace: bool = True,
            **rt_options) -> Outcome:
    """Run ``program`` on a fresh runtime and collect what the oracle reports."""
    with Runtime(backend, trace=trace, **rt_options) as rt:
        sems = [Semaphore(rt, n) for n in program.sems]
        ops = [Operation(rt, INPUT) for _ in range(program.n_ops)]
        got = {}
        for body in program.procs:
            pid = rt._next_pid
            got[pid] = []
            rt.spawn(_interpreter(rt, sems, ops, body, got))
        out = Outcome()
        try:
            rt.run_until_idle()
        except DeadlockDetected as exc:
            out.status = "deadlock"
            out.blocked = tuple(exc.blocked)
        out.trace = rt.trace
        out.sem_counts = tuple(s.count for s in sems)
        out.inbox = tuple(len(o.inbox) for o in ops)
        out.got = {pid: tuple(v) for pid, v in got.items()}
        out.stack_faults = list(rt.stack_faults)
    return out
