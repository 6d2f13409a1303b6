"""Naive sequential reference simulator for :class:`~fiberrt.programs.Program`.

Deliberately shares no code with the scheduler or the sync primitives: it
walks every process with an explicit program counter over plain lists and
writes down the trace the real runtime is supposed to produce.  Used as the
oracle in the equivalence checks.
"""

from __future__ import annotations

from .programs import Outcome, Program


def simulate(program: Program) -> Outcome:
    trace = []

    def emit(event, pid):
        trace.append((len(trace), event, pid))

    sems = list(program.sems)
    sem_wait = [[] for _ in sems]
    inbox = [[] for _ in range(program.n_ops)]
    receivers = [[] for _ in range(program.n_ops)]
    mailbox = {}
    replies = {}
    ready = []
    pc = {}
    parked = {}  # pid -> instruction to finish when it next runs
    got = {}
    ended = set()
    pids = list(range(1, len(program.procs) + 1))

    for pid in pids:
        emit("SPAWN", pid)
        ready.append(pid)
        pc[pid] = 0
        got[pid] = []

    def deliver(o, inv):
        if receivers[o]:
            r = receivers[o].pop(0)
            mailbox[r] = inv
            emit("UNBLOCK", r)
            ready.append(r)
        else:
            inbox[o].append(inv)

    def finish_receive(pid, ins, inv):
        emit("RECV", pid)
        kind, value, caller = inv
        got[pid].append(("recv", value))
        if ins[0] == "SERVE" and kind == "CALL":
            emit("REPLY", pid)
            replies[caller] = value + 1
            emit("UNBLOCK", caller)
            ready.append(caller)

    while ready:
        pid = ready.pop(0)
        emit("RUN", pid)
        body = program.procs[pid - 1]

        if pid in parked:
            ins = parked.pop(pid)
            if ins[0] in ("RECV", "SERVE"):
                finish_receive(pid, ins, mailbox.pop(pid))
            elif ins[0] == "CALL":
                got[pid].append(("reply", replies.pop(pid)))

        gave_up = False
        while not gave_up:
            if pc[pid] == len(body):
                emit("EXIT", pid)
                ended.add(pid)
                break
            ins = body[pc[pid]]
            pc[pid] += 1
            op = ins[0]
            if op == "P":
                s = ins[1]
                sems[s] -= 1
                if sems[s] < 0:
                    sem_wait[s].append(pid)
                    emit("BLOCK", pid)
                    parked[pid] = ins
                    gave_up = True
            elif op == "V":
                s = ins[1]
                sems[s] += 1
                if sems[s] <= 0:
                    w = sem_wait[s].pop(0)
                    emit("UNBLOCK", w)
                    ready.append(w)
            elif op == "Y":
                if ready:
                    emit("YIELD", pid)
                    ready.append(pid)
                    gave_up = True
            elif op == "SEND":
                emit("SEND", pid)
                deliver(ins[1], ("SEND", ins[2], None))
            elif op in ("RECV", "SERVE"):
                o = ins[1]
                if inbox[o]:
                    finish_receive(pid, ins, inbox[o].pop(0))
                else:
                    receivers[o].append(pid)
                    emit("BLOCK", pid)
                    parked[pid] = ins
                    gave_up = True
            elif op == "CALL":
                emit("CALLSTART", pid)
                deliver(ins[1], ("CALL", ins[2], pid))
                emit("BLOCK", pid)
                parked[pid] = ins
                gave_up = True
            else:
                raise ValueError(f"unknown instruction {ins!r}")

    out = Outcome()
    out.trace = trace
    live = [p for p in pids if p not in ended]
    if live:
        out.status = "deadlock"
        out.blocked = tuple(live)
    out.sem_counts = tuple(sems)
    out.inbox = tuple(len(q) for q in inbox)
    out.got = {pid: tuple(v) for pid, v in got.items()}
    return out
