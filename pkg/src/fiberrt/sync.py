"""Semaphores, operations and rendezvous on top of the scheduler.

Wakeups are non-handoff: ``V``, ``send`` and ``reply`` move the woken
process to the tail of the ready queue and the caller keeps running.
"""

from __future__ import annotations

import enum
from collections import deque
from typing import Callable

from .errors import (
    AlreadyCompleted,
    BodyModeMismatch,
    NegativeInitial,
    NotInProcess,
    ReceiveOnNonInput,
    ReplyToSend,
    SendToDirect,
    TooManyArguments,
)
from .sched import OWNER_PID, READY, Runtime

MAX_ARGS = 8


class Semaphore:
    __slots__ = ("rt", "count", "waiters")

    def __init__(self, rt: Runtime, initial: int = 0):
        if initial < 0:
            raise NegativeInitial(f"semaphore initial value {initial} < 0")
        self.rt = rt
        self.count = initial
        self.waiters = deque()

    def p(self) -> None:
        self.count -= 1
        if self.count < 0:
            self.rt.block_current(self.waiters)

    def v(self) -> None:
        self.count += 1
        if self.count <= 0:
            # Runtime.unblock_first, inlined for the ping-pong hot path
            rt = self.rt
            proc = self.waiters.popleft()
            proc.state = READY
            rt.ready.append(proc)
            if rt._trace is not None:
                rt.trace_event("UNBLOCK", proc.pid)

    def __repr__(self):
        return f"<Semaphore count={self.count} waiters={len(self.waiters)}>"


class OpMode(enum.Enum):
    DIRECT = "DIRECT"
    PROC = "PROC"
    INPUT = "INPUT"


class InvKind(enum.Enum):
    SEND = "SEND"
    CALL = "CALL"


DIRECT, PROC, INPUT = OpMode.DIRECT, OpMode.PROC, OpMode.INPUT
SEND, CALL = InvKind.SEND, InvKind.CALL


class Invocation:
    __slots__ = ("rt", "args", "kind", "reply_slot", "completed", "caller", "_waiter")

    def __init__(self, rt, args, kind, caller=None):
        if len(args) > MAX_ARGS:
            raise TooManyArguments(f"{len(args)} arguments, at most {MAX_ARGS} allowed")
        self.rt = rt
        self.args = args
        self.kind = kind
        self.reply_slot = None
        self.completed = False
        self.caller = caller
        self._waiter = deque() if kind is CALL else None

    def reply(self, value) -> None:
        if self.kind is SEND:
            raise ReplyToSend("SEND invocations carry no reply slot")
        if self.completed:
            raise AlreadyCompleted("invocation already replied to")
        self.reply_slot = value
        self.completed = True
        rt = self.rt
        if rt._trace is not None:
            rt.trace_event("REPLY", rt._actor())
        if self._waiter:
            rt.unblock_first(self._waiter)

    def _await_reply(self):
        rt = self.rt
        if not self.completed:
            rt.block_current(self._waiter)
        return self.reply_slot

    def __repr__(self):
        return f"<Invocation {self.kind.value} args={self.args!r} completed={self.completed}>"


class Operation:
    """A communication endpoint: invocable by call or send, serviced per ``mode``."""

    __slots__ = ("rt", "op_id", "owner_resource", "mode", "body", "inbox", "receivers")

    _ids = 0

    def __init__(self, rt: Runtime, mode: OpMode, owner_resource: int = 0,
                 body: Callable | None = None):
        mode = OpMode(mode)
        if (body is None) == (mode is not INPUT):
            raise BodyModeMismatch(
                f"{mode.value} operations {'need' if mode is not INPUT else 'take no'} body")
        Operation._ids += 1
        self.rt = rt
        self.op_id = Operation._ids
        self.owner_resource = owner_resource
        self.mode = mode
        self.body = body
        self.inbox = deque()
        self.receivers = deque()

    def __repr__(self):
        return f"<Operation {self.op_id} {self.mode.value} resource={self.owner_resource}>"

    def _deliver(self, inv: Invocation) -> None:
        receivers = self.receivers
        if receivers:
            receivers[0].mailbox = inv
            self.rt.unblock_first(receivers)
        else:
            self.inbox.append(inv)

    def send(self, *args) -> None:
        mode = self.mode
        rt = self.rt
        if mode is INPUT:
            inv = Invocation(rt, args, SEND)
            if rt._trace is not None:
                rt.trace_event("SEND", rt._actor())
            self._deliver(inv)
        elif mode is PROC:
            if len(args) > MAX_ARGS:
                raise TooManyArguments(f"{len(args)} arguments, at most {MAX_ARGS} allowed")
            if rt._trace is not None:
                rt.trace_event("SEND", rt._actor())
            rt.spawn(self._run_body, args, self.owner_resource)
        else:
            raise SendToDirect(f"{self!r} is serviced inline and accepts only calls")

    def _run_body(self, args):
        self.body(*args)

    def receive(self) -> Invocation:
        if self.mode is not INPUT:
            raise ReceiveOnNonInput(f"{self!r} is not an input operation")
        rt = self.rt
        if self.inbox:
            inv = self.inbox.popleft()
        else:
            proc = rt.current
            if proc is None:
                raise NotInProcess("blocking receive outside a green process")
            rt.block_current(self.receivers)
            inv, proc.mailbox = proc.mailbox, None
        if rt._trace is not None:
            rt.trace_event("RECV", rt._actor())
        return inv

    def call(self, *args):
        mode = self.mode
        rt = self.rt
        cur = rt.current
        if mode is DIRECT:
            owner = OWNER_PID if cur is None else cur.resource_id
            if owner == self.owner_resource:
                return self.body(*args)
            inv = Invocation(rt, args, CALL, owner)
            inv.reply_slot = self.body(*inv.args)
            inv.completed = True
            return inv.reply_slot
        if cur is None:
            raise NotInProcess("blocking call outside a green process")
        inv = Invocation(rt, args, CALL, cur.pid)
        if rt._trace is not None:
            rt.trace_event("CALLSTART", cur.pid)
        if mode is PROC:
            rt.spawn(self._serve_call, inv, self.owner_resource)
        else:
            self._deliver(inv)
        return inv._await_reply()

    def _serve_call(self, inv):
        inv.reply(self.body(*inv.args))


def sem_new(rt: Runtime, initial: int = 0) -> Semaphore:
    return Semaphore(rt, initial)


def sem_p(rt: Runtime, s: Semaphore) -> None:
    s.p()


def sem_v(rt: Runtime, s: Semaphore) -> None:
    s.v()


def op_new(rt: Runtime, mode, owner_resource: int = 0, body=None) -> Operation:
    return Operation(rt, mode, owner_resource, body)


def op_send(rt: Runtime, op: Operation, *args) -> None:
    op.send(*args)


def op_receive(rt: Runtime, op: Operation) -> Invocation:
    return op.receive()


def op_call(rt: Runtime, op: Operation, *args):
    return op.call(*args)


def op_reply(rt: Runtime, inv: Invocation, value) -> None:
    inv.reply(value)
