"""The twelve timing kernels, one per row of the run time system table.

Every kernel has the signature ``kernel(rt, n) -> (elapsed_ns, ops)``.  It
spawns whatever processes it needs on ``rt``, drives them to completion and
reports the time spent inside the measured loops together with the number
of operations performed.  Timestamps are taken inside the green processes so
that spawning and the scheduler's first dispatch stay out of the numbers.
"""

from __future__ import annotations

from itertools import repeat
from time import perf_counter_ns

from ..sync import DIRECT, INPUT, PROC, Operation, Semaphore

NON_SWITCHING, PROCESS_CREATING, SWITCHING = 1, 2, 3

LOCAL_RESOURCE = 1
REMOTE_RESOURCE = 2


class _Clock:
    __slots__ = ("start", "end")

    def __init__(self):
        self.start = None
        self.end = 0

    def begin(self, t):
        if self.start is None or t < self.start:
            self.start = t

    def finish(self, t):
        if t > self.end:
            self.end = t

    def elapsed(self):
        return self.end - self.start


def _ident(x):
    return x


def _noop(_):
    pass


def _one(rt, n, loop, resource_id=LOCAL_RESOURCE):
    clock = _Clock()

    def body(_):
        t0 = perf_counter_ns()
        loop(n)
        clock.finish(perf_counter_ns())
        clock.begin(t0)

    rt.spawn(body, resource_id=resource_id)
    rt.run_until_idle()
    return clock.elapsed()


def loop_control(rt, n):
    def loop(n):
        for _ in repeat(None, n):
            pass
    return _one(rt, n, loop), n


def local_call(rt, n):
    call = Operation(rt, DIRECT, LOCAL_RESOURCE, _ident).call

    def loop(n):
        for _ in repeat(None, n):
            call(1)
    return _one(rt, n, loop), n


def interresource_call(rt, n):
    call = Operation(rt, DIRECT, REMOTE_RESOURCE, _ident).call

    def loop(n):
        for _ in repeat(None, n):
            call(1)
    return _one(rt, n, loop), n


def interresource_call_new_process(rt, n):
    call = Operation(rt, PROC, REMOTE_RESOURCE, _ident).call

    def loop(n):
        for _ in repeat(None, n):
            call(1)
    return _one(rt, n, loop), n


def process_create_destroy(rt, n):
    spawn = rt.spawn
    yield_ = rt.yield_

    def loop(n):
        for _ in repeat(None, n):
            spawn(_noop)
            yield_()
    return _one(rt, n, loop), n


def semaphore_p(rt, n):
    p = Semaphore(rt, n).p

    def loop(n):
        for _ in repeat(None, n):
            p()
    return _one(rt, n, loop), n


def semaphore_v(rt, n):
    v = Semaphore(rt, 0).v

    def loop(n):
        for _ in repeat(None, n):
            v()
    return _one(rt, n, loop), n


def semaphore_pair(rt, n):
    s = Semaphore(rt, 1)
    p, v = s.p, s.v

    def loop(n):
        for _ in repeat(None, n):
            p()
            v()
    return _one(rt, n, loop), n


def _ping_pong(rt, n, a_loop, b_loop):
    clock = _Clock()

    def side(loop):
        def body(_):
            t0 = perf_counter_ns()
            loop(n)
            clock.finish(perf_counter_ns())
            clock.begin(t0)
        return body

    rt.spawn(side(a_loop), resource_id=LOCAL_RESOURCE)
    rt.spawn(side(b_loop), resource_id=LOCAL_RESOURCE)
    rt.run_until_idle()
    # each side performs n hand-offs
    return clock.elapsed(), 2 * n


def semaphore_switch(rt, n):
    sa, sb = Semaphore(rt, 0), Semaphore(rt, 0)

    def a(n):
        pa, vb = sa.p, sb.v
        for _ in repeat(None, n):
            vb()
            pa()

    def b(n):
        pb, va = sb.p, sa.v
        for _ in repeat(None, n):
            pb()
            va()
    return _ping_pong(rt, n, a, b)


def async_send_receive(rt, n):
    op = Operation(rt, INPUT, LOCAL_RESOURCE)
    send, receive = op.send, op.receive

    def loop(n):
        for _ in repeat(None, n):
            send(1)
            receive()
    return _one(rt, n, loop), n


def message_switch(rt, n):
    to_a = Operation(rt, INPUT, LOCAL_RESOURCE)
    to_b = Operation(rt, INPUT, LOCAL_RESOURCE)

    def a(n):
        send, receive = to_b.send, to_a.receive
        for _ in repeat(None, n):
            send(1)
            receive()

    def b(n):
        send, receive = to_a.send, to_b.receive
        for _ in repeat(None, n):
            receive()
            send(1)
    return _ping_pong(rt, n, a, b)


def rendezvous(rt, n):
    op = Operation(rt, INPUT, REMOTE_RESOURCE)
    clock = _Clock()

    def caller(_):
        call = op.call
        t0 = perf_counter_ns()
        for _ in repeat(None, n):
            call(1)
        clock.finish(perf_counter_ns())
        clock.begin(t0)

    def servicer(_):
        receive = op.receive
        t0 = perf_counter_ns()
        for _ in repeat(None, n):
            inv = receive()
            inv.reply(inv.args[0])
        clock.finish(perf_counter_ns())
        clock.begin(t0)

    rt.spawn(caller, resource_id=LOCAL_RESOURCE)
    rt.spawn(servicer, resource_id=REMOTE_RESOURCE)
    rt.run_until_idle()
    return clock.elapsed(), n


# Row order and labels are part of the report format; do not reorder.
KERNELS = (
    ("loop control overhead", NON_SWITCHING, loop_control),
    ("local call, optimised", NON_SWITCHING, local_call),
    ("interresource call, no new process", NON_SWITCHING, interresource_call),
    ("interresource call, new process", PROCESS_CREATING, interresource_call_new_process),
    ("process create/destroy", PROCESS_CREATING, process_create_destroy),
    ("semaphore P only", NON_SWITCHING, semaphore_p),
    ("semaphore V only", NON_SWITCHING, semaphore_v),
    ("semaphore pair", NON_SWITCHING, semaphore_pair),
    ("semaphore requiring context switch", SWITCHING, semaphore_switch),
    ("asynchronous send/receive", NON_SWITCHING, async_send_receive),
    ("message passing requiring context switch", SWITCHING, message_switch),
    ("rendezvous", SWITCHING, rendezvous),
)

KERNEL_NAMES = tuple(name for name, _, _ in KERNELS)
KERNEL_CLASS = {name: cls for name, cls, _ in KERNELS}
KERNEL_FUNCS = {name: fn for name, _, fn in KERNELS}

# class-3 kernel -> the class-1 kernel it is compared against
COUNTERPART = {
    "semaphore requiring context switch": "semaphore pair",
    "message passing requiring context switch": "asynchronous send/receive",
    "rendezvous": "local call, optimised",
}
