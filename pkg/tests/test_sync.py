import random

import pytest
from hypothesis import given, settings, strategies as st

from fiberrt.errors import (
    AlreadyCompleted,
    BodyModeMismatch,
    DeadlockDetected,
    NegativeInitial,
    ReceiveOnNonInput,
    ReplyToSend,
    SendToDirect,
    TooManyArguments,
)
from fiberrt.programs import execute, generate_program
from fiberrt.sched import Runtime
from fiberrt.sync import (
    CALL,
    DIRECT,
    INPUT,
    PROC,
    SEND,
    Operation,
    op_call,
    op_new,
    op_receive,
    op_reply,
    op_send,
    sem_new,
    sem_p,
    sem_v,
)


@pytest.fixture
def rt(backend_name):
    with Runtime(backend_name, trace=True) as rt:
        yield rt


def in_process(rt, fn):
    """Run ``fn`` as the only process and return its result."""
    out = []
    rt.spawn(lambda _: out.append(fn()))
    rt.run_until_idle()
    return out[0]


def test_sem_new(rt):
    assert sem_new(rt, 1).count == 1
    with pytest.raises(NegativeInitial):
        sem_new(rt, -1)


def test_v_then_p_does_not_block(rt):
    s = sem_new(rt, 0)

    def body():
        before = rt.switches
        sem_v(rt, s)
        sem_p(rt, s)
        return rt.switches - before

    assert in_process(rt, body) == 0
    assert s.count == 0


def test_p_fast_path(rt):
    s = sem_new(rt, 2)
    in_process(rt, lambda: sem_p(rt, s))
    assert s.count == 1


def test_p_blocks_until_v(rt):
    s = sem_new(rt, 0)
    resumed = []
    sleeper = rt.spawn(lambda _: (sem_p(rt, s), resumed.append(1)))
    rt.spawn(lambda _: sem_v(rt, s))
    rt.run_until_idle()
    assert resumed == [1]
    events = [(ev, pid) for _, ev, pid in rt.trace if pid == sleeper]
    assert events.count(("BLOCK", sleeper)) == 1
    assert events.count(("UNBLOCK", sleeper)) == 1


def test_waiters_resume_in_block_order(rt):
    s = sem_new(rt, 0)
    order = []

    def waiter(_):
        sem_p(rt, s)
        order.append(rt.current.pid)

    pids = [rt.spawn(waiter) for _ in range(3)]
    rt.spawn(lambda _: [sem_v(rt, s) for _ in range(3)])
    rt.run_until_idle()
    assert order == pids


def test_v_on_free_semaphore(rt):
    s = sem_new(rt, 0)
    in_process(rt, lambda: sem_v(rt, s))
    assert s.count == 1


def test_v_wakes_exactly_one(rt):
    s = sem_new(rt, 0)
    observed = []

    def waiter(_):
        sem_p(rt, s)

    def waker(_):
        assert s.count == -2 and len(s.waiters) == 2
        sem_v(rt, s)
        observed.append((s.count, len(s.waiters), len(rt.ready)))
        sem_v(rt, s)

    rt.spawn(waiter)
    rt.spawn(waiter)
    rt.spawn(waker)
    rt.run_until_idle()
    assert observed == [(-1, 1, 1)]


def test_v_from_the_lane_owner(rt):
    s = sem_new(rt, 0)
    rt.spawn(lambda _: sem_p(rt, s))
    with pytest.raises(DeadlockDetected):
        rt.run_until_idle()
    sem_v(rt, s)
    rt.run_until_idle()
    assert s.count == 0


def test_semaphore_pair_has_no_switches(rt):
    s = sem_new(rt, 1)

    def body():
        before = rt.switches
        sem_p(rt, s)
        sem_v(rt, s)
        return rt.switches - before

    assert in_process(rt, body) == 0
    assert s.count == 1


def test_op_new_modes(rt):
    op = op_new(rt, INPUT, 1)
    assert len(op.inbox) == 0
    with pytest.raises(BodyModeMismatch):
        op_new(rt, INPUT, 1, abs)
    with pytest.raises(BodyModeMismatch):
        op_new(rt, DIRECT, 1)
    with pytest.raises(BodyModeMismatch):
        op_new(rt, PROC, 1)


def test_direct_local_call(rt):
    square = op_new(rt, DIRECT, 1, lambda x: x * x)

    def body():
        before = rt.switches
        return op_call(rt, square, 4), rt.switches - before

    rt_result = []
    rt.spawn(lambda _: rt_result.append(body()), resource_id=1)
    rt.run_until_idle()
    assert rt_result == [(16, 0)]


def test_direct_interresource_call(rt):
    square = op_new(rt, DIRECT, 2, lambda x: x * x)
    got = []

    def body(_):
        before = (rt.switches, rt.spawned_total)
        got.append(op_call(rt, square, 5))
        assert (rt.switches, rt.spawned_total) == before

    rt.spawn(body, resource_id=1)
    rt.run_until_idle()
    assert got == [25]


def test_send_receive_fifo(rt):
    op = op_new(rt, INPUT)

    def body():
        for v in (1, 2, 3):
            op_send(rt, op, v)
        return [op_receive(rt, op).args[0] for _ in range(3)]

    assert in_process(rt, body) == [1, 2, 3]


def test_send_to_proc_spawns(rt):
    seen = []
    op = op_new(rt, PROC, 2, seen.append)

    def body():
        before = rt.spawned_total
        op_send(rt, op, 9)
        return rt.spawned_total - before

    assert in_process(rt, body) == 1
    assert seen == [9]


def test_send_to_direct(rt):
    op = op_new(rt, DIRECT, 1, abs)
    with pytest.raises(SendToDirect):
        op_send(rt, op, 1)


def test_receive_from_non_input(rt):
    op = op_new(rt, PROC, 1, abs)
    with pytest.raises(ReceiveOnNonInput):
        op_receive(rt, op)


def test_receive_with_mail_does_not_switch(rt):
    op = op_new(rt, INPUT)
    op_send(rt, op, 5)

    def body():
        before = rt.switches
        inv = op_receive(rt, op)
        return inv.args[0], inv.kind, rt.switches - before

    assert in_process(rt, body) == (5, SEND, 0)


def test_receive_blocks_until_send(rt):
    op = op_new(rt, INPUT)
    got = []
    receiver = rt.spawn(lambda _: got.append(op_receive(rt, op).args[0]))
    rt.spawn(lambda _: op_send(rt, op, 77))
    rt.run_until_idle()
    assert got == [77]
    events = [ev for _, ev, pid in rt.trace if pid == receiver]
    assert events == ["SPAWN", "RUN", "BLOCK", "UNBLOCK", "RUN", "RECV", "EXIT"]


def test_receivers_pair_in_fifo_order(rt):
    op = op_new(rt, INPUT)
    got = {}

    def receiver(_):
        got[rt.current.pid] = op_receive(rt, op).args[0]

    r1 = rt.spawn(receiver)
    r2 = rt.spawn(receiver)

    def sender(_):
        assert len(op.receivers) == 2 and not op.inbox
        op_send(rt, op, "first")
        op_send(rt, op, "second")

    rt.spawn(sender)
    rt.run_until_idle()
    assert got == {r1: "first", r2: "second"}


def test_rendezvous_costs_two_transfers(rt):
    echo = op_new(rt, INPUT, 2)
    result = {}

    def servicer(_):
        while True:
            inv = op_receive(rt, echo)
            op_reply(rt, inv, inv.args[0])

    def caller(_):
        # warm: servicer is parked on the receive queue
        op_call(rt, echo, 0)
        before = rt.switches
        result["value"] = op_call(rt, echo, 7)
        result["transfers"] = rt.switches - before
        rt.exit()

    rt.spawn(servicer, resource_id=2)
    rt.spawn(caller, resource_id=1)
    with pytest.raises(DeadlockDetected):  # the servicer loops forever
        rt.run_until_idle()
    assert result == {"value": 7, "transfers": 2}


def test_proc_call(rt):
    add1 = op_new(rt, PROC, 2, lambda x: x + 1)

    def body():
        before = rt.spawned_total
        return op_call(rt, add1, 41), rt.spawned_total - before

    assert in_process(rt, body) == (42, 1)
    assert rt.ended_total == rt.spawned_total


def test_call_without_servicer_deadlocks(rt):
    op = op_new(rt, INPUT)
    rt.spawn(lambda _: op_call(rt, op, 1))
    with pytest.raises(DeadlockDetected):
        rt.run_until_idle()
    assert len(op.inbox) == 1 and op.inbox[0].kind is CALL


def test_body_errors_propagate(rt):
    def fail(x):
        raise ArithmeticError(x)

    op = op_new(rt, DIRECT, 0, fail)
    with pytest.raises(ArithmeticError):
        in_process(rt, lambda: op_call(rt, op, 1))


def test_reply_rules(rt):
    op = op_new(rt, INPUT)
    errors = []

    def caller(_):
        assert op_call(rt, op, 3) == 30

    def servicer(_):
        inv = op_receive(rt, op)
        op_reply(rt, inv, 30)
        try:
            op_reply(rt, inv, 31)
        except AlreadyCompleted as exc:
            errors.append(exc)
        op_send(rt, op, 1)
        sent = op_receive(rt, op)
        try:
            op_reply(rt, sent, 0)
        except ReplyToSend as exc:
            errors.append(exc)

    rt.spawn(caller)
    rt.spawn(servicer)
    rt.run_until_idle()
    assert [type(e) for e in errors] == [AlreadyCompleted, ReplyToSend]


def test_argument_limit(rt):
    op = op_new(rt, INPUT)
    op_send(rt, op, *range(8))
    with pytest.raises(TooManyArguments):
        op_send(rt, op, *range(9))
    proc_op = Operation(rt, PROC, 1, lambda *a: None)
    with pytest.raises(TooManyArguments):
        proc_op.send(*range(9))


def test_inbox_and_receivers_never_both_full(rt):
    op = op_new(rt, INPUT)
    snapshots = []

    def watch(_):
        for _ in range(6):
            snapshots.append((len(op.inbox), len(op.receivers)))
            rt.yield_()

    def receiver(_):
        op_receive(rt, op)

    def sender(_):
        for i in range(3):
            op_send(rt, op, i)
            rt.yield_()

    rt.spawn(receiver)
    rt.spawn(receiver)
    rt.spawn(watch)
    rt.spawn(sender)
    rt.run_until_idle()
    assert all(not (i and r) for i, r in snapshots)


# -- properties over generated programs ---------------------------------------

def _count(program, name):
    return [sum(1 for p in program.procs for ins in p if ins[0] == name and ins[1] == k)
            for k in range(max(len(program.sems), program.n_ops))]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_semaphore_and_message_conservation(seed):
    program = generate_program(random.Random(seed))
    out = execute(program, "fast")
    ps, vs = _count(program, "P"), _count(program, "V")
    if out.status == "ok":
        for k, initial in enumerate(program.sems):
            assert out.sem_counts[k] == initial + vs[k] - ps[k]
        sends = _count(program, "SEND")
        calls = _count(program, "CALL")
        received = [sum(1 for p in program.procs for ins in p
                        if ins[0] in ("RECV", "SERVE") and ins[1] == o)
                    for o in range(program.n_ops)]
        for o in range(program.n_ops):
            assert sends[o] + calls[o] == received[o] + out.inbox[o]
