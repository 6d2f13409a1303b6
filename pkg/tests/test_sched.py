from collections import deque

import pytest

from fiberrt.ctxcore.stack import StackStatus, stack_check
from fiberrt.errors import (
    BackendUnavailable,
    DeadlockDetected,
    NotInProcess,
    SelectionAfterInit,
    SizeTooSmall,
)
from fiberrt.sched import (
    BLOCKED,
    ENDED,
    Runtime,
    format_trace,
    parse_trace,
    rt_init,
)
from fiberrt.sync import INPUT, Operation, Semaphore


@pytest.fixture
def rt(backend_name):
    with Runtime(backend_name, trace=True) as rt:
        yield rt


def runs(rt):
    return [pid for _, ev, pid in rt.trace if ev == "RUN"]


def test_rt_init_starts_empty():
    with rt_init("portable", 65536) as rt:
        assert rt.spawned_total == 0
        assert rt.run_until_idle() == rt.summary()
        assert tuple(rt.summary().__dict__.values()) == (0, 0, 0)


def test_rt_init_twice_on_a_lane():
    with rt_init("fast"):
        with pytest.raises(SelectionAfterInit):
            rt_init("fast")


def test_rt_init_unavailable_backend(monkeypatch):
    monkeypatch.setenv("FIBER_RT_DISABLE_BACKENDS", "fast")
    with pytest.raises(BackendUnavailable):
        rt_init("fast")


def test_spawn_order_is_run_order(rt):
    log = []
    pids = [rt.spawn(lambda _: log.append(rt.current.pid)) for _ in range(3)]
    assert log == []  # cooperative: nothing runs at spawn
    rt.run_until_idle()
    assert log == pids


def test_pids_are_monotonic_and_counted(rt):
    pids = []
    for i in range(4):
        before = rt.spawned_total
        pids.append(rt.spawn(lambda _: None))
        assert rt.spawned_total == before + 1
    assert pids == sorted(set(pids))
    rt.run_until_idle()
    assert rt.spawn(lambda _: None) > pids[-1]


def test_stack_below_floor(rt):
    with pytest.raises(SizeTooSmall):
        rt.spawn(lambda _: None, stack_bytes=1024)
    with pytest.raises(SizeTooSmall):
        Runtime("fast", default_stack_bytes=1024)


def test_alternating_yields(rt):
    log = []

    def body(name):
        for _ in range(3):
            log.append(name)
            rt.yield_()

    a = rt.spawn(body, "A")
    b = rt.spawn(body, "B")
    rt.run_until_idle()
    assert log == list("ABABAB")
    assert runs(rt)[:6] == [a, b, a, b, a, b]


def test_yield_alone_is_a_no_op(rt):
    def body(_):
        before = list(rt.trace)
        rt.yield_()
        assert rt.trace == before

    rt.spawn(body)
    assert rt.run_until_idle().switches == 1


def test_yield_outside_a_process(rt):
    with pytest.raises(NotInProcess):
        rt.yield_()


def test_many_yields_keep_stacks_intact(rt):
    stacks = []

    def body(_):
        stacks.append(rt.current.stack)
        for _ in range(500):
            rt.yield_()
            assert stack_check(rt.current.stack) is StackStatus.INTACT

    rt.spawn(body)
    rt.spawn(body)
    rt.run_until_idle()
    assert all(stack_check(s) is StackStatus.INTACT for s in stacks)


def test_block_then_unblock_resumes_once(rt):
    q = deque()
    resumed = []

    def sleeper(_):
        rt.block_current(q)
        resumed.append(rt.current.pid)

    def waker(_):
        assert rt.process(pid).state is BLOCKED
        assert rt.unblock_first(q) == pid
        assert rt.unblock_first(q) is None

    pid = rt.spawn(sleeper)
    rt.spawn(waker)
    rt.run_until_idle()
    assert resumed == [pid]


def test_unblock_empty_queue(rt):
    assert rt.unblock_first(deque()) is None


def test_blockers_resume_in_block_order(rt):
    q = deque()
    order = []

    def blocker(_):
        rt.block_current(q)
        order.append(rt.current.pid)

    def waker(_):
        for _ in range(3):
            rt.unblock_first(q)
            rt.yield_()

    pids = [rt.spawn(blocker) for _ in range(3)]
    rt.spawn(waker)
    rt.run_until_idle()
    assert order == pids


def test_explicit_exit(rt):
    log = []

    def body(_):
        log.append(1)
        rt.exit()
        log.append(2)

    pid = rt.spawn(body)
    rt.run_until_idle()
    assert log == [1]
    assert rt.process(pid) is None
    assert rt.ended_total == 1


def test_exit_outside_a_process(rt):
    with pytest.raises(NotInProcess):
        rt.exit()


def test_five_trivial_processes(rt):
    for _ in range(5):
        rt.spawn(lambda _: None)
    s = rt.run_until_idle()
    assert (s.spawned, s.ended) == (5, 5)
    assert rt.ended_total == 5


def test_exited_pid_never_reappears(rt):
    sem = Semaphore(rt, 0)

    def quick(_):
        sem.v()

    def slow(_):
        sem.p()
        rt.yield_()
        rt.yield_()

    first = rt.spawn(quick)
    rt.spawn(slow)
    rt.spawn(lambda _: rt.yield_())
    rt.run_until_idle()
    exit_seq = next(seq for seq, ev, pid in rt.trace if ev == "EXIT" and pid == first)
    assert all(pid != first for seq, _, pid in rt.trace if seq > exit_seq)


def test_pool_stays_under_cap(backend_name):
    with Runtime(backend_name, pool_cap=8) as rt:
        for _ in range(100):
            rt.spawn(lambda _: None)
        rt.run_until_idle()
        assert len(rt.stack_pool) <= 8
        for _ in range(100):
            rt.spawn(lambda _: rt.yield_())
            rt.run_until_idle()
        assert len(rt.stack_pool) <= 8


def test_pool_can_be_disabled(backend_name):
    with Runtime(backend_name, pool=False) as rt:
        rt.spawn(lambda _: None)
        rt.run_until_idle()
        assert rt.stack_pool == []


def test_empty_runtime_summary(rt):
    s = rt.run_until_idle()
    assert (s.spawned, s.ended, s.switches) == (0, 0, 0)


def test_lonely_p_deadlocks(rt):
    sem = Semaphore(rt, 0)
    pid = rt.spawn(lambda _: sem.p())
    with pytest.raises(DeadlockDetected) as info:
        rt.run_until_idle()
    assert info.value.blocked == [pid]


def test_producer_consumer_over_rendezvous(rt):
    op = Operation(rt, INPUT, owner_resource=2)
    got = []

    def producer(_):
        for i in range(100):
            assert op.call(i) == i

    def consumer(_):
        for _ in range(100):
            inv = op.receive()
            got.append(inv.args[0])
            inv.reply(inv.args[0])

    rt.spawn(producer, resource_id=1)
    rt.spawn(consumer, resource_id=2)
    s = rt.run_until_idle()
    assert got == list(range(100))
    assert (s.spawned, s.ended) == (2, 2)
    assert s.switches >= 200


def test_failures_surface_at_run_until_idle(rt):
    def bad(_):
        raise KeyError("lost")

    rt.spawn(bad)
    with pytest.raises(KeyError):
        rt.run_until_idle()


def test_close_tears_down_blocked_processes(backend_name):
    rt = Runtime(backend_name)
    sem = Semaphore(rt, 0)
    rt.spawn(lambda _: sem.p())
    with pytest.raises(DeadlockDetected):
        rt.run_until_idle()
    rt.close()
    assert rt.live_pids() == []
    with Runtime(backend_name):
        pass


def test_trace_format_round_trip(rt):
    rt.spawn(lambda _: rt.yield_())
    rt.spawn(lambda _: None)
    rt.run_until_idle()
    lines = rt.trace_lines()
    assert lines[0] == "0 SPAWN 1"
    assert parse_trace(lines) == rt.trace
    assert format_trace(parse_trace(lines)) == lines
    with pytest.raises(ValueError):
        parse_trace(["0 JUMP 1"])


def test_trace_is_identical_across_backends():
    def program(rt):
        sem = Semaphore(rt, 0)
        op = Operation(rt, INPUT)

        def a(_):
            sem.p()
            op.send(1)
            rt.yield_()

        def b(_):
            rt.yield_()
            sem.v()
            op.receive()

        rt.spawn(a)
        rt.spawn(b)
        rt.run_until_idle()
        return rt.trace_lines()

    from conftest import ALL_BACKENDS
    traces = []
    for name in ALL_BACKENDS:
        with Runtime(name, trace=True) as rt:
            traces.append(program(rt))
    assert all(t == traces[0] for t in traces)
    assert len(traces[0]) > 10


def test_ended_state_observed(rt):
    procs = []

    def body(_):
        procs.append(rt.current)

    rt.spawn(body)
    rt.run_until_idle()
    assert procs[0].state is ENDED
