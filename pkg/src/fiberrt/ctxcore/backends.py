"""Execution contexts and the pluggable switch backends.

Three backends are provided:

``fast``
    greenlet stack switching.  Saving and restoring a context never leaves
    user space.
``portable``
    the same stack switching, but every switch also saves the outgoing
    signal mask and installs the incoming one through the OS, the way the
    SVR4 ``swapcontext`` family does.  Two kernel entries per switch.
``threadpark``
    every context is an OS thread parked on its own lock; a switch releases
    the target's lock and blocks on the caller's.  Needs nothing beyond the
    standard library.

Selection is per lane (OS thread): one backend handle may be active in a
lane at a time, and it must be released before another is selected.
"""

from __future__ import annotations

import _thread
import enum
import os
import signal
import threading

from ..errors import (
    BackendMismatch,
    BackendUnavailable,
    ContextStateError,
    DeadContext,
    SelectionAfterInit,
    StackNotIntact,
    UnknownBackend,
)
from .stack import StackRegion, StackStatus, stack_check

try:
    import greenlet as _greenlet
except ImportError:  # pragma: no cover - greenlet is a declared dependency
    _greenlet = None

BACKEND_NAMES = ("fast", "portable", "threadpark")

_HAVE_SIGMASK = hasattr(signal, "pthread_sigmask")


class ContextState(enum.Enum):
    FRESH = "fresh"
    SUSPENDED = "suspended"
    RUNNING = "running"
    DEAD = "dead"


FRESH = ContextState.FRESH
SUSPENDED = ContextState.SUSPENDED
RUNNING = ContextState.RUNNING
DEAD = ContextState.DEAD


class _ContextExit(BaseException):
    """Unwinds an abandoned context after ``context_set``."""


class _ContextKilled(BaseException):
    """Unwinds a suspended context being discarded."""


class ExecutionContext:
    """Saved machine state of one suspended (or fresh, or running) context.

    ``machine_state`` belongs to the backend that made the context and is
    never interpreted by anyone else.
    """

    __slots__ = ("backend", "state", "machine_state", "entry_meta", "link",
                 "stack", "sigmask", "thread", "killed", "pending_exc",
                 "__weakref__")

    def __init__(self, backend, stack=None, entry_meta=None, link=None):
        self.backend = backend
        self.state = FRESH
        self.machine_state = None
        self.entry_meta = entry_meta
        self.link = link
        self.stack = stack
        self.sigmask = None
        self.thread = None
        self.killed = False
        self.pending_exc = None

    @property
    def backend_tag(self) -> str:
        return self.backend.name

    def __repr__(self):
        return f"<ExecutionContext {self.backend.name} {self.state.value}>"


class Backend:
    name = "?"
    enters_kernel_per_switch = False
    preserves_signal_mask = False

    def __init__(self):
        self.lane = threading.get_ident()
        self.owner = self._capture_owner()
        self.running = self.owner
        self.released = False

    def __repr__(self):
        return f"<Backend {self.name}>"

    # subclasses provide _capture_owner, _new_state, swap, set, discard

    def context_init(self, stack: StackRegion, entry, arg=None, link=None) -> ExecutionContext:
        if stack_check(stack) is not StackStatus.INTACT:
            raise StackNotIntact(f"{stack!r} fails its guard check")
        ctx = ExecutionContext(self, stack, (entry, arg), link or self.owner)
        self._new_state(ctx)
        return ctx

    def _check(self, save_into, resume):
        if resume.backend is not self or save_into.backend is not self:
            raise BackendMismatch(
                f"cannot switch {save_into.backend.name} -> {resume.backend.name} "
                f"through {self.name}")
        state = resume.state
        if state is DEAD:
            raise DeadContext("resume target has finished")
        if state is RUNNING:
            raise ContextStateError("resume target is already running")
        if save_into is not self.running:
            raise ContextStateError("save_into is not the running context")

    def _check_set(self, resume):
        if resume.backend is not self:
            raise BackendMismatch(f"cannot set {resume.backend.name} context through {self.name}")
        if resume.state is DEAD:
            raise DeadContext("resume target has finished")
        if resume.state is RUNNING:
            raise ContextStateError("resume target is already running")
        if self.running is self.owner:
            raise ContextStateError("the lane owner context cannot be abandoned")


class GreenletBackend(Backend):
    name = "fast"

    def _capture_owner(self):
        ctx = ExecutionContext(self)
        ctx.state = RUNNING
        ctx.machine_state = _greenlet.getcurrent()
        return ctx

    def _new_state(self, ctx):
        ctx.machine_state = _greenlet.greenlet(self._trampoline(ctx),
                                               parent=ctx.link.machine_state)

    def _trampoline(self, ctx):
        def run(*_):
            entry, arg = ctx.entry_meta
            ctx.entry_meta = None
            try:
                entry(arg)
            except (_ContextExit, _ContextKilled):
                return
            except BaseException:
                self._return_to_link(ctx)
                raise
            self._return_to_link(ctx)
        return run

    def _return_to_link(self, ctx):
        ctx.state = DEAD
        link = ctx.link
        link.state = RUNNING
        self.running = link

    def swap(self, save_into: ExecutionContext, resume: ExecutionContext) -> None:
        if (resume.state is not SUSPENDED and resume.state is not FRESH) \
                or save_into is not self.running or resume.backend is not self:
            self._check(save_into, resume)
        save_into.state = SUSPENDED
        resume.state = RUNNING
        self.running = resume
        resume.machine_state.switch()

    def set(self, resume: ExecutionContext):
        self._check_set(resume)
        cur = self.running
        cur.state = DEAD
        resume.state = RUNNING
        self.running = resume
        cur.machine_state.parent = resume.machine_state
        raise _ContextExit

    def discard(self, ctx: ExecutionContext) -> None:
        """Tear down a context that will never be resumed again."""
        if ctx.state is SUSPENDED:
            g = ctx.machine_state
            ctx.state = DEAD
            prev = self.running
            g.parent = _greenlet.getcurrent()
            g.throw(_ContextKilled)
            self.running = prev
            prev.state = RUNNING
        elif ctx.state is FRESH:
            ctx.state = DEAD
        ctx.machine_state = None


class PortableBackend(GreenletBackend):
    name = "portable"
    enters_kernel_per_switch = True
    preserves_signal_mask = True

    def _capture_owner(self):
        ctx = super()._capture_owner()
        ctx.sigmask = _getmask()
        return ctx

    def _new_state(self, ctx):
        super()._new_state(ctx)
        ctx.sigmask = _getmask()

    def swap(self, save_into, resume):
        if (resume.state is not SUSPENDED and resume.state is not FRESH) \
                or save_into is not self.running or resume.backend is not self:
            self._check(save_into, resume)
        save_into.sigmask = _getmask()
        _setmask(resume.sigmask)
        save_into.state = SUSPENDED
        resume.state = RUNNING
        self.running = resume
        resume.machine_state.switch()

    def set(self, resume):
        self._check_set(resume)
        _setmask(resume.sigmask)
        super().set(resume)

    def _return_to_link(self, ctx):
        super()._return_to_link(ctx)
        _setmask(ctx.link.sigmask)


if _HAVE_SIGMASK:
    def _getmask():
        return signal.pthread_sigmask(signal.SIG_BLOCK, ())

    def _setmask(mask):
        signal.pthread_sigmask(signal.SIG_SETMASK, mask)
else:  # pragma: no cover - non-POSIX hosts
    def _getmask():
        return frozenset()

    def _setmask(mask):
        pass


class ThreadParkBackend(Backend):
    name = "threadpark"

    def _capture_owner(self):
        ctx = ExecutionContext(self)
        ctx.state = RUNNING
        ctx.machine_state = _locked()
        return ctx

    def _new_state(self, ctx):
        ctx.machine_state = _locked()

    def _start(self, ctx):
        t = threading.Thread(target=self._thread_main, args=(ctx,),
                             name=f"fiberrt-{id(ctx):x}", daemon=True)
        ctx.thread = t
        t.start()

    def _thread_main(self, ctx):
        ctx.machine_state.acquire()
        if ctx.killed:
            return
        # the parked thread is part of its owner's lane, not a lane of its own
        _lane.active = self
        entry, arg = ctx.entry_meta
        ctx.entry_meta = None
        try:
            entry(arg)
        except (_ContextExit, _ContextKilled):
            return
        except BaseException as exc:
            ctx.link.pending_exc = exc
        ctx.state = DEAD
        link = ctx.link
        link.state = RUNNING
        self.running = link
        link.machine_state.release()

    def swap(self, save_into, resume):
        if (resume.state is not SUSPENDED and resume.state is not FRESH) \
                or save_into is not self.running or resume.backend is not self:
            self._check(save_into, resume)
        save_into.state = SUSPENDED
        if resume.state is FRESH:
            self._start(resume)
        resume.state = RUNNING
        self.running = resume
        resume.machine_state.release()
        save_into.machine_state.acquire()
        if save_into.killed:
            raise _ContextKilled
        if save_into.pending_exc is not None:
            exc, save_into.pending_exc = save_into.pending_exc, None
            raise exc

    def set(self, resume):
        self._check_set(resume)
        cur = self.running
        cur.state = DEAD
        if resume.state is FRESH:
            self._start(resume)
        resume.state = RUNNING
        self.running = resume
        resume.machine_state.release()
        raise _ContextExit

    def discard(self, ctx):
        if ctx.state is SUSPENDED and ctx.thread is not None:
            ctx.killed = True
            ctx.state = DEAD
            ctx.machine_state.release()
            ctx.thread.join()
        elif ctx.state is FRESH:
            ctx.state = DEAD


def _locked():
    lock = _thread.allocate_lock()
    lock.acquire()
    return lock


_CLASSES = {
    "fast": GreenletBackend,
    "portable": PortableBackend,
    "threadpark": ThreadParkBackend,
}

_lane = threading.local()


def _disabled() -> set[str]:
    # Emulates builds that lack some backends.
    raw = os.environ.get("FIBER_RT_DISABLE_BACKENDS", "")
    return {name.strip() for name in raw.split(",") if name.strip()}


def backend_available(name: str) -> bool:
    if name not in _CLASSES:
        raise UnknownBackend(f"unknown backend {name!r}; known: {', '.join(BACKEND_NAMES)}")
    if name in _disabled():
        return False
    if name in ("fast", "portable"):
        return _greenlet is not None
    return True


def backend_list() -> list[str]:
    return [name for name in BACKEND_NAMES if backend_available(name)]


def backend_select(name: str) -> Backend:
    """Make ``name`` the active backend of the calling lane and return its handle."""
    if not backend_available(name):
        raise BackendUnavailable(f"backend {name!r} is not available in this build")
    if getattr(_lane, "active", None) is not None:
        raise SelectionAfterInit(
            f"backend {_lane.active.name!r} is already active on this lane")
    backend = _CLASSES[name]()
    _lane.active = backend
    return backend


def backend_release(backend: Backend) -> None:
    if getattr(_lane, "active", None) is backend:
        _lane.active = None
    backend.released = True


def active_backend() -> Backend | None:
    return getattr(_lane, "active", None)


def _require_active() -> Backend:
    backend = active_backend()
    if backend is None:
        raise ContextStateError("no backend selected on this lane")
    return backend


def context_current() -> ExecutionContext:
    return _require_active().running


def context_init(stack: StackRegion, entry, arg=None, link=None) -> ExecutionContext:
    return _require_active().context_init(stack, entry, arg, link)


def context_swap(save_into: ExecutionContext, resume: ExecutionContext) -> None:
    save_into.backend.swap(save_into, resume)


def context_set(resume: ExecutionContext):
    _require_active().set(resume)
