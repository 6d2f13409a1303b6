"""Exception hierarchy for the runtime, verifier and benchmark harness."""


class FiberError(Exception):
    """Base class for every error raised by fiberrt."""


# -- stacks and contexts -----------------------------------------------------

class SizeTooSmall(FiberError, ValueError):
    pass


class AllocationFailure(FiberError, MemoryError):
    pass


class StackNotIntact(FiberError):
    pass


class StackFault(FiberError):
    """A guard check found a corrupted stack region."""

    def __init__(self, pid, status):
        super().__init__(f"process {pid}: stack guard reports {status.name}")
        self.pid = pid
        self.status = status


class ContextError(FiberError):
    pass


class DeadContext(ContextError):
    pass


class BackendMismatch(ContextError):
    pass


class ContextStateError(ContextError):
    pass


# -- backend selection -------------------------------------------------------

class BackendError(FiberError):
    pass


class UnknownBackend(BackendError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class BackendUnavailable(BackendError):
    pass


class SelectionAfterInit(BackendError):
    pass


# -- scheduler ---------------------------------------------------------------

class SchedulerError(FiberError):
    pass


class NotInProcess(SchedulerError):
    pass


class DeadlockDetected(SchedulerError):
    def __init__(self, blocked):
        self.blocked = list(blocked)
        super().__init__(f"deadlock: ready queue empty, blocked pids {self.blocked}")


# -- synchronization ---------------------------------------------------------

class SyncError(FiberError):
    pass


class NegativeInitial(SyncError, ValueError):
    pass


class BodyModeMismatch(SyncError, ValueError):
    pass


class SendToDirect(SyncError):
    pass


class ReceiveOnNonInput(SyncError):
    pass


class AlreadyCompleted(SyncError):
    pass


class ReplyToSend(SyncError):
    pass


class TooManyArguments(SyncError, ValueError):
    pass


# -- benchmarking ------------------------------------------------------------

class UnknownKernel(FiberError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class EmptyInput(FiberError, ValueError):
    pass
