"""User-level cooperative threading runtime with pluggable context-switch backends."""

from .ctxcore import (
    backend_list,
    backend_select,
    context_init,
    context_set,
    context_swap,
    stack_check,
    stack_new,
    StackStatus,
)
from .sched import Runtime, RunSummary, rt_init
from .sync import INPUT, DIRECT, PROC, Operation, Invocation, Semaphore

__version__ = "0.1.0"

__all__ = [
    "backend_list", "backend_select", "context_init", "context_set", "context_swap",
    "stack_check", "stack_new", "StackStatus", "Runtime", "RunSummary", "rt_init",
    "INPUT", "DIRECT", "PROC", "Operation", "Invocation", "Semaphore",
]
