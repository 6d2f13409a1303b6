"""Stacks, execution contexts and switch backends."""

from .backends import (
    BACKEND_NAMES,
    Backend,
    ContextState,
    ExecutionContext,
    active_backend,
    backend_available,
    backend_list,
    backend_release,
    backend_select,
    context_current,
    context_init,
    context_set,
    context_swap,
)
from .stack import (
    CANARY_WORD,
    DEFAULT_STACK_BYTES,
    GUARD_BYTES,
    MIN_STACK_BYTES,
    StackRegion,
    StackStatus,
    stack_check,
    stack_new,
)

__all__ = [
    "BACKEND_NAMES", "Backend", "ContextState", "ExecutionContext",
    "active_backend", "backend_available", "backend_list", "backend_release",
    "backend_select", "context_current", "context_init", "context_set",
    "context_swap", "CANARY_WORD", "DEFAULT_STACK_BYTES", "GUARD_BYTES",
    "MIN_STACK_BYTES", "StackRegion", "StackStatus", "stack_check", "stack_new",
]
