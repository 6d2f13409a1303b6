"""Guard-instrumented stack regions.

Each region is a flat byte buffer with a canary block at both ends.  The
stack grows downward: running off the low end is an *overflow*, writing past
the high end (popping more than was pushed) is an *underflow*.  Checks are
software comparisons made on demand, at switch points and harness
checkpoints.
"""

from __future__ import annotations

import ctypes
import enum
import os
import struct

from ..errors import AllocationFailure, SizeTooSmall

MIN_STACK_BYTES = 16 * 1024
DEFAULT_STACK_BYTES = 64 * 1024
STACK_ALIGNMENT = 16
WORD_BYTES = 4
GUARD_WORDS = 8
CANARY_WORD = 0x5349_4C49
CANARY = struct.pack("<I", CANARY_WORD) * GUARD_WORDS
GUARD_BYTES = len(CANARY)

# Fault-injection switch: regions created while this is false still reserve
# the guard span but never get the canary written, and checks skip them.
GUARDS_ENABLED = os.environ.get("FIBER_RT_SKIP_GUARDS", "") in ("", "0")


class StackStatus(enum.Enum):
    INTACT = "Intact"
    OVERFLOW = "Overflow"
    UNDERFLOW = "Underflow"
    BOTH = "Both"


class StackRegion:
    """Stack memory for one green process.

    Offsets passed to :meth:`write` and :meth:`read` are relative to the
    lowest byte of the whole region, guards included.
    """

    __slots__ = ("buf", "size", "guard_bytes", "guarded", "alignment", "base", "_anchor")

    def __init__(self, buf: bytearray, guarded: bool, alignment: int):
        self.buf = buf
        self.size = len(buf)
        self.guard_bytes = GUARD_BYTES
        self.guarded = guarded
        self.alignment = alignment
        self._anchor = (ctypes.c_char * self.size).from_buffer(buf)
        self.base = ctypes.addressof(self._anchor)

    @property
    def guard_low(self) -> bytes:
        return bytes(self.buf[: self.guard_bytes])

    @property
    def guard_high(self) -> bytes:
        return bytes(self.buf[self.size - self.guard_bytes :])

    @property
    def usable_lo(self) -> int:
        return self.guard_bytes

    @property
    def usable_hi(self) -> int:
        """One past the highest usable byte (the initial stack pointer)."""
        return self.size - self.guard_bytes

    @property
    def usable_size(self) -> int:
        return self.size - 2 * self.guard_bytes

    def write(self, offset: int, data: bytes) -> None:
        if offset < 0 or offset + len(data) > self.size:
            raise IndexError(f"write [{offset}, {offset + len(data)}) outside region of {self.size} bytes")
        self.buf[offset : offset + len(data)] = data

    def read(self, offset: int, length: int) -> bytes:
        if offset < 0 or offset + length > self.size:
            raise IndexError(f"read [{offset}, {offset + length}) outside region of {self.size} bytes")
        return bytes(self.buf[offset : offset + length])

    def push(self, sp: int, data: bytes) -> int:
        """Store ``data`` just below ``sp`` and return the new stack pointer.

        Pushing past the usable span lands in the low guard, which is how a
        runaway frame shows up on the next check.
        """
        new_sp = sp - len(data)
        self.write(new_sp, data)
        return new_sp

    def __repr__(self):
        return f"<StackRegion base=0x{self.base:x} size={self.size} guarded={self.guarded}>"


def stack_new(size: int, *, guards: bool | None = None,
              alignment: int = STACK_ALIGNMENT,
              min_bytes: int = MIN_STACK_BYTES) -> StackRegion:
    if size < min_bytes or size < 4 * GUARD_BYTES:
        raise SizeTooSmall(f"stack size {size} below floor {min_bytes}")
    if guards is None:
        guards = GUARDS_ENABLED
    size = -(-size // alignment) * alignment
    try:
        buf = bytearray(size)
    except MemoryError as exc:
        raise AllocationFailure(f"cannot allocate {size}-byte stack") from exc
    if guards:
        buf[:GUARD_BYTES] = CANARY
        buf[size - GUARD_BYTES :] = CANARY
    return StackRegion(buf, guards, alignment)


def stack_check(region: StackRegion) -> StackStatus:
    if not region.guarded:
        return StackStatus.INTACT
    g = region.guard_bytes
    buf = region.buf
    low_ok = buf[:g] == CANARY
    high_ok = buf[region.size - g :] == CANARY
    if low_ok and high_ok:
        return StackStatus.INTACT
    if high_ok:
        return StackStatus.OVERFLOW
    if low_ok:
        return StackStatus.UNDERFLOW
    return StackStatus.BOTH
