"""Identifier generation and clocks.

Identifiers are opaque, sortable strings (millisecond timestamp plus random
tail in Crockford base32). Scripted runs use a logical clock and a seeded
generator so identical input always produces identical output bytes.
"""

from __future__ import annotations

import random
import time

_B32 = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"


def _b32(value: int, width: int) -> str:
    out = []
    for _ in range(width):
        out.append(_B32[value & 31])
        value >>= 5
    return "".join(reversed(out))


class SystemClock:
    def now_ms(self) -> int:
        return int(time.time() * 1000)


class LogicalClock:
    """Deterministic clock: starts at a fixed epoch, advances per tick."""

    def __init__(self, start_ms: int = 1577836800000, step_ms: int = 1000):
        self._now = start_ms
        self._step = step_ms

    def now_ms(self) -> int:
        now = self._now
        self._now += self._step
        return now

    def peek_ms(self) -> int:
        return self._now


class IdGenerator:
    def __init__(self, clock, seed: int | None = None):
        self._clock = clock
        self._rng = random.Random(seed)
        self._last = -1

    def new_id(self, prefix: str = "") -> str:
        ms = self._clock.now_ms()
        if ms <= self._last:
            ms = self._last + 1
        self._last = ms
        tail = _b32(self._rng.getrandbits(40), 8)
        body = _b32(ms, 10) + tail
        return f"{prefix}{body}" if prefix else body
