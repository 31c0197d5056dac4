"""Deterministic full-coverage message generator for round-trip and fuzz tests.

Driven by SplitMix64 so the 10k-case bulk tests are fast and reproducible
without hypothesis overhead; hypothesis covers the shrinking-friendly
properties separately.
"""

from __future__ import annotations

import math
import struct

from xri.model import CATEGORIES, ORIGINS, ClockStamp, ContextEvent, VersionedValue
from xri.sim import SplitMix64
from xri.wire import (
    Ack,
    Cue,
    Err,
    Hello,
    Ping,
    Pong,
    Pub,
    Set,
    State,
    Sub,
    Transition,
    TransitionOk,
    Welcome,
)
from xri.model import RealityMode

_LEVEL_CHARS = "abcdefghijklmnopqrstuvwxyz0123456789_-"
_TEXT_CHARS = "abc XYZ 0189 _-\"\\/\n\té世界\U0001f600'"


class MessageGen:
    def __init__(self, seed: int):
        self.rng = SplitMix64(seed)

    def pick(self, seq):
        return seq[self.rng.next_u64() % len(seq)]

    def int_(self, lo: int, hi: int) -> int:
        return lo + self.rng.next_u64() % (hi - lo + 1)

    def level(self) -> str:
        return "".join(self.pick(_LEVEL_CHARS)
                       for _ in range(self.int_(1, 6)))

    def topic(self) -> str:
        return "/".join(self.level() for _ in range(self.int_(1, 4)))

    def filter(self) -> str:
        levels = []
        for _ in range(self.int_(1, 4)):
            r = self.int_(0, 9)
            levels.append("+" if r < 2 else self.level())
        if self.int_(0, 3) == 0:
            levels.append("#")
        return "/".join(levels)

    def text(self, max_len=12, nonempty=True) -> str:
        n = self.int_(1 if nonempty else 0, max_len)
        return "".join(self.pick(_TEXT_CHARS) for _ in range(n))

    def float_(self) -> float:
        # bit patterns re-interpreted as doubles; degenerate cases replaced
        bits = self.rng.next_u64()
        (v,) = struct.unpack("<d", struct.pack("<Q", bits))
        if not math.isfinite(v):
            v = float(self.int_(-10**6, 10**6)) / 7.0
        return v

    def value(self):
        r = self.int_(0, 3)
        if r == 0:
            return self.int_(0, 1) == 1
        if r == 1:
            return self.float_()
        return self.text()

    def payload(self) -> dict:
        return {self.text(6): self.value() for _ in range(self.int_(0, 3))}

    def clock(self) -> ClockStamp:
        return ClockStamp(self.int_(0, 2**63 - 1), self.text(8))

    def event(self, topic: str | None = None) -> ContextEvent:
        return ContextEvent(
            event_id=self.text(10),
            origin=self.pick(ORIGINS),
            category=self.pick(CATEGORIES),
            priority=self.int_(1, 5),
            topic=topic if topic is not None else self.topic(),
            payload=self.payload(),
            sim_time_ms=self.int_(0, 10**9),
            ttl_ms=self.int_(1, 10**6),
        )

    def entries(self) -> dict[str, VersionedValue]:
        return {self.text(6): VersionedValue(self.value(), self.clock())
                for _ in range(self.int_(0, 4))}

    def mode(self) -> RealityMode:
        return self.pick(list(RealityMode))

    def message(self):
        kind = self.int_(0, 12)
        if kind == 0:
            return Hello(self.text(), self.pick(("device", "user", "console")),
                         self.int_(0, 5))
        if kind == 1:
            return Welcome(self.text(), self.int_(0, 2**62))
        if kind == 2:
            return Sub(self.filter())
        if kind == 3:
            topic = self.topic()
            return Pub(topic, self.event(topic))
        if kind == 4:
            return Set(self.text(), self.pick(("physical", "virtual")),
                       self.text(), self.value(), self.int_(0, 2**62))
        if kind == 5:
            return State(self.text(), self.pick(("physical", "virtual")),
                         self.entries())
        if kind == 6:
            return Transition(self.text(), self.mode())
        if kind == 7:
            return TransitionOk(self.text(), self.mode())
        if kind == 8:
            summary = self.text(30) if self.int_(0, 1) else None
            return Cue(self.text(), self.pick(("full", "summary")),
                       self.event(), summary)
        if kind == 9:
            return Ack(self.text())
        if kind == 10:
            return Err(self.text(8), self.text(20, nonempty=False))
        if kind == 11:
            return Ping(self.int_(0, 2**62))
        return Pong(self.int_(0, 2**62))


def mutate_line(line: bytes, rng: SplitMix64) -> bytes:
    """Corrupt an encoded line: flip, insert, delete, or truncate bytes."""
    if not line:
        return line
    data = bytearray(line)
    for _ in range(1 + rng.next_u64() % 4):
        op = rng.next_u64() % 4
        pos = rng.next_u64() % len(data)
        if op == 0:
            data[pos] = rng.next_u64() % 256
        elif op == 1:
            data.insert(pos, rng.next_u64() % 256)
        elif op == 2 and len(data) > 1:
            del data[pos]
        else:
            data = data[:pos]
            if not data:
                data = bytearray(b"{")
    return bytes(data)
