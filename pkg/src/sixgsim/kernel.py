"""Deterministic discrete-event engine.

Time is kept as integer microseconds. Events are delivered strictly by
``(at, seq)`` where ``seq`` is a global insertion counter, so two runs of the
same scenario with the same seed deliver the same events in the same order.
"""

from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

US_PER_S = 1_000_000
US_PER_MS = 1_000


def seconds(s: float) -> int:
    """Convert seconds to integer microseconds."""
    return int(round(s * US_PER_S))


def millis(ms: float) -> int:
    return int(round(ms * US_PER_MS))


class SchedulingInPast(ValueError):
    """Raised when an event is scheduled before the current clock."""


@dataclass(frozen=True, order=True)
class Event:
    at: int
    seq: int
    target: str = field(compare=False)
    kind: str = field(compare=False)
    payload: Any = field(default=None, compare=False)


@dataclass(frozen=True)
class TraceRecord:
    t_us: int
    seq: int
    target: str
    kind: str

    def line(self) -> str:
        return f"{self.t_us},{self.seq},{self.target},{self.kind}"


class Trace(list):
    """List of :class:`TraceRecord` with the newline-delimited serialization."""

    def serialize(self) -> str:
        return "".join(rec.line() + "\n" for rec in self)

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()


def derive_seed(scenario_seed: int, name: str) -> int:
    """64-bit stream seed from the scenario seed and a stream name."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(scenario_seed).to_bytes(8, "little", signed=False))
    h.update(name.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


class RngStream:
    """Named random stream backed by a counter-based Philox generator.

    Scalar draws are served from blocks of uniforms generated in bulk; the
    sequence depends only on ``(name, seed)`` and the order of calls.
    """

    BLOCK = 256

    def __init__(self, name: str, seed: int):
        self.name = name
        self.seed = seed
        self.gen = np.random.Generator(np.random.Philox(key=seed))
        self._buf: list = []
        self._pos = 0

    def random(self) -> float:
        """Uniform float on ``[0, 1)``."""
        if self._pos == len(self._buf):
            self._buf = self.gen.random(self.BLOCK).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def integers(self, low: int, high: int) -> int:
        """Uniform integer on the closed interval ``[low, high]``."""
        return low + int(self.random() * (high - low + 1))

    def exponential(self, mean: float) -> float:
        return -mean * math.log1p(-self.random())

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def __repr__(self) -> str:
        return f"RngStream(name={self.name!r}, seed={self.seed})"


Handler = Callable[["Kernel", Event], None]


class Kernel:
    """Single-threaded event loop with a logical clock.

    Parameters
    ----------
    seed : int
        Scenario seed; every named stream is derived from it.
    record_trace : bool
        Keep a :class:`Trace` of every delivery.
    """

    def __init__(self, seed: int = 0, record_trace: bool = True):
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.now = 0
        self._seq = 0
        self._queue: list[tuple[int, int, Event]] = []
        self._handlers: dict[str, Handler] = {}
        self._streams: dict[str, RngStream] = {}
        self.record_trace = record_trace
        self.trace = Trace()
        self.delivered = 0

    def register(self, target: str, handler: Handler) -> None:
        self._handlers[target] = handler

    def schedule(self, at: int, target: str, kind: str, payload: Any = None) -> Event:
        if at < self.now:
            raise SchedulingInPast(f"event at {at} us is before clock {self.now} us")
        ev = Event(int(at), self._seq, target, kind, payload)
        self._seq += 1
        heapq.heappush(self._queue, (ev.at, ev.seq, ev))
        return ev

    def schedule_in(self, delay_us: int, target: str, kind: str, payload: Any = None) -> Event:
        return self.schedule(self.now + delay_us, target, kind, payload)

    def pending(self) -> int:
        return len(self._queue)

    def run_until(self, t_end: int) -> Trace:
        """Deliver every event with ``at <= t_end`` and advance the clock to ``t_end``.

        Returns the trace records produced by this call.
        """
        if t_end < self.now:
            raise SchedulingInPast(f"run_until({t_end}) is before clock {self.now}")
        out = Trace()
        q = self._queue
        while q and q[0][0] <= t_end:
            at, _, ev = heapq.heappop(q)
            assert at >= self.now, "clock would move backwards"
            self.now = at
            rec = TraceRecord(ev.at, ev.seq, ev.target, ev.kind)
            out.append(rec)
            self.delivered += 1
            handler = self._handlers.get(ev.target)
            if handler is not None:
                handler(self, ev)
        self.now = t_end
        if self.record_trace:
            self.trace.extend(out)
        return out

    def rng(self, name: str) -> RngStream:
        stream = self._streams.get(name)
        if stream is None:
            stream = RngStream(name, derive_seed(self.seed, name))
            self._streams[name] = stream
        return stream
