"""Deterministic discrete-event kernel.

Integer-nanosecond virtual clock, an ordered event queue with sequence-number
tie-breaking, and named random substreams.  Substreams are seeded by hashing
(master_seed, label), so adding or removing one consumer never perturbs
another consumer's draws.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

# All simulation times are integer nanoseconds.
US = 1_000
MS = 1_000_000
SEC = 1_000_000_000


def us(value: float) -> int:
    """Microseconds to integer nanoseconds."""
    return round(value * US)


def ms(value: float) -> int:
    """Milliseconds to integer nanoseconds."""
    return round(value * MS)


def sec(value: float) -> int:
    """Seconds to integer nanoseconds."""
    return round(value * SEC)


class RngStream:
    """Named random substream derived from (master_seed, label).

    The generator seed is a SHA-256 hash of the pair, so the same label yields
    a bit-identical sequence for a given master seed regardless of how many
    other streams exist or in which order they were created.
    """

    def __init__(self, master_seed: int, label: str):
        self.label = label
        digest = hashlib.sha256(f"{master_seed}:{label}".encode()).digest()
        self._rng = random.Random(int.from_bytes(digest[:8], "big"))

    def uniform_int(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends inclusive."""
        if lo > hi:
            raise ValueError(f"empty integer range [{lo}, {hi}]")
        return self._rng.randint(lo, hi)

    def uniform(self, lo: float, hi: float) -> float:
        return self._rng.uniform(lo, hi)

    def expovariate(self, rate: float) -> float:
        return self._rng.expovariate(rate)

    def gauss(self, mu: float, sigma: float) -> float:
        return self._rng.gauss(mu, sigma)

    def random(self) -> float:
        return self._rng.random()


@dataclass
class Event:
    """A scheduled callback; dispatch order is (fire_at, seq) lexicographic."""

    fire_at: int
    seq: int
    target: str
    kind: str
    fn: Optional[Callable[[], None]] = field(default=None, repr=False)
    cancelled: bool = False


class Simulator:
    """Single-threaded event loop over an integer-nanosecond clock.

    Instances are self-contained: running several in parallel processes is
    safe because nothing is shared.
    """

    def __init__(self, master_seed: int = 0, trace: bool = False):
        self.master_seed = master_seed
        self.now: int = 0
        self.trace = trace
        self.event_log: list[tuple[int, int, str, str]] = []
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0
        self._streams: dict[str, RngStream] = {}

    def stream(self, label: str) -> RngStream:
        """Return the substream for `label`, creating it on first use."""
        s = self._streams.get(label)
        if s is None:
            s = self._streams[label] = RngStream(self.master_seed, label)
        return s

    def schedule(self, fire_at: int, target: str, kind: str,
                 fn: Callable[[], None]) -> Event:
        """Schedule `fn` at absolute time `fire_at`; returns a cancellable handle."""
        if fire_at < self.now:
            raise ValueError(
                f"cannot schedule event at {fire_at} ns before current time {self.now} ns")
        ev = Event(fire_at, self._seq, target, kind, fn)
        self._seq += 1
        heapq.heappush(self._heap, (fire_at, ev.seq, ev))
        return ev

    def schedule_in(self, delay: int, target: str, kind: str,
                    fn: Callable[[], None]) -> Event:
        return self.schedule(self.now + delay, target, kind, fn)

    def cancel(self, event: Event) -> None:
        """A cancelled event never dispatches; cancelling twice is harmless."""
        event.cancelled = True

    def run_until(self, t_end: int) -> int:
        """Dispatch every pending event with fire_at <= t_end; clock ends at t_end."""
        if t_end < self.now:
            raise ValueError(f"t_end {t_end} ns is before current time {self.now} ns")
        dispatched = 0
        heap = self._heap
        log = self.event_log
        trace = self.trace
        while heap and heap[0][0] <= t_end:
            fire_at, seq, ev = heapq.heappop(heap)
            if ev.cancelled:
                continue
            self.now = fire_at
            if trace:
                log.append((fire_at, seq, ev.target, ev.kind))
            ev.fn()
            dispatched += 1
        self.now = t_end
        return dispatched
