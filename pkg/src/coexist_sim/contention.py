"""Edge-driven defer-plus-backoff timing shared by the LAA and Wi-Fi drivers.

Per-slot stepping would cost one event every 9 us per contender; instead a
single timer is armed at idle-onset for head_ns + counter * slot_ns, and a
busy edge cancels it and credits the fully elapsed idle slots.  This is
arithmetically identical to decrementing once per fully idle slot, freezing
on any busy slot, and re-waiting the head interval before resuming.
"""

from __future__ import annotations

from typing import Callable, Optional

from .sim_core import Event, Simulator


class SlottedContender:
    """Counts down `counter` idle slots after a contiguous idle head interval.

    The owner forwards its sensor's busy/idle edges via notify_busy/notify_idle
    and receives fire_cb() the instant the counter reaches zero.  Idle time
    before start() is never credited.
    """

    def __init__(self, sim: Simulator, target: str, head_ns: int, slot_ns: int,
                 fire_cb: Callable[[], None]):
        self.sim = sim
        self.target = target
        self.head_ns = head_ns
        self.slot_ns = slot_ns
        self.fire_cb = fire_cb
        self.counter = 0
        self.active = False
        self._count_start: Optional[int] = None
        self._timer: Optional[Event] = None

    def start(self, counter: int, channel_idle: bool) -> None:
        if self.active:
            raise RuntimeError("contender already running")
        self.counter = counter
        self.active = True
        if channel_idle:
            self._begin_count()

    def stop(self) -> None:
        self.active = False
        self._cancel_timer()

    def notify_busy(self, now: int) -> None:
        if not self.active or self._count_start is None:
            return
        if self.due_now(now):
            # The countdown completed in the same instant the channel turned
            # busy: the just-elapsed slot was idle, so the pending fire stands.
            # This is how two contenders reaching zero together collide.
            return
        elapsed = now - self._count_start
        if elapsed > self.head_ns:
            self.counter -= (elapsed - self.head_ns) // self.slot_ns
        self._cancel_timer()

    def due_now(self, now: int) -> bool:
        """True when the armed countdown completes exactly at `now`."""
        if not self.active or self._count_start is None:
            return False
        return now >= self._count_start + self.head_ns + self.counter * self.slot_ns

    def notify_idle(self, now: int) -> None:
        if self.active and self._count_start is None:
            self._begin_count()

    def _begin_count(self) -> None:
        self._count_start = self.sim.now
        fire_at = self.sim.now + self.head_ns + self.counter * self.slot_ns
        self._timer = self.sim.schedule(fire_at, self.target, "backoff_done", self._fire)

    def _cancel_timer(self) -> None:
        if self._timer is not None:
            self.sim.cancel(self._timer)
            self._timer = None
        self._count_start = None

    def _fire(self) -> None:
        self.counter = 0
        self.active = False
        self._timer = None
        self._count_start = None
        self.fire_cb()
