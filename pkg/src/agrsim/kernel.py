"""Discrete-event simulation kernel.

Owns virtual time, the pending-event queue, deterministic dispatch, and
per-agent random streams. Virtual time is an unsigned 64-bit tick count
(1 tick = 1 microsecond of simulated time by convention); there is no
floating-point time anywhere. Events are totally ordered by
(fire_time, seq) where seq is the insertion counter, so ties at the same
tick resolve FIFO. Dispatch is run-to-completion: a handler finishes
before the next event is popped.

Every fired event is appended to a canonical trace, one record per line::

    event_id,fire_time,seq,target,payload_tag

and the trace digest is SHA-256 over the concatenated record bytes
(each record includes its trailing newline). Two runs are replications
of each other exactly when their digests are equal.
"""

import hashlib
import heapq
from bisect import insort
from dataclasses import dataclass
from typing import Any, BinaryIO, Callable, Optional

from .rng import RngStream

# Virtual time and all identifiers are unsigned 64-bit quantities.
VirtualTime = int
U64_MAX = (1 << 64) - 1


class ScheduleOverflowError(Exception):
    """now + delay exceeded the 64-bit horizon; the run is misconfigured."""


class HandlerFault(Exception):
    """An event handler raised; the run is aborted with the event attached."""

    def __init__(self, event: "FiredEvent", cause: BaseException):
        super().__init__(
            f"handler fault at t={event.fire_time} while dispatching "
            f"event {event.event_id} (tag={event.payload_tag!r}, "
            f"target={event.target}): {cause!r}"
        )
        self.event = event
        self.cause = cause


@dataclass(frozen=True, slots=True)
class ScheduledEvent:
    """A pending event; (fire_time, seq) is its position in the total order."""

    event_id: int
    fire_time: VirtualTime
    seq: int
    target: int
    payload: Any


@dataclass(frozen=True, slots=True)
class FiredEvent:
    """Trace-level record of one dispatched event."""

    event_id: int
    fire_time: VirtualTime
    seq: int
    target: int
    payload_tag: str


_TAG_CACHE: dict[type, str] = {}


def payload_tag(payload: Any) -> str:
    """Stable trace tag for a payload: its class-level TAG, else the class name.

    Tags end up in the canonical trace, so they must be ASCII without commas
    or newlines; that is checked once per payload type.
    """
    t = type(payload)
    tag = _TAG_CACHE.get(t)
    if tag is None:
        tag = getattr(t, "TAG", None) or t.__name__.lower()
        if not tag.isascii() or "," in tag or "\n" in tag:
            raise ValueError(f"illegal payload tag {tag!r} for {t.__name__}")
        _TAG_CACHE[t] = tag
    return tag


class TraceRecorder:
    """Streams canonical trace records into a SHA-256 digest.

    Optionally keeps the record strings in memory (for assertions over full
    traces) and/or copies the bytes to a binary sink (for trace diffing).
    """

    def __init__(self, keep_records: bool = False, sink: Optional[BinaryIO] = None):
        self._hash = hashlib.sha256()
        self.records: Optional[list[str]] = [] if keep_records else None
        self._sink = sink

    def record(self, event_id: int, fire_time: int, seq: int, target: int, tag: str) -> None:
        line = f"{event_id},{fire_time},{seq},{target},{tag}\n"
        data = line.encode("ascii")
        self._hash.update(data)
        if self.records is not None:
            self.records.append(line)
        if self._sink is not None:
            self._sink.write(data)

    def digest(self) -> bytes:
        return self._hash.digest()

    def hexdigest(self) -> str:
        return self._hash.hexdigest()


class HeapEventQueue:
    """Binary-heap pending queue; the default implementation."""

    def __init__(self):
        self._heap: list[tuple[int, int, int]] = []

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, entry: tuple[int, int, int]) -> None:
        heapq.heappush(self._heap, entry)

    def peek(self) -> tuple[int, int, int]:
        return self._heap[0]

    def pop(self) -> tuple[int, int, int]:
        return heapq.heappop(self._heap)


class SortedListEventQueue:
    """Sorted-list pending queue; the slow oracle twin of the heap.

    Kept descending so pop() takes from the end in O(1); insertion is O(n).
    Exists so the same run can be executed on two structurally different
    schedulers and compared digest-for-digest.
    """

    def __init__(self):
        self._entries: list[tuple[int, int, int]] = []

    def __len__(self) -> int:
        return len(self._entries)

    def push(self, entry: tuple[int, int, int]) -> None:
        insort(self._entries, entry, key=lambda e: (-e[0], -e[1]))

    def peek(self) -> tuple[int, int, int]:
        return self._entries[-1]

    def pop(self) -> tuple[int, int, int]:
        return self._entries.pop()


QUEUE_IMPLS = {
    "heap": HeapEventQueue,
    "sorted": SortedListEventQueue,
}


def make_event_queue(name: str):
    try:
        return QUEUE_IMPLS[name]()
    except KeyError:
        raise ValueError(
            f"unknown queue implementation {name!r}; options: {sorted(QUEUE_IMPLS)}"
        ) from None


class Kernel:
    """The simulation engine: virtual clock, event queue, RNG derivation.

    A kernel is confined to one execution context for the duration of a run;
    parallelism comes from running independent kernels, never from sharing
    one.
    """

    def __init__(
        self,
        seed: int = 0,
        queue: str = "heap",
        recorder: Optional[TraceRecorder] = None,
    ):
        self._now: VirtualTime = 0
        self._seed = seed
        self._queue = make_event_queue(queue)
        self._pending: dict[int, ScheduledEvent] = {}
        self._next_seq = 0
        self._next_event_id = 1
        self._fired = 0
        self._failed = False
        # Model-level shared values; by convention mutated only from within
        # event handlers.
        self.global_vars: dict[str, Any] = {}
        # Set by the runtime that owns this kernel; receives each fired event.
        self.dispatcher: Optional[Callable[[ScheduledEvent], None]] = None
        self.recorder = recorder if recorder is not None else TraceRecorder()

    @property
    def now(self) -> VirtualTime:
        return self._now

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def pending_count(self) -> int:
        return len(self._pending)

    @property
    def fired_count(self) -> int:
        return self._fired

    def schedule(self, target: int, payload: Any, delay: int) -> int:
        """Enqueue an event for `target` at now + delay; returns its event id."""
        if self._failed:
            raise RuntimeError("run was aborted by a handler fault")
        if delay < 0:
            raise ValueError(f"delay must be >= 0, got {delay}")
        fire_time = self._now + delay
        if fire_time > U64_MAX:
            raise ScheduleOverflowError(
                f"fire time {fire_time} exceeds the 64-bit tick horizon"
            )
        event_id = self._next_event_id
        self._next_event_id += 1
        seq = self._next_seq
        self._next_seq += 1
        self._pending[event_id] = ScheduledEvent(event_id, fire_time, seq, target, payload)
        self._queue.push((fire_time, seq, event_id))
        return event_id

    def cancel(self, event_id: int) -> bool:
        """True iff the event was pending and will now never fire. Idempotent.

        Cancellation is lazy: the queue entry stays behind and is skipped
        (without advancing the clock) when it surfaces.
        """
        return self._pending.pop(event_id, None) is not None

    def _next_live_time(self) -> Optional[VirtualTime]:
        # Prune cancelled entries off the head without touching live ones.
        while len(self._queue):
            fire_time, _seq, event_id = self._queue.peek()
            if event_id in self._pending:
                return fire_time
            self._queue.pop()
        return None

    def step(self) -> Optional[FiredEvent]:
        """Pop and dispatch the next event; None if the queue is empty.

        The clock advances to the event's fire time before dispatch. A
        handler exception aborts the run: it is wrapped in HandlerFault with
        the event context and the kernel refuses further scheduling.
        """
        if self._next_live_time() is None:
            return None
        _fire_time, _seq, event_id = self._queue.pop()
        event = self._pending.pop(event_id)
        self._now = event.fire_time
        tag = payload_tag(event.payload)
        self.recorder.record(event.event_id, event.fire_time, event.seq, event.target, tag)
        self._fired += 1
        fired = FiredEvent(event.event_id, event.fire_time, event.seq, event.target, tag)
        if self.dispatcher is not None:
            try:
                self.dispatcher(event)
            except Exception as exc:
                self._failed = True
                raise HandlerFault(fired, exc) from exc
        return fired

    def run_until(self, stop: VirtualTime) -> int:
        """Execute every event with fire_time <= stop; leaves now == stop."""
        if stop < self._now:
            raise ValueError(f"stop {stop} is in the past (now={self._now})")
        executed = 0
        while True:
            t = self._next_live_time()
            if t is None or t > stop:
                break
            self.step()
            executed += 1
        self._now = stop
        return executed

    def run_to_quiescence(self) -> int:
        """Execute events until none are pending; returns the count."""
        executed = 0
        while self._pending:
            self.step()
            executed += 1
        return executed

    def derive_rng(self, agent_id: int) -> RngStream:
        """Stream keyed by (run seed, agent id), independent of event order."""
        return RngStream(self._seed, agent_id)
