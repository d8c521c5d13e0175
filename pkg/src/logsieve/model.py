"""Domain model shared by the storage, indexing, and query layers.

Everything here is an immutable value object. Timestamps are integer
milliseconds since the epoch; positions are 1-based within a trace. Within
one trace, timestamps are strictly increasing with position, so an event is
uniquely identified by (trace_id, ts).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple


class Operator(str, Enum):
    """Pattern operator attached to a query event."""

    SIMPLE = "simple"
    KLEENE_PLUS = "kleene_plus"
    KLEENE_STAR = "kleene_star"
    NEGATION = "negation"
    OR = "or"


@dataclass(frozen=True, slots=True)
class Event:
    """One typed, timestamped occurrence within a trace.

    ``pos`` may be 0 on intermediate events reconstructed from an index that
    does not store positions; stored traces always carry real positions.
    """

    trace_id: str
    event_type: str
    ts: int
    pos: int = 0


@dataclass(frozen=True, slots=True)
class Trace:
    trace_id: str
    events: tuple[Event, ...]

    @property
    def max_ts(self) -> int:
        return self.events[-1].ts if self.events else -1

    def types(self) -> set[str]:
        return {ev.event_type for ev in self.events}


class TypePair(NamedTuple):
    """Ordered pair of event types; the key of the pair index."""

    first: str
    second: str


@dataclass(frozen=True, slots=True)
class EventPair:
    """A concrete indexed instance of a :class:`TypePair` inside one trace.

    Depending on the store mode only one of the (ts, pos) field pairs is
    persisted; the other is 0 when reconstructed from disk.
    """

    trace_id: str
    first_ts: int = 0
    second_ts: int = 0
    first_pos: int = 0
    second_pos: int = 0


@dataclass(frozen=True, slots=True)
class QueryEvent:
    """One position of a query pattern: an event type plus an operator.

    ``alternatives`` lists the extra acceptable types and is only nonempty
    for the OR operator.
    """

    event_type: str
    operator: Operator = Operator.SIMPLE
    alternatives: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.alternatives and self.operator is not Operator.OR:
            raise ValueError("alternatives are only allowed with the 'or' operator")

    def type_choices(self) -> tuple[str, ...]:
        return (self.event_type, *self.alternatives)


@dataclass(frozen=True, slots=True)
class Constraint:
    """Time or gap restriction between two pattern positions (1-based, i < j).

    ``value`` is milliseconds for time constraints and a position difference
    for gap constraints; both within and atleast are inclusive.
    """

    kind: str  # "time" | "gap"
    mode: str  # "within" | "atleast"
    value: int
    i: int
    j: int

    def __post_init__(self) -> None:
        if self.kind not in ("time", "gap"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.mode not in ("within", "atleast"):
            raise ValueError(f"unknown constraint mode {self.mode!r}")
        if self.value <= 0:
            raise ValueError("constraint value must be positive")
        if not 1 <= self.i < self.j:
            raise ValueError("constraint positions must satisfy 1 <= i < j")


@dataclass(frozen=True, slots=True)
class Occurrence:
    """One detected match: the matched events per positive pattern position.

    Every position holds a single event except Kleene positions, which hold
    the absorbed run. ``modification_cost`` is only set by the explainer.
    """

    trace_id: str
    matches: tuple[tuple[Event, ...], ...]
    modification_cost: int | None = None

    def all_events(self) -> tuple[Event, ...]:
        return tuple(ev for bundle in self.matches for ev in bundle)

    @property
    def first_ts(self) -> int:
        return next(b[0].ts for b in self.matches if b)

    @property
    def last_ts(self) -> int:
        return next(b[-1].ts for b in reversed(self.matches) if b)


def validate_trace(trace: Trace) -> str | None:
    """Check the trace invariants; return None if ok, else a description.

    The first offending position is named. Positions must run 1..n and
    timestamps must be strictly increasing (no two events in a case may
    share a timestamp).
    """
    prev_ts: int | None = None
    for idx, ev in enumerate(trace.events, start=1):
        if ev.pos != idx:
            return f"pos {idx}: expected position {idx}, found {ev.pos}"
        if ev.trace_id != trace.trace_id:
            return f"pos {idx}: event belongs to trace {ev.trace_id!r}"
        if prev_ts is not None:
            if ev.ts == prev_ts:
                return f"pos {idx}: duplicate timestamp {ev.ts}"
            if ev.ts < prev_ts:
                return f"pos {idx}: timestamp {ev.ts} out of order"
        prev_ts = ev.ts
    return None


def pairs_overlap(p1: EventPair, p2: EventPair) -> bool:
    """True iff the two pairs' position ranges overlap in time.

    Two pairs are disjoint exactly when one starts after the other ends;
    a shared boundary position counts as overlap.
    """
    if p1.trace_id != p2.trace_id:
        raise ValueError("pairs_overlap requires pairs from the same trace")
    return not (p1.first_pos > p2.second_pos or p1.second_pos < p2.first_pos)


def make_trace(trace_id: str, typed_ts: list[tuple[str, int]]) -> Trace:
    """Build a trace from (event_type, ts) rows, assigning positions."""
    events = tuple(
        Event(trace_id=trace_id, event_type=t, ts=ts, pos=i)
        for i, (t, ts) in enumerate(typed_ts, start=1)
    )
    return Trace(trace_id=trace_id, events=events)
