"""Brute-force reference matcher over raw traces.

This module is the test suite's ground truth: it enumerates event
assignments exhaustively instead of scanning, and deliberately shares no
matching code with the production engine. Instances must stay small; calls
refuse traces beyond the enumeration guard.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .model import Event, Occurrence, Operator, QueryEvent, Trace
from .query import Query

MAX_TRACE_EVENTS = 25
MAX_EXPLAIN_ASSIGNMENTS = 7**6


class OracleBudgetError(Exception):
    """The instance is too large for exhaustive enumeration."""


@dataclass(frozen=True)
class OracleResult:
    matching_trace_ids: frozenset[str]
    occurrences: dict[str, list[Occurrence]]


def _expand_alternatives(pattern: tuple[QueryEvent, ...]) -> list[list[QueryEvent]]:
    choices = []
    for qe in pattern:
        if qe.operator is Operator.OR:
            choices.append([QueryEvent(t, Operator.SIMPLE) for t in qe.type_choices()])
        else:
            choices.append([qe])
    return [list(combo) for combo in itertools.product(*choices)]


def _window_events(trace: Trace, window) -> list[Event]:
    if window is None:
        return list(trace.events)
    lo, hi = window
    return [ev for ev in trace.events if lo <= ev.ts <= hi]


def _alternative_slots(alt: list[QueryEvent]):
    """Positive slots plus the negated types guarding each gap between them.

    Returns (slots, guards) where slots is a list of (types_ok, kind) and
    guards[g] is the set of types forbidden strictly between slot g-1 and
    slot g (index 0 guards the region before the first slot, len(slots)
    the region after the last; both stay empty because negation cannot sit
    at the pattern edges).
    """
    slots: list[tuple[str, str]] = []
    guards: list[set[str]] = [set()]
    for qe in alt:
        if qe.operator is Operator.NEGATION:
            guards[-1].add(qe.event_type)
        else:
            kind = {
                Operator.SIMPLE: "one",
                Operator.KLEENE_PLUS: "plus",
                Operator.KLEENE_STAR: "star",
            }[qe.operator]
            slots.append((qe.event_type, kind))
            guards.append(set())
    return slots, guards


def _constraint_slot_map(alt: list[QueryEvent]) -> dict[int, int]:
    """Original 1-based pattern position -> positive slot index."""
    mapping = {}
    slot = 0
    for pos, qe in enumerate(alt, start=1):
        if qe.operator is not Operator.NEGATION:
            mapping[pos] = slot
            slot += 1
    return mapping


def _assignments(events: list[Event], slots) -> "itertools.chain":
    """Yield every slot assignment as a list of (first_idx, last_idx) or None.

    A "one" slot binds a single event; Kleene slots bind a first/last span
    of their type (the events in between of the same type are implied);
    a "star" slot may be None. Slots are bound left to right, each starting
    strictly after the previous slot's last event.
    """

    n = len(events)

    def rec(slot_idx: int, after: int, acc: list):
        if slot_idx == len(slots):
            yield list(acc)
            return
        etype, kind = slots[slot_idx]
        if kind == "star":
            acc.append(None)
            yield from rec(slot_idx + 1, after, acc)
            acc.pop()
        candidates = [i for i in range(after, n) if events[i].event_type == etype]
        for ci, first in enumerate(candidates):
            if kind == "one":
                acc.append((first, first))
                yield from rec(slot_idx + 1, first + 1, acc)
                acc.pop()
            else:
                for last in candidates[ci:]:
                    acc.append((first, last))
                    yield from rec(slot_idx + 1, last + 1, acc)
                    acc.pop()

    return rec(0, 0, [])


def _guards_ok(events: list[Event], assignment, guards) -> bool:
    for g, forbidden in enumerate(guards):
        if not forbidden:
            continue
        left = None
        for span in reversed(assignment[:g]):
            if span is not None:
                left = events[span[1]].ts
                break
        right = None
        for span in assignment[g:]:
            if span is not None:
                right = events[span[0]].ts
                break
        for ev in events:
            if ev.event_type in forbidden:
                if (left is None or ev.ts > left) and (right is None or ev.ts < right):
                    return False
    return True


def _constraints_ok(events: list[Event], assignment, constraints, slot_map) -> bool:
    for c in constraints:
        si = slot_map.get(c.i)
        sj = slot_map.get(c.j)
        if si is None or sj is None:
            return False  # endpoint on a negated position never satisfiable
        a = assignment[si]
        b = assignment[sj]
        if a is None or b is None:
            continue  # zero-match optional position: constraint is vacuous
        ev_a = events[a[0]]
        ev_b = events[b[0]]
        diff = (ev_b.ts - ev_a.ts) if c.kind == "time" else (ev_b.pos - ev_a.pos)
        if c.mode == "within" and diff > c.value:
            return False
        if c.mode == "atleast" and diff < c.value:
            return False
    return True


def _strictly_increasing(events: list[Event], assignment) -> bool:
    prev = None
    for span in assignment:
        if span is None:
            continue
        first, last = span
        if prev is not None and events[first].ts <= prev:
            return False
        if events[last].ts < events[first].ts:
            return False
        prev = events[last].ts
    return True


def _occurrence_from(trace_id: str, events: list[Event], assignment, slots) -> Occurrence:
    matches = []
    for span, (etype, _kind) in zip(assignment, slots):
        if span is None:
            matches.append(())
            continue
        first, last = span
        run = tuple(ev for ev in events[first : last + 1] if ev.event_type == etype)
        matches.append(run)
    return Occurrence(trace_id=trace_id, matches=tuple(matches))


def _find_matches(trace: Trace, query: Query, from_offset: int = 0):
    """Yield (assignment, slots, events) for every valid assignment."""
    events = _window_events(trace, query.window)
    if from_offset:
        events = events[from_offset:]
    present = {ev.event_type for ev in events}
    for alt in _expand_alternatives(query.pattern):
        required = {
            qe.event_type
            for qe in alt
            if qe.operator in (Operator.SIMPLE, Operator.KLEENE_PLUS)
        }
        if not required <= present:
            continue
        slots, guards = _alternative_slots(alt)
        slot_map = _constraint_slot_map(alt)
        if not slots:
            continue
        for assignment in _assignments(events, slots):
            if all(span is None for span in assignment):
                continue  # an occurrence must contain at least one event
            if not _strictly_increasing(events, assignment):
                continue
            if not _guards_ok(events, assignment, guards):
                continue
            if not _constraints_ok(events, assignment, query.constraints, slot_map):
                continue
            yield assignment, slots, events


def brute_force_detect(traces: list[Trace], query: Query, ids_only: bool = False) -> OracleResult:
    """Exhaustive detection over raw traces.

    The per-trace occurrence lists reproduce consume semantics: the
    earliest-ending valid assignment is accepted, everything up to its last
    event is discarded, and the scan repeats (only when return_all is set).
    With ``ids_only`` the per-trace search stops at the first valid
    assignment and no occurrences are materialized.
    """
    for trace in traces:
        if len(trace.events) > MAX_TRACE_EVENTS:
            raise OracleBudgetError(
                f"trace {trace.trace_id} has {len(trace.events)} events; "
                f"oracle is limited to {MAX_TRACE_EVENTS}"
            )
    ids = set()
    occurrences: dict[str, list[Occurrence]] = {}
    for trace in traces:
        if ids_only:
            if next(iter(_find_matches(trace, query)), None) is not None:
                ids.add(trace.trace_id)
            continue
        found: list[Occurrence] = []
        offset = 0
        while True:
            best = None
            for assignment, slots, events in _find_matches(trace, query, offset):
                occ = _occurrence_from(trace.trace_id, events, assignment, slots)
                key = (occ.last_ts, occ.first_ts, tuple(ev.ts for ev in occ.all_events()))
                if best is None or key < best[0]:
                    best = (key, occ, events)
            if best is None:
                break
            _key, occ, events = best
            found.append(occ)
            if not query.return_all:
                break
            last_ts = occ.last_ts
            offset += next(i for i, ev in enumerate(events) if ev.ts == last_ts) + 1
        if found:
            ids.add(trace.trace_id)
            occurrences[trace.trace_id] = found
    return OracleResult(matching_trace_ids=frozenset(ids), occurrences=occurrences)


def validate_occurrence(trace: Trace, query: Query, occ: Occurrence) -> bool:
    """Re-validate an occurrence produced elsewhere, from first principles."""
    events = _window_events(trace, query.window)
    by_ts = {ev.ts: ev for ev in events}
    for alt in _expand_alternatives(query.pattern):
        slots, guards = _alternative_slots(alt)
        if len(slots) != len(occ.matches):
            continue
        assignment = []
        ok = True
        for bundle, (etype, kind) in zip(occ.matches, slots):
            if not bundle:
                if kind != "star":
                    ok = False
                    break
                assignment.append(None)
                continue
            if kind == "one" and len(bundle) != 1:
                ok = False
                break
            if any(ev.event_type != etype or by_ts.get(ev.ts) is None for ev in bundle):
                ok = False
                break
            ts_list = [ev.ts for ev in bundle]
            if ts_list != sorted(set(ts_list)):
                ok = False
                break
            idx_first = next(i for i, ev in enumerate(events) if ev.ts == ts_list[0])
            idx_last = next(i for i, ev in enumerate(events) if ev.ts == ts_list[-1])
            assignment.append((idx_first, idx_last))
        if not ok:
            continue
        if all(span is None for span in assignment):
            continue
        if not _strictly_increasing(events, assignment):
            continue
        if not _guards_ok(events, assignment, guards):
            continue
        if not _constraints_ok(events, assignment, query.constraints, _constraint_slot_map(alt)):
            continue
        return True
    return False


def brute_force_explain(
    trace: Trace, query: Query, k: int, uncertainty: int, step: int
) -> int | None:
    """Minimal total timestamp-modification cost, by exhaustive enumeration.

    Considers every injective assignment of trace events to pattern
    positions combined with every per-event shift of at most
    ``uncertainty`` in multiples of ``step``; ordering and time constraints
    are evaluated on the shifted timestamps. None when no assignment
    costs at most ``k``.
    """
    if any(qe.operator is not Operator.SIMPLE for qe in query.pattern):
        raise ValueError("explanations are only defined for simple patterns")
    events = _window_events(trace, query.window)
    offsets = [m * step for m in range(-(uncertainty // step), uncertainty // step + 1)]
    slot_types = [qe.event_type for qe in query.pattern]
    candidates = []
    total = 1
    for etype in slot_types:
        cand = [ev for ev in events if ev.event_type == etype]
        total *= max(1, len(cand) * len(offsets))
        candidates.append(cand)
    if total > MAX_EXPLAIN_ASSIGNMENTS:
        raise OracleBudgetError(f"{total} assignments exceed the exhaustive budget")

    best: int | None = None

    def rec(slot: int, prev_ts: int | None, used: set[int], cost: int):
        nonlocal best
        if cost > k or (best is not None and cost > best):
            return
        if slot == len(slot_types):
            ev_list = [c for c in chosen]
            for c in query.constraints:
                ev_a, ts_a = ev_list[c.i - 1]
                ev_b, ts_b = ev_list[c.j - 1]
                diff = (ts_b - ts_a) if c.kind == "time" else (ev_b.pos - ev_a.pos)
                if c.mode == "within" and diff > c.value:
                    return
                if c.mode == "atleast" and diff < c.value:
                    return
            if best is None or cost < best:
                best = cost
            return
        for ev in candidates[slot]:
            if ev.pos in used:
                continue
            for off in offsets:
                ts = ev.ts + off
                if prev_ts is not None and ts <= prev_ts:
                    continue
                chosen.append((ev, ts))
                used.add(ev.pos)
                rec(slot + 1, ts, used, cost + abs(off))
                used.discard(ev.pos)
                chosen.pop()

    chosen: list[tuple[Event, int]] = []
    rec(0, None, set(), 0)
    return best
