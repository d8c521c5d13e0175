"""Non-answer explanation: query consistency checks and data explanation.

A query can fail for reasons visible in store metadata alone: a type never
indexed, a required pair that never occurred, or a constraint outside the
recorded duration range of its pair. Those are reported before execution.

For traces that hold the right events in the wrong order, the data
explanation searches per-event timestamp shifts (up to ``uncertainty``,
discretized by ``step``) for the cheapest modification under which the
pattern would match; partial matches are abandoned as soon as their
accumulated cost exceeds the budget ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import CompiledPattern
from .model import Constraint, Event, TypePair
from .planner import compute_pair_sets
from .query import Query, QueryError
from .storage import Store


@dataclass(frozen=True)
class ConsistencyReport:
    unknown_types: tuple[str, ...]
    missing_pairs: tuple[TypePair, ...]
    unsatisfiable_constraints: tuple[tuple[Constraint, tuple[int, int] | None], ...]

    @property
    def consistent(self) -> bool:
        return not (self.unknown_types or self.missing_pairs or self.unsatisfiable_constraints)

    def to_json(self) -> dict:
        return {
            "consistent": self.consistent,
            "unknown_types": list(self.unknown_types),
            "missing_pairs": [[et.first, et.second] for et in self.missing_pairs],
            "unsatisfiable_constraints": [
                {
                    "constraint": {
                        "kind": c.kind,
                        "mode": c.mode,
                        "value": c.value,
                        "i": c.i,
                        "j": c.j,
                    },
                    "observed_duration_range": list(observed) if observed else None,
                }
                for c, observed in self.unsatisfiable_constraints
            ],
        }


@dataclass(frozen=True)
class ModifiedEvent:
    original: Event
    modified_ts: int

    @property
    def delta(self) -> int:
        return abs(self.modified_ts - self.original.ts)


@dataclass(frozen=True)
class Explanation:
    trace_id: str
    events: tuple[ModifiedEvent, ...]  # one per pattern position
    cost: int

    def to_json(self) -> dict:
        return {
            "trace_id": self.trace_id,
            "cost": self.cost,
            "events": [
                {
                    "type": me.original.event_type,
                    "original_ts": me.original.ts,
                    "modified_ts": me.modified_ts,
                }
                for me in self.events
            ],
        }


def check_consistency(store: Store, query: Query) -> ConsistencyReport:
    """The three metadata checks; empty lists mean the query can proceed.

    Types are checked against the per-type index, required pairs against the
    statistics table, and each time constraint against the recorded
    duration range of its endpoint pair. Gap constraints have no recorded
    position statistics and are assumed satisfiable.
    """
    known_types = store.single_types()
    unknown = tuple(sorted(query.all_types() - known_types))

    pair_sets = compute_pair_sets(query.pattern, query.constraints)
    stats = store.read_pair_stats()
    missing = tuple(sorted(et for et in pair_sets.true_pairs if et not in stats))

    unsatisfiable = []
    for c in query.constraints:
        if c.kind != "time":
            continue
        verdicts = []
        for alt in pair_sets.alternatives:
            et = TypePair(alt.pattern[c.i - 1].event_type, alt.pattern[c.j - 1].event_type)
            rec = stats.get(et)
            if rec is None:
                verdicts.append((True, None))
            elif c.mode == "within" and c.value < rec.min_duration:
                verdicts.append((True, (rec.min_duration, rec.max_duration)))
            elif c.mode == "atleast" and c.value > rec.max_duration:
                verdicts.append((True, (rec.min_duration, rec.max_duration)))
            else:
                verdicts.append((False, None))
        if all(v for v, _ in verdicts):
            unsatisfiable.append((c, verdicts[0][1]))
    return ConsistencyReport(
        unknown_types=unknown,
        missing_pairs=missing,
        unsatisfiable_constraints=tuple(unsatisfiable),
    )


def generate_modified_stream(stream, uncertainty: int, step: int) -> list[ModifiedEvent]:
    """All per-event timestamp variants, merged and sorted by modified time.

    Every event expands to one variant per multiple of ``step`` within
    ``uncertainty`` on either side (2*uncertainty/step + 1 in total). Ties
    between variants of different events are broken by original stream
    order, then by smaller shift.
    """
    if uncertainty < 0:
        raise ValueError("uncertainty must be >= 0")
    if step < 1:
        raise ValueError("step must be >= 1")
    if uncertainty % step != 0:
        raise ValueError("uncertainty must be a multiple of step")
    events = list(getattr(stream, "events", stream))
    half = uncertainty // step
    variants = []
    for idx, ev in enumerate(events):
        for m in range(-half, half + 1):
            variants.append((ev.ts + m * step, idx, abs(m * step), ev))
    variants.sort(key=lambda v: (v[0], v[1], v[2]))
    return [ModifiedEvent(original=ev, modified_ts=ts) for ts, _idx, _d, ev in variants]


def explain(
    stream, cp: CompiledPattern, k: int, uncertainty: int, step: int
) -> Explanation | None:
    """Cheapest timestamp modification under which the stream matches.

    Searches variant assignments with skip-till-any-match freedom: one
    variant per pattern position, all from distinct original events,
    strictly increasing modified timestamps, constraints evaluated on the
    modified times. Partial assignments beyond the cost budget are pruned.
    Equal-cost solutions tie-break on the earliest modified-timestamp
    vector. None when no assignment fits the budget.
    """
    if not cp.is_simple:
        raise QueryError("explanations are only supported for simple patterns")
    if k < 0:
        raise ValueError("budget k must be >= 0")
    events = list(getattr(stream, "events", stream))
    variants = generate_modified_stream(events, uncertainty, step)
    slot_types = [next(iter(s.types)) for s in cp.states]
    by_type: dict[str, list[ModifiedEvent]] = {}
    for me in variants:
        by_type.setdefault(me.original.event_type, []).append(me)

    best: tuple[int, tuple[int, ...], tuple[ModifiedEvent, ...]] | None = None
    chosen: list[ModifiedEvent] = []
    used: set[int] = set()
    cons_at = {slot: [cc for cc in cp.constraints if cc.sj == slot] for slot in range(len(slot_types))}

    def slot_constraints_ok(slot: int, me: ModifiedEvent) -> bool:
        for cc in cons_at[slot]:
            a = chosen[cc.si]
            diff = (
                (me.modified_ts - a.modified_ts)
                if cc.kind == "time"
                else (me.original.pos - a.original.pos)
            )
            if cc.mode == "within" and diff > cc.value:
                return False
            if cc.mode == "atleast" and diff < cc.value:
                return False
        return True

    def rec(slot: int, prev_ts: int | None, cost: int) -> None:
        nonlocal best
        if cost > k or (best is not None and cost > best[0]):
            return
        if slot == len(slot_types):
            key = tuple(me.modified_ts for me in chosen)
            if best is None or (cost, key) < (best[0], best[1]):
                best = (cost, key, tuple(chosen))
            return
        for me in by_type.get(slot_types[slot], ()):
            if me.original.ts in used:
                continue
            if prev_ts is not None and me.modified_ts <= prev_ts:
                continue
            if not slot_constraints_ok(slot, me):
                continue
            chosen.append(me)
            used.add(me.original.ts)
            rec(slot + 1, me.modified_ts, cost + me.delta)
            used.discard(me.original.ts)
            chosen.pop()

    rec(0, None, 0)
    if best is None:
        return None
    trace_id = best[2][0].original.trace_id if best[2] else ""
    return Explanation(trace_id=trace_id, events=best[2], cost=best[0])
