"""Query planning: pair-set computation, trace pruning, stream assembly.

Planning derives two sets of type pairs from a query. The true pairs must
all be present in a trace for it to stay a candidate; the full set is what
gets fetched from the pair index so validation sees every event it may
need. Alternatives introduced by OR events are planned separately and a
trace survives pruning when it can serve at least one alternative. Negated
and Kleene-star types are additionally fetched from the per-type index,
because a trace holding exactly one such event has no same-type pair to
retrieve it through.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from .model import Constraint, Event, Operator, QueryEvent, TypePair
from .query import Query
from .storage import Store

_REMOVED_OPS = (Operator.NEGATION, Operator.KLEENE_STAR)


@dataclass(frozen=True)
class AltPlan:
    """One OR-expanded alternative: its required pairs and retained types."""

    pattern: tuple[QueryEvent, ...]
    pairs: frozenset[TypePair]
    retained_types: tuple[str, ...]


@dataclass(frozen=True)
class PairSets:
    true_pairs: frozenset[TypePair]
    all_pairs: frozenset[TypePair]
    alternatives: tuple[AltPlan, ...]
    single_fetch_types: frozenset[str]


@dataclass(frozen=True)
class CandidateStream:
    """Per-trace (or per-group) event stream handed to validation.

    ``key_is_ts`` selects the ordering key; ``has_ts``/``has_pos`` say which
    event fields carry real values rather than placeholders.
    """

    trace_id: str
    events: tuple[Event, ...]
    key_is_ts: bool = True
    has_ts: bool = True
    has_pos: bool = True


def expand_or(pattern: tuple[QueryEvent, ...]) -> list[tuple[QueryEvent, ...]]:
    """Cartesian expansion of OR events; no OR operators remain."""
    choices = []
    for qe in pattern:
        if qe.operator is Operator.OR:
            choices.append([QueryEvent(t, Operator.SIMPLE) for t in qe.type_choices()])
        else:
            choices.append([qe])
    return [tuple(combo) for combo in product(*choices)]


def compute_pair_sets(
    pattern: tuple[QueryEvent, ...], constraints: tuple[Constraint, ...] = ()
) -> PairSets:
    """Derive the true and fetched pair sets for a pattern plus constraints.

    Per alternative: negated and star events contribute a same-type pair to
    the fetch set and drop out; consecutive pairs of the remainder form the
    alternative's required set; Kleene-plus events and constraint endpoints
    (the earlier one for within, the later one for atleast) add further
    same-type fetch pairs. The true set is the intersection across
    alternatives.
    """
    alternatives: list[AltPlan] = []
    extra: set[TypePair] = set()
    single_fetch = {qe.event_type for qe in pattern if qe.operator in _REMOVED_OPS}
    for alt in expand_or(pattern):
        retained: list[QueryEvent] = []
        for qe in alt:
            if qe.operator in _REMOVED_OPS:
                extra.add(TypePair(qe.event_type, qe.event_type))
                if qe.operator is Operator.NEGATION and retained:
                    # a guard wants the latest possible left anchor, so every
                    # event of the left-adjacent type must be retrievable
                    left = retained[-1].event_type
                    extra.add(TypePair(left, left))
            else:
                retained.append(qe)
        if len(retained) == 1:
            # no pairs exist to carry these events; fetch the type directly
            single_fetch.add(retained[0].event_type)
        pairs = frozenset(
            TypePair(a.event_type, b.event_type) for a, b in zip(retained, retained[1:])
        )
        for qe in retained:
            if qe.operator is Operator.KLEENE_PLUS:
                extra.add(TypePair(qe.event_type, qe.event_type))
        for c in constraints:
            anchor = alt[(c.i if c.mode == "within" else c.j) - 1].event_type
            extra.add(TypePair(anchor, anchor))
        alternatives.append(
            AltPlan(
                pattern=alt,
                pairs=pairs,
                retained_types=tuple(qe.event_type for qe in retained),
            )
        )
    true_pairs = frozenset.intersection(*(a.pairs for a in alternatives))
    all_pairs = frozenset().union(*(a.pairs for a in alternatives), extra, true_pairs)
    return PairSets(
        true_pairs=true_pairs,
        all_pairs=all_pairs,
        alternatives=tuple(alternatives),
        single_fetch_types=frozenset(single_fetch),
    )


def _trace_ids_of(store: Store, et: TypePair, window) -> set[str]:
    return {p.trace_id for p in store.read_inverted_list(et, window)}


def prune(store: Store, pair_sets: PairSets, window: tuple[int, int] | None = None) -> list[str]:
    """Candidate trace ids that may contain the pattern.

    With a nonempty true set, a trace must appear in the inverted list of
    every true pair. When OR expansion empties the intersection, a trace
    qualifies by containing all required pairs of at least one alternative
    (a single-required-event alternative falls back to the per-type index).
    Never prunes a genuinely matching trace.
    """
    stats = store.read_pair_stats()
    if pair_sets.true_pairs:
        candidate: set[str] | None = None
        for et in sorted(pair_sets.true_pairs):
            if et not in stats:
                return []
            ids = _trace_ids_of(store, et, window)
            candidate = ids if candidate is None else candidate & ids
            if not candidate:
                return []
        return sorted(candidate or set())
    out: set[str] = set()
    for alt in pair_sets.alternatives:
        if len(alt.retained_types) == 1:
            out.update(t for t, _ts, _pos in store.read_singles(alt.retained_types[0], window))
            continue
        candidate = None
        viable = True
        for et in sorted(alt.pairs):
            if et not in stats:
                viable = False
                break
            ids = _trace_ids_of(store, et, window)
            candidate = ids if candidate is None else candidate & ids
            if not candidate:
                viable = False
                break
        if viable and candidate:
            out.update(candidate)
    return sorted(out)


def _group_label(group: tuple[str, ...]) -> str:
    return "group:" + ",".join(group)


def assemble_streams(
    store: Store,
    candidates: list[str],
    pair_sets: PairSets,
    query: Query,
) -> list[CandidateStream]:
    """Build the ts-ordered event stream per candidate trace (or group).

    Streams normally contain the endpoint events of every fetched pair plus
    the full per-type occurrences of negated and star types. The original
    traces are materialized instead when the index cannot supply a needed
    field: in pos mode for time constraints, a window, or an explanation
    request, and in ts mode for gap constraints. Group queries merge the
    member traces' events of the query's types into one stream per group.
    """
    if query.groups is not None:
        return _assemble_group_streams(store, pair_sets, query)

    mode = store.config.mode
    has_time = any(c.kind == "time" for c in query.constraints)
    has_gap = any(c.kind == "gap" for c in query.constraints)
    materialize = (
        mode == "pos" and (has_time or query.window is not None or query.explain is not None)
    ) or (mode == "ts" and has_gap)

    streams: list[CandidateStream] = []
    if materialize:
        wanted = query.all_types()
        traces = store.read_sequences(candidates)
        for tid in sorted(candidates):
            trace = traces.get(tid)
            if trace is None:
                raise RuntimeError(f"candidate trace {tid} missing from sequence table")
            events = tuple(
                ev
                for ev in trace.events
                if ev.event_type in wanted and _in_window(ev.ts, query.window)
            )
            streams.append(CandidateStream(tid, events))
        return streams

    candidate_set = set(candidates)
    ts_mode = mode == "ts"
    # event key -> type, per trace; singles also recover the missing field
    per_trace: dict[str, dict[int, tuple[str, int, int]]] = {t: {} for t in candidates}
    for et in sorted(pair_sets.all_pairs):
        for pair in store.read_inverted_list(et, query.window):
            bucket = per_trace.get(pair.trace_id)
            if bucket is None:
                continue
            if ts_mode:
                bucket.setdefault(pair.first_ts, (et.first, pair.first_ts, 0))
                bucket.setdefault(pair.second_ts, (et.second, pair.second_ts, 0))
            else:
                bucket.setdefault(pair.first_pos, (et.first, 0, pair.first_pos))
                bucket.setdefault(pair.second_pos, (et.second, 0, pair.second_pos))
    single_types = set(pair_sets.single_fetch_types)
    if query.window is not None:
        # pair shadowing is computed over the whole log, so an in-window
        # event can hide behind an out-of-window pair; fetch types directly
        single_types |= query.all_types()
    for etype in sorted(single_types):
        for tid, ts, pos in store.read_singles(etype, query.window):
            bucket = per_trace.get(tid)
            if bucket is None:
                continue
            bucket[ts if ts_mode else pos] = (etype, ts, pos)
    for tid in sorted(candidate_set):
        rows = per_trace[tid]
        events = tuple(
            Event(trace_id=tid, event_type=row[0], ts=row[1], pos=row[2])
            for key, row in sorted(rows.items())
            if not ts_mode or _in_window(row[1], query.window)
        )
        streams.append(
            CandidateStream(
                tid,
                events,
                key_is_ts=ts_mode,
                has_ts=ts_mode,
                has_pos=not ts_mode,
            )
        )
    return streams


def _assemble_group_streams(store: Store, pair_sets: PairSets, query: Query) -> list[CandidateStream]:
    # groups merge events across traces, so pair lists (per-trace) cannot
    # feed them; the per-type index carries both ts and pos for every event
    wanted = sorted(query.all_types())
    by_type: dict[str, list[tuple[str, int, int]]] = {
        t: store.read_singles(t, query.window) for t in wanted
    }
    required_sets = [set(alt.retained_types) for alt in pair_sets.alternatives]
    streams = []
    for group in query.groups or ():
        members = set(group)
        rows = []
        types_present = set()
        for etype, occurrences in by_type.items():
            for tid, ts, pos in occurrences:
                if tid in members:
                    rows.append((ts, tid, pos, etype))
                    types_present.add(etype)
        if not any(req <= types_present for req in required_sets):
            continue
        events = tuple(
            Event(trace_id=tid, event_type=etype, ts=ts, pos=pos)
            for ts, tid, pos, etype in sorted(rows)
        )
        streams.append(CandidateStream(_group_label(group), events))
    return streams


def _in_window(ts: int, window: tuple[int, int] | None) -> bool:
    return window is None or window[0] <= ts <= window[1]


def stats_query(store: Store, pattern: list[str]) -> list[dict]:
    """Duration statistics for every consecutive type pair of a pattern."""
    stats = store.read_pair_stats()
    out = []
    for a, b in zip(pattern, pattern[1:]):
        rec = stats.get(TypePair(a, b))
        if rec is None:
            out.append(
                {
                    "pair": [a, b],
                    "seen": False,
                    "total_completions": 0,
                    "sum_durations": 0,
                    "min_duration": 0,
                    "max_duration": 0,
                    "mean_duration": 0.0,
                }
            )
        else:
            out.append(
                {
                    "pair": [a, b],
                    "seen": True,
                    "total_completions": rec.total_completions,
                    "sum_durations": rec.sum_durations,
                    "min_duration": rec.min_duration,
                    "max_duration": rec.max_duration,
                    "mean_duration": rec.mean_duration,
                }
            )
    return out
