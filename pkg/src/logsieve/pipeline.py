"""End-to-end query execution: prune, validate, and optionally explain.

Reports a per-phase timing split (index fetch + pruning + stream assembly
vs. validation) so the cost profile of a query is always visible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .engine import MatchPolicy, compile_pattern, match_stream
from .explainer import Explanation, explain
from .model import Occurrence
from .planner import CandidateStream, assemble_streams, compute_pair_sets, prune
from .query import Query
from .storage import Store


@dataclass(frozen=True)
class QueryTimings:
    fetch_prune_ms: float
    validation_ms: float
    explain_ms: float
    total_ms: float

    def to_json(self) -> dict:
        return {
            "fetch_prune_ms": round(self.fetch_prune_ms, 3),
            "validation_ms": round(self.validation_ms, 3),
            "explain_ms": round(self.explain_ms, 3),
            "total_ms": round(self.total_ms, 3),
        }


@dataclass(frozen=True)
class QueryResult:
    query: Query
    matches: tuple[str, ...]
    occurrences: dict[str, list[Occurrence]]
    explanations: tuple[Explanation, ...]
    candidates: int
    candidate_ids: tuple[str, ...]
    timings: QueryTimings

    def to_json(self) -> dict:
        return {
            "from": self.query.log_name,
            "matches": list(self.matches),
            "occurrences": {
                tid: [
                    [
                        [
                            {"type": ev.event_type, "ts": ev.ts, "pos": ev.pos}
                            for ev in bundle
                        ]
                        for bundle in occ.matches
                    ]
                    for occ in occs
                ]
                for tid, occs in self.occurrences.items()
            },
            "explanations": [e.to_json() for e in self.explanations],
            "candidates": self.candidates,
            "timings": self.timings.to_json(),
        }


def run_query(store: Store, query: Query) -> QueryResult:
    """Execute one pattern-detection query against an open store."""
    t0 = time.perf_counter()
    pair_sets = compute_pair_sets(query.pattern, query.constraints)
    if query.groups is not None:
        candidates: list[str] = []
        streams = assemble_streams(store, candidates, pair_sets, query)
    else:
        candidates = prune(store, pair_sets, query.window)
        streams = assemble_streams(store, candidates, pair_sets, query)
    t1 = time.perf_counter()

    cp = compile_pattern(query.pattern, query.constraints)
    policy = MatchPolicy("stnm_consume", return_all=query.return_all)
    occurrences: dict[str, list[Occurrence]] = {}
    for stream in streams:
        occs = match_stream(cp, stream, policy)
        if occs:
            occurrences[stream.trace_id] = occs
    _restore_event_fields(store, occurrences)
    matches = tuple(sorted(occurrences))
    t2 = time.perf_counter()

    explanations: tuple[Explanation, ...] = ()
    if query.explain is not None:
        explanations = tuple(_explain_non_answers(store, query, cp, set(matches)))
    t3 = time.perf_counter()

    return QueryResult(
        query=query,
        matches=matches,
        occurrences=occurrences,
        explanations=explanations,
        candidates=len(streams),
        candidate_ids=tuple(candidates),
        timings=QueryTimings(
            fetch_prune_ms=(t1 - t0) * 1000,
            validation_ms=(t2 - t1) * 1000,
            explain_ms=(t3 - t2) * 1000,
            total_ms=(t3 - t0) * 1000,
        ),
    )


def _restore_event_fields(store: Store, occurrences: dict[str, list[Occurrence]]) -> None:
    """Fill in ts/pos placeholders on matched events from the stored traces.

    Streams built straight from the pair index carry only one of the two
    fields; results always report both. Group streams and materialized
    streams are already complete.
    """
    needy = {
        tid
        for tid, occs in occurrences.items()
        for occ in occs
        for ev in occ.all_events()
        if ev.pos == 0 or ev.ts == 0
    }
    if not needy:
        return
    traces = store.read_sequences(needy)
    for tid in needy:
        trace = traces.get(tid)
        if trace is None:
            continue
        by_ts = {ev.ts: ev for ev in trace.events}
        by_pos = {ev.pos: ev for ev in trace.events}
        fixed_occs = []
        for occ in occurrences[tid]:
            fixed_occs.append(
                Occurrence(
                    trace_id=occ.trace_id,
                    matches=tuple(
                        tuple(
                            (by_pos.get(ev.pos) if ev.ts == 0 else by_ts.get(ev.ts)) or ev
                            for ev in bundle
                        )
                        for bundle in occ.matches
                    ),
                    modification_cost=occ.modification_cost,
                )
            )
        occurrences[tid] = fixed_occs


def _explain_non_answers(store: Store, query: Query, cp, matched: set[str]):
    """Explain traces that hold every pattern type yet did not match."""
    assert query.explain is not None
    wanted = query.all_types()
    target_ids: set[str] | None = None
    for etype in sorted(wanted):
        ids = {tid for tid, _ts, _pos in store.read_singles(etype, query.window)}
        target_ids = ids if target_ids is None else target_ids & ids
        if not target_ids:
            return
    traces = store.read_sequences(sorted((target_ids or set()) - matched))
    for tid in sorted(traces):
        events = tuple(
            ev
            for ev in traces[tid].events
            if ev.event_type in wanted
            and (query.window is None or query.window[0] <= ev.ts <= query.window[1])
        )
        stream = CandidateStream(tid, events)
        result = explain(
            stream, cp, query.explain.k, query.explain.uncertainty, query.explain.step
        )
        if result is not None:
            yield result
