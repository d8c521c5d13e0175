"""Throwaway experiment: is pair-based event retrieval complete for validation?

For every trace over {A,B,C} up to length 7, compare exhaustive match
existence on the full trace vs on the reduced stream built from the pair
index (consecutive pairs + the (a,a) additions for constraints/Kleene+).
"""

import itertools

from logsieve import Constraint, Operator, Query, QueryEvent, TypePair, make_trace
from logsieve.indexer import extract_pairs_for_trace
from logsieve.model import Trace
from logsieve import oracle

ALPHA = "ABC"


def reduced_stream(trace, fetch_pairs, single_types=()):
    pairs = extract_pairs_for_trace(trace)
    keep_ts = set()
    for et, ep in pairs:
        if et in fetch_pairs:
            keep_ts.add(ep.first_ts)
            keep_ts.add(ep.second_ts)
    events = [
        ev for ev in trace.events if ev.ts in keep_ts or ev.event_type in single_types
    ]
    return Trace(trace_id=trace.trace_id, events=tuple(events))


def exists(trace, query):
    return next(iter(oracle._find_matches(trace, query)), None) is not None


def fetch_set_for(query):
    # consecutive pairs of positives (keeping kleene+), plus (a,a) additions
    fetch = set()
    positives = [qe for qe in query.pattern if qe.operator not in (Operator.NEGATION, Operator.KLEENE_STAR)]
    for a, b in zip(positives, positives[1:]):
        fetch.add(TypePair(a.event_type, b.event_type))
    for qe in query.pattern:
        if qe.operator is Operator.KLEENE_PLUS:
            fetch.add(TypePair(qe.event_type, qe.event_type))
    for c in query.constraints:
        t = query.pattern[(c.i if c.mode == "within" else c.j) - 1].event_type
        fetch.add(TypePair(t, t))
    return fetch


def all_traces(max_len):
    tid = 0
    for n in range(1, max_len + 1):
        for combo in itertools.product(ALPHA, repeat=n):
            tid += 1
            yield make_trace(str(tid), [(t, i + 1) for i, t in enumerate(combo)])


def run_case(name, queries, max_len=7):
    bad = 0
    checked = 0
    for trace in all_traces(max_len):
        for query in queries:
            full = exists(trace, query)
            if not full:
                continue  # pruning soundness is about positives surviving
            checked += 1
            stream = reduced_stream(trace, fetch_set_for(query))
            if not exists(stream, query):
                bad += 1
                if bad <= 5:
                    print(f"  MISS {name}: trace={[ (e.event_type, e.ts) for e in trace.events ]} "
                          f"query={[qe.event_type + qe.operator.value for qe in query.pattern]} "
                          f"constraints={query.constraints}")
    print(f"{name}: {checked} matching cases, {bad} misses")
    return bad


def main():
    simple3 = [
        Query("m", tuple(QueryEvent(t) for t in combo))
        for combo in itertools.product(ALPHA, repeat=3)
    ]
    simple4 = [
        Query("m", tuple(QueryEvent(t) for t in combo))
        for combo in itertools.product(ALPHA, repeat=4)
    ]
    within = [
        Query("m", tuple(QueryEvent(t) for t in combo),
              constraints=(Constraint("time", "within", v, i, j),))
        for combo in itertools.product(ALPHA, repeat=3)
        for (v, i, j) in [(1, 1, 2), (2, 1, 3), (3, 2, 3), (1, 2, 3)]
    ]
    atleast = [
        Query("m", tuple(QueryEvent(t) for t in combo),
              constraints=(Constraint("time", "atleast", v, i, j),))
        for combo in itertools.product(ALPHA, repeat=3)
        for (v, i, j) in [(2, 1, 2), (3, 1, 3), (2, 2, 3)]
    ]
    kleene = []
    for combo in itertools.product(ALPHA, repeat=3):
        for kpos in range(3):
            pat = tuple(
                QueryEvent(t, Operator.KLEENE_PLUS if i == kpos else Operator.SIMPLE)
                for i, t in enumerate(combo)
            )
            kleene.append(Query("m", pat))

    total = 0
    total += run_case("simple length-3", simple3, max_len=6)
    total += run_case("simple length-4", simple4, max_len=6)
    total += run_case("within", within, max_len=6)
    total += run_case("atleast", atleast, max_len=6)
    total += run_case("kleene+", kleene, max_len=6)
    print("TOTAL misses:", total)


if __name__ == "__main__":
    main()
