"""Throwaway randomized comparison: full pipeline vs brute-force oracle."""

import random
import shutil
import sys
import tempfile

from logsieve import (
    Constraint,
    IngestBatch,
    Operator,
    Query,
    QueryEvent,
    StoreConfig,
    ingest,
    open_store,
    run_query,
)
from logsieve.model import make_trace
from logsieve import oracle


def random_log(rng, n_traces, max_events, alphabet):
    traces = []
    rows = []
    for t in range(n_traces):
        tid = str(t + 1)
        n = rng.randint(1, max_events)
        ts = rng.randint(0, 50)
        typed = []
        for _ in range(n):
            typed.append((rng.choice(alphabet), ts))
            ts += rng.randint(1, 40)
        traces.append(make_trace(tid, typed))
        rows.extend((tid, et, tts) for et, tts in typed)
    return traces, rows


def random_query(rng, alphabet):
    n = rng.randint(1, 5)
    pattern = []
    for i in range(n):
        roll = rng.random()
        t = rng.choice(alphabet)
        if roll < 0.55 or n == 1:
            pattern.append(QueryEvent(t))
        elif roll < 0.67:
            pattern.append(QueryEvent(t, Operator.KLEENE_PLUS))
        elif roll < 0.77:
            pattern.append(QueryEvent(t, Operator.KLEENE_STAR))
        elif roll < 0.89 and 0 < i < n - 1:
            pattern.append(QueryEvent(t, Operator.NEGATION))
        else:
            alts = rng.sample(alphabet, rng.randint(2, min(3, len(alphabet))))
            pattern.append(QueryEvent(alts[0], Operator.OR, tuple(alts[1:])))
    # ensure at least one required event
    if not any(qe.operator in (Operator.SIMPLE, Operator.KLEENE_PLUS, Operator.OR) for qe in pattern):
        pattern[0] = QueryEvent(pattern[0].event_type)
    if pattern[0].operator is Operator.NEGATION:
        pattern[0] = QueryEvent(pattern[0].event_type)
    if pattern[-1].operator is Operator.NEGATION:
        pattern[-1] = QueryEvent(pattern[-1].event_type)

    constraints = []
    if len(pattern) >= 2 and rng.random() < 0.45:
        for _ in range(rng.randint(1, 2)):
            i, j = sorted(rng.sample(range(1, len(pattern) + 1), 2))
            if (
                pattern[i - 1].operator is Operator.NEGATION
                or pattern[j - 1].operator is Operator.NEGATION
            ):
                continue
            kind = rng.choice(["time", "gap"])
            mode = rng.choice(["within", "atleast"])
            value = rng.randint(1, 120) if kind == "time" else rng.randint(1, 6)
            constraints.append(Constraint(kind, mode, value, i, j))
    window = None
    if rng.random() < 0.25:
        a = rng.randint(0, 300)
        window = (a, a + rng.randint(50, 500))
    return Query(
        "main",
        tuple(pattern),
        constraints=tuple(constraints),
        window=window,
        return_all=rng.random() < 0.3,
    )


def main():
    seed0 = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    n_logs = int(sys.argv[2]) if len(sys.argv) > 2 else 30
    n_queries = int(sys.argv[3]) if len(sys.argv) > 3 else 40
    alphabet = list("ABCDEF")
    failures = 0
    for log_i in range(n_logs):
        rng = random.Random(seed0 + log_i)
        traces, rows = random_log(rng, rng.randint(3, 15), 12, alphabet[: rng.randint(2, 6)])
        root = tempfile.mkdtemp()
        mode = "pos" if log_i % 2 else "ts"
        store = open_store(root, "main", StoreConfig(log_name="main", mode=mode, lookback=3650))
        ingest(store, IngestBatch.from_rows(rows))
        for q_i in range(n_queries):
            query = random_query(rng, alphabet)
            res = run_query(store, query)
            ora = oracle.brute_force_detect(traces, query, ids_only=True)
            got = set(res.matches)
            want = set(ora.matching_trace_ids)
            if got != want:
                failures += 1
                print(f"MISMATCH log={log_i} mode={mode} q={q_i}")
                print("  query:", query.to_json())
                print("  got:", sorted(got), "want:", sorted(want))
                for tid in got ^ want:
                    tr = next(t for t in traces if t.trace_id == tid)
                    print(f"  trace {tid}:", [(e.event_type, e.ts) for e in tr.events])
                if failures > 4:
                    sys.exit(1)
            # re-validate occurrences
            for tid, occs in res.occurrences.items():
                tr = next(t for t in traces if t.trace_id == tid)
                for occ in occs:
                    if not oracle.validate_occurrence(tr, query, occ):
                        failures += 1
                        print(f"BAD OCCURRENCE log={log_i} q={q_i} trace={tid}")
                        print("  query:", query.to_json())
                        print("  occ:", [[(e.event_type, e.ts) for e in b] for b in occ.matches])
                        print("  trace:", [(e.event_type, e.ts) for e in tr.events])
                        if failures > 4:
                            sys.exit(1)
        shutil.rmtree(root)
    print("fuzz done, failures:", failures)
    sys.exit(1 if failures else 0)


if __name__ == "__main__":
    main()
