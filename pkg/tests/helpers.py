"""Shared generators and store-building helpers for the test suite."""

from __future__ import annotations

import random

from logsieve import (
    Constraint,
    IngestBatch,
    Operator,
    Query,
    QueryEvent,
    Store,
    StoreConfig,
    ingest,
    open_store,
)
from logsieve.model import Trace, make_trace

ALPHABET = list("ABCDEF")


def random_log(
    rng: random.Random,
    n_traces: int,
    max_events: int,
    alphabet: list[str],
    start_spread: int = 50,
) -> tuple[list[Trace], list[tuple[str, str, int]]]:
    """Random traces plus the flat ingest rows for them."""
    traces = []
    rows = []
    for t in range(n_traces):
        tid = str(t + 1)
        n = rng.randint(1, max_events)
        ts = rng.randint(0, start_spread)
        typed = []
        for _ in range(n):
            typed.append((rng.choice(alphabet), ts))
            ts += rng.randint(1, 40)
        traces.append(make_trace(tid, typed))
        rows.extend((tid, et, tts) for et, tts in typed)
    return traces, rows


def random_query(rng: random.Random, alphabet: list[str], max_len: int = 5) -> Query:
    """Random pattern over every operator, sometimes with constraints/window."""
    n = rng.randint(1, max_len)
    pattern: list[QueryEvent] = []
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
    if not any(
        qe.operator in (Operator.SIMPLE, Operator.KLEENE_PLUS, Operator.OR) for qe in pattern
    ):
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


def build_store(
    tmp_path,
    rows,
    log_name: str = "main",
    mode: str = "ts",
    lookback: int = 3650,
    **config_kwargs,
) -> Store:
    """Create a store under tmp_path and ingest one batch of rows."""
    config = StoreConfig(log_name=log_name, mode=mode, lookback=lookback, **config_kwargs)
    store = open_store(tmp_path, log_name, config)
    if rows:
        ingest(store, IngestBatch.from_rows(rows))
    return store
