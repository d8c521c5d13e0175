import random

from logsieve import (
    Constraint,
    Operator,
    Query,
    QueryEvent,
    TypePair,
    assemble_streams,
    compute_pair_sets,
    expand_or,
    prune,
    stats_query,
)
from logsieve import oracle
from logsieve.query import parse_pattern, parse_query_json

from helpers import build_store, random_log, random_query

MIN = 60_000


def _q(*types, **kwargs):
    return Query("main", tuple(QueryEvent(t) for t in types), **kwargs)


# --- expand_or ---------------------------------------------------------------


def test_expand_without_or_is_identity():
    pattern = parse_pattern("A;C")
    assert expand_or(pattern) == [pattern]


def test_expand_single_or_position():
    pattern = (QueryEvent("A", Operator.OR, ("B",)), QueryEvent("C"))
    alts = expand_or(pattern)
    assert [[qe.event_type for qe in alt] for alt in alts] == [["A", "C"], ["B", "C"]]
    assert all(qe.operator is Operator.SIMPLE for alt in alts for qe in alt)


def test_expand_two_or_positions_multiply():
    pattern = (
        QueryEvent("A", Operator.OR, ("B",)),
        QueryEvent("C", Operator.OR, ("D",)),
    )
    assert len(expand_or(pattern)) == 4


# --- compute_pair_sets -------------------------------------------------------


def test_pair_sets_with_negation_kleene_and_constraint():
    pattern = parse_pattern("A;!B;C;D+")
    constraints = (Constraint("time", "within", 5000, 1, 3),)
    ps = compute_pair_sets(pattern, constraints)
    assert ps.true_pairs == {TypePair("A", "C"), TypePair("C", "D")}
    assert ps.all_pairs == ps.true_pairs | {
        TypePair("B", "B"),
        TypePair("D", "D"),
        TypePair("A", "A"),
    }


def test_pair_sets_simple_two_event_pattern():
    ps = compute_pair_sets(parse_pattern("A;B"))
    assert ps.true_pairs == ps.all_pairs == {TypePair("A", "B")}


def test_pair_sets_or_empties_intersection():
    pattern = (QueryEvent("A", Operator.OR, ("B",)), QueryEvent("C"))
    ps = compute_pair_sets(pattern)
    assert ps.true_pairs == frozenset()
    assert ps.all_pairs == {TypePair("A", "C"), TypePair("B", "C")}


def test_pair_sets_atleast_constraint_adds_second_endpoint():
    ps = compute_pair_sets(parse_pattern("A;B"), (Constraint("time", "atleast", 5, 1, 2),))
    assert TypePair("B", "B") in ps.all_pairs


# --- prune -------------------------------------------------------------------

_TWO_USER_LOG = [
    # one user never reaches C; the other runs A,B,C
    ("t1", "A", 1_000), ("t1", "B", 2_000), ("t1", "A", 3_000), ("t1", "B", 4_000),
    ("t2", "A", 1_500), ("t2", "B", 2_500), ("t2", "C", 3_500),
]


def test_prune_keeps_only_trace_in_every_list(tmp_path):
    store = build_store(tmp_path, _TWO_USER_LOG)
    ps = compute_pair_sets(parse_pattern("A;B;C"))
    assert prune(store, ps) == ["t2"]


def test_prune_with_unseen_pair_is_empty(tmp_path):
    store = build_store(tmp_path, _TWO_USER_LOG)
    ps = compute_pair_sets(parse_pattern("A;Z"))
    assert prune(store, ps) == []


def test_prune_or_fallback_is_superset_of_true_matches(tmp_path):
    rng = random.Random(7)
    traces, rows = random_log(rng, 12, 10, list("ABCD"))
    store = build_store(tmp_path, rows)
    pattern = (QueryEvent("A", Operator.OR, ("B",)), QueryEvent("C"))
    query = Query("main", pattern)
    ps = compute_pair_sets(pattern)
    candidates = set(prune(store, ps))
    truth = oracle.brute_force_detect(traces, query, ids_only=True).matching_trace_ids
    assert truth <= candidates


# --- assemble_streams --------------------------------------------------------


def test_streams_include_both_first_events_for_constraint(tmp_path):
    rows = [
        ("w", "A", 0), ("w", "A", 270 * MIN), ("w", "B", 300 * MIN), ("w", "C", 310 * MIN),
    ]
    store = build_store(tmp_path, rows)
    query = _q("A", "B", "C", constraints=(Constraint("time", "within", 60 * MIN, 1, 2),))
    ps = compute_pair_sets(query.pattern, query.constraints)
    (stream,) = assemble_streams(store, prune(store, ps), ps, query)
    assert [(ev.event_type, ev.ts) for ev in stream.events] == [
        ("A", 0), ("A", 270 * MIN), ("B", 300 * MIN), ("C", 310 * MIN),
    ]


def test_stream_is_restricted_to_fetched_pairs(tmp_path):
    rows = [("t1", "A", 1), ("t1", "B", 2), ("t1", "X", 3), ("t1", "C", 4)]
    store = build_store(tmp_path, rows)
    query = _q("A", "B", "C")
    ps = compute_pair_sets(query.pattern)
    (stream,) = assemble_streams(store, ["t1"], ps, query)
    assert [ev.event_type for ev in stream.events] == ["A", "B", "C"]


def test_group_stream_merges_member_traces(tmp_path):
    rows = [("1", "A", 1), ("2", "B", 2)]
    store = build_store(tmp_path, rows)
    query = parse_query_json({"from": "main", "pattern": ["A", "B"], "groups": [["1-2"]]})
    ps = compute_pair_sets(query.pattern)
    (stream,) = assemble_streams(store, [], ps, query)
    assert stream.trace_id == "group:1,2"
    assert [(ev.event_type, ev.ts) for ev in stream.events] == [("A", 1), ("B", 2)]


def test_pos_mode_with_time_constraint_materializes_sequences(tmp_path):
    rows = [("t1", "A", 1000), ("t1", "B", 2000)]
    store = build_store(tmp_path, rows, mode="pos")
    query = _q("A", "B", constraints=(Constraint("time", "within", 5000, 1, 2),))
    ps = compute_pair_sets(query.pattern, query.constraints)
    (stream,) = assemble_streams(store, ["t1"], ps, query)
    assert stream.has_ts and stream.has_pos
    assert [(ev.ts, ev.pos) for ev in stream.events] == [(1000, 1), (2000, 2)]


def test_pos_mode_plain_query_streams_carry_positions(tmp_path):
    rows = [("t1", "A", 1000), ("t1", "B", 2000)]
    store = build_store(tmp_path, rows, mode="pos")
    query = _q("A", "B")
    ps = compute_pair_sets(query.pattern)
    (stream,) = assemble_streams(store, ["t1"], ps, query)
    assert not stream.key_is_ts and stream.has_pos
    assert [ev.pos for ev in stream.events] == [1, 2]


# --- stats_query -------------------------------------------------------------


def test_stats_cover_consecutive_pairs(tmp_path):
    store = build_store(tmp_path, _TWO_USER_LOG)
    rows = stats_query(store, ["A", "B", "C"])
    assert [r["pair"] for r in rows] == [["A", "B"], ["B", "C"]]
    assert all(r["seen"] for r in rows)


def test_stats_mean_is_sum_over_total(tmp_path):
    rows = [("t1", "A", 0), ("t1", "B", 10), ("t2", "A", 0), ("t2", "B", 30)]
    store = build_store(tmp_path, rows)
    (stat,) = stats_query(store, ["A", "B"])
    assert stat["total_completions"] == 2
    assert stat["sum_durations"] == 40
    assert stat["mean_duration"] == 20.0


def test_stats_single_event_pattern_empty(tmp_path):
    store = build_store(tmp_path, _TWO_USER_LOG)
    assert stats_query(store, ["A"]) == []


def test_stats_unseen_pair_flagged(tmp_path):
    store = build_store(tmp_path, _TWO_USER_LOG)
    (stat,) = stats_query(store, ["C", "A"])
    assert stat["seen"] is False and stat["total_completions"] == 0
