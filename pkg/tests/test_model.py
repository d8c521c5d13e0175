from hypothesis import given
from hypothesis import strategies as st
import pytest

from logsieve import EventPair, pairs_overlap, validate_trace
from logsieve.model import make_trace


def test_validate_sorted_trace_ok():
    assert validate_trace(make_trace("t", [("A", 1), ("B", 2), ("C", 3)])) is None


def test_validate_duplicate_timestamp_names_position():
    problem = validate_trace(make_trace("t", [("A", 5), ("B", 5)]))
    assert problem is not None and "pos 2" in problem and "duplicate" in problem


def test_validate_out_of_order_names_position():
    problem = validate_trace(make_trace("t", [("A", 9), ("B", 4)]))
    assert problem is not None and "pos 2" in problem


def test_validate_bad_position_field():
    trace = make_trace("t", [("A", 1), ("B", 2)])
    broken = trace.events[0], trace.events[1].__class__(
        trace_id="t", event_type="B", ts=2, pos=5
    )
    assert validate_trace(trace.__class__("t", broken)) is not None


def _pair(first_pos, second_pos, trace="t"):
    return EventPair(trace_id=trace, first_pos=first_pos, second_pos=second_pos)


def test_disjoint_pairs_do_not_overlap():
    assert pairs_overlap(_pair(1, 2), _pair(3, 4)) is False


def test_contained_pairs_overlap():
    assert pairs_overlap(_pair(2, 5), _pair(4, 5)) is True


def test_shared_boundary_counts_as_overlap():
    assert pairs_overlap(_pair(1, 3), _pair(3, 6)) is True


def test_pairs_overlap_rejects_mixed_traces():
    with pytest.raises(ValueError):
        pairs_overlap(_pair(1, 2, "a"), _pair(1, 2, "b"))


@given(
    st.tuples(st.integers(1, 20), st.integers(1, 20)).map(sorted),
    st.tuples(st.integers(1, 20), st.integers(1, 20)).map(sorted),
)
def test_pairs_overlap_is_symmetric(span1, span2):
    p1 = _pair(span1[0], span1[1])
    p2 = _pair(span2[0], span2[1])
    assert pairs_overlap(p1, p2) == pairs_overlap(p2, p1)


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=15, unique=True))
def test_valid_trace_prefixes_also_validate(ts_values):
    trace = make_trace("t", [("A", ts) for ts in sorted(ts_values)])
    assert validate_trace(trace) is None
    for cut in range(1, len(trace.events) + 1):
        prefix = trace.__class__("t", trace.events[:cut])
        assert validate_trace(prefix) is None
