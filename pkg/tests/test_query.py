import pytest

from logsieve import Constraint, Operator, QueryError, QueryEvent
from logsieve.query import parse_pattern, parse_query_json, parse_query_text


def test_text_form_full_clause_set():
    q = parse_query_text(
        "FROM main PATTERN A;!B;C;D+ WHERE time within 5000 1 3 gap atleast 2 3 4 "
        "BETWEEN 10 AND 99999 RETURN-ALL true"
    )
    assert q.log_name == "main"
    assert [qe.operator for qe in q.pattern] == [
        Operator.SIMPLE,
        Operator.NEGATION,
        Operator.SIMPLE,
        Operator.KLEENE_PLUS,
    ]
    assert q.constraints == (
        Constraint("time", "within", 5000, 1, 3),
        Constraint("gap", "atleast", 2, 3, 4),
    )
    assert q.window == (10, 99999)
    assert q.return_all is True


def test_text_form_or_and_star():
    q = parse_query_text("FROM m PATTERN A|B|C;D*;E")
    assert q.pattern[0] == QueryEvent("A", Operator.OR, ("B", "C"))
    assert q.pattern[1].operator is Operator.KLEENE_STAR


def test_text_form_groups_and_explain():
    q = parse_query_text("FROM m PATTERN A;B GROUPS (1-3,8),(5-7) EXPLAIN-NON-ANSWERS 4000 1000 1000")
    assert q.groups == (("1", "2", "3", "8"), ("5", "6", "7"))
    assert q.explain.k == 4000 and q.explain.step == 1000


def test_json_form_round_trip():
    doc = {
        "from": "main",
        "pattern": [
            {"type": "A", "op": "simple"},
            {"type": "B", "op": "negation"},
            {"type": "C", "op": "or", "alternatives": ["D"]},
        ],
        "where": [{"kind": "time", "mode": "within", "value": 5, "i": 1, "j": 3}],
        "between": [0, 100],
        "return_all": False,
    }
    q = parse_query_json(doc)
    assert parse_query_json(q.to_json()) == q


def test_json_pattern_accepts_compact_strings():
    q = parse_query_json({"from": "m", "pattern": ["A", "!B", "C+", "D|E"]})
    assert [qe.operator for qe in q.pattern] == [
        Operator.SIMPLE,
        Operator.NEGATION,
        Operator.KLEENE_PLUS,
        Operator.OR,
    ]


@pytest.mark.parametrize(
    "text",
    [
        "PATTERN A;B",  # missing FROM
        "FROM m PATTERN",  # missing pattern
        "FROM m PATTERN !A;B",  # leading negation
        "FROM m PATTERN A;!B",  # trailing negation
        "FROM m PATTERN !A",  # negation alone
        "FROM m PATTERN A* ",  # nothing required
        "FROM m PATTERN A;B WHERE time within 5 1",  # incomplete constraint
        "FROM m PATTERN A;B BETWEEN 5 AND",  # incomplete window
        "FROM m PATTERN A;B BANANAS",  # unknown clause
    ],
)
def test_bad_text_queries_rejected(text):
    with pytest.raises(QueryError):
        parse_query_text(text)


def test_constraint_on_negated_position_rejected():
    with pytest.raises(QueryError, match="negated"):
        parse_query_json(
            {
                "from": "m",
                "pattern": ["A", "!B", "C"],
                "where": [{"kind": "time", "mode": "within", "value": 5, "i": 2, "j": 3}],
            }
        )


def test_explain_requires_simple_pattern():
    with pytest.raises(QueryError, match="simple"):
        parse_query_json(
            {"from": "m", "pattern": ["A", "B+"], "explain": {"k": 1, "uncertainty": 1, "step": 1}}
        )


def test_explain_uncertainty_must_align_with_step():
    with pytest.raises(QueryError, match="multiple"):
        parse_query_json(
            {"from": "m", "pattern": ["A"], "explain": {"k": 1, "uncertainty": 3, "step": 2}}
        )


def test_constraint_value_and_order_validation():
    with pytest.raises(ValueError):
        Constraint("time", "within", 0, 1, 2)
    with pytest.raises(ValueError):
        Constraint("time", "within", 5, 2, 2)
    with pytest.raises(QueryError, match="exceeds"):
        parse_query_json(
            {
                "from": "m",
                "pattern": ["A", "B"],
                "where": [{"kind": "gap", "mode": "within", "value": 5, "i": 1, "j": 9}],
            }
        )


def test_pattern_parse_helper():
    assert [qe.event_type for qe in parse_pattern("A;B;C")] == ["A", "B", "C"]
