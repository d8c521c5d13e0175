"""Query model: the parsed form of a pattern-detection request.

Two input forms are accepted and produce the same :class:`Query`:

* a JSON document (see ``docs/query-format.md`` for the schema), and
* a compact text form, e.g.::

      FROM main PATTERN A;!B;C;D+ WHERE time within 5000 1 3 RETURN-ALL true

In the text form pattern positions are separated by ``;`` with ``!T`` for
negation, ``T+``/``T*`` for Kleene plus/star and ``T|U`` for alternatives.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .model import Constraint, Operator, QueryEvent


class QueryError(Exception):
    """The query is malformed or uses an unsupported combination."""


@dataclass(frozen=True)
class ExplainParams:
    k: int
    uncertainty: int
    step: int

    def __post_init__(self) -> None:
        if self.k < 0:
            raise QueryError("explanation budget k must be >= 0")
        if self.uncertainty < 0:
            raise QueryError("uncertainty must be >= 0")
        if self.step < 1:
            raise QueryError("step must be >= 1")
        if self.uncertainty % self.step != 0:
            raise QueryError("uncertainty must be a multiple of step")


@dataclass(frozen=True)
class Query:
    log_name: str
    pattern: tuple[QueryEvent, ...]
    constraints: tuple[Constraint, ...] = ()
    window: tuple[int, int] | None = None
    groups: tuple[tuple[str, ...], ...] | None = None
    explain: ExplainParams | None = None
    return_all: bool = False

    def __post_init__(self) -> None:
        if not self.pattern:
            raise QueryError("pattern must not be empty")
        ops = [qe.operator for qe in self.pattern]
        if ops[0] is Operator.NEGATION or ops[-1] is Operator.NEGATION:
            raise QueryError("negation is not allowed at the first or last pattern position")
        if not any(op in (Operator.SIMPLE, Operator.KLEENE_PLUS, Operator.OR) for op in ops):
            raise QueryError("pattern needs at least one required (non-optional) event")
        for c in self.constraints:
            if c.j > len(self.pattern):
                raise QueryError(f"constraint position {c.j} exceeds pattern length")
            for p in (c.i, c.j):
                if ops[p - 1] is Operator.NEGATION:
                    raise QueryError(f"constraint endpoint {p} refers to a negated position")
        if self.explain is not None and any(op is not Operator.SIMPLE for op in ops):
            raise QueryError("explanations are only allowed for simple query patterns")
        if self.window is not None and self.window[0] > self.window[1]:
            raise QueryError("window start must not exceed window end")

    def all_types(self) -> set[str]:
        out: set[str] = set()
        for qe in self.pattern:
            out.update(qe.type_choices())
        return out

    def to_json(self) -> dict:
        doc: dict = {
            "from": self.log_name,
            "pattern": [
                {
                    "type": qe.event_type,
                    "op": qe.operator.value,
                    **({"alternatives": list(qe.alternatives)} if qe.alternatives else {}),
                }
                for qe in self.pattern
            ],
        }
        if self.constraints:
            doc["where"] = [
                {"kind": c.kind, "mode": c.mode, "value": c.value, "i": c.i, "j": c.j}
                for c in self.constraints
            ]
        if self.window is not None:
            doc["between"] = list(self.window)
        if self.groups is not None:
            doc["groups"] = [list(g) for g in self.groups]
        if self.explain is not None:
            doc["explain"] = {
                "k": self.explain.k,
                "uncertainty": self.explain.uncertainty,
                "step": self.explain.step,
            }
        doc["return_all"] = self.return_all
        return doc


_RESERVED = set(";!+*|,()")


def _parse_pattern_atom(text: str) -> QueryEvent:
    text = text.strip()
    if not text:
        raise QueryError("empty pattern position")
    if "|" in text:
        choices = [c.strip() for c in text.split("|")]
        if any(not c or set(c) & _RESERVED for c in choices):
            raise QueryError(f"bad alternatives in {text!r}")
        return QueryEvent(choices[0], Operator.OR, tuple(choices[1:]))
    if text.startswith("!"):
        name = text[1:].strip()
        op = Operator.NEGATION
    elif text.endswith("+"):
        name = text[:-1].strip()
        op = Operator.KLEENE_PLUS
    elif text.endswith("*"):
        name = text[:-1].strip()
        op = Operator.KLEENE_STAR
    else:
        name = text
        op = Operator.SIMPLE
    if not name or set(name) & _RESERVED:
        raise QueryError(f"bad pattern position {text!r}")
    return QueryEvent(name, op)


def parse_pattern(text: str) -> tuple[QueryEvent, ...]:
    return tuple(_parse_pattern_atom(atom) for atom in text.split(";"))


def _expand_group_entry(entry) -> list[str]:
    if isinstance(entry, int):
        return [str(entry)]
    entry = str(entry).strip()
    if "-" in entry:
        lo_s, hi_s = entry.split("-", 1)
        try:
            lo, hi = int(lo_s), int(hi_s)
        except ValueError as exc:
            raise QueryError(f"bad group range {entry!r}") from exc
        if lo > hi:
            raise QueryError(f"bad group range {entry!r}")
        return [str(v) for v in range(lo, hi + 1)]
    if not entry:
        raise QueryError("empty group entry")
    return [entry]


def _parse_groups_text(text: str) -> tuple[tuple[str, ...], ...]:
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        text = text[1:-1]
    groups = []
    depth = 0
    current = ""
    chunks = []
    for ch in text:
        if ch == "(":
            depth += 1
            if depth == 1:
                current = ""
                continue
        elif ch == ")":
            depth -= 1
            if depth == 0:
                chunks.append(current)
                continue
        elif ch == "," and depth == 0:
            continue
        if depth >= 1:
            current += ch
    if depth != 0 or not chunks:
        raise QueryError(f"bad group definition {text!r}")
    for chunk in chunks:
        ids: list[str] = []
        for entry in chunk.split(","):
            ids.extend(_expand_group_entry(entry))
        groups.append(tuple(sorted(set(ids), key=_id_sort_key)))
    return tuple(groups)


def _id_sort_key(tid: str):
    return (0, int(tid)) if tid.isdigit() else (1, tid)


_KEYWORDS = {"WHERE", "BETWEEN", "GROUPS", "EXPLAIN-NON-ANSWERS", "RETURN-ALL"}


def parse_query_text(text: str) -> Query:
    tokens = text.split()
    if len(tokens) < 4 or tokens[0].upper() != "FROM" or tokens[2].upper() != "PATTERN":
        raise QueryError("query must start with FROM <log> PATTERN <pattern>")
    log_name = tokens[1]
    pattern = parse_pattern(tokens[3])
    idx = 4
    constraints: list[Constraint] = []
    window = None
    groups = None
    explain = None
    return_all = False
    while idx < len(tokens):
        kw = tokens[idx].upper()
        if kw == "WHERE":
            idx += 1
            while idx < len(tokens) and tokens[idx].upper() not in _KEYWORDS:
                part = [t.strip(",;") for t in tokens[idx : idx + 5]]
                if len(part) < 5:
                    raise QueryError("incomplete constraint in WHERE clause")
                kind, mode, value, i, j = part
                try:
                    constraints.append(Constraint(kind, mode, int(value), int(i), int(j)))
                except ValueError as exc:
                    raise QueryError(f"bad constraint {' '.join(part)!r}: {exc}") from exc
                idx += 5
        elif kw == "BETWEEN":
            if idx + 3 >= len(tokens) or tokens[idx + 2].upper() != "AND":
                raise QueryError("BETWEEN requires <start> AND <end>")
            try:
                window = (int(tokens[idx + 1]), int(tokens[idx + 3]))
            except ValueError as exc:
                raise QueryError("BETWEEN bounds must be integer ms") from exc
            idx += 4
        elif kw == "GROUPS":
            if idx + 1 >= len(tokens):
                raise QueryError("GROUPS requires a group definition")
            groups = _parse_groups_text(tokens[idx + 1])
            idx += 2
        elif kw == "EXPLAIN-NON-ANSWERS":
            if idx + 3 >= len(tokens):
                raise QueryError("EXPLAIN-NON-ANSWERS requires <k> <uncertainty> <step>")
            vals = [t.strip(",()") for t in tokens[idx + 1 : idx + 4]]
            try:
                explain = ExplainParams(int(vals[0]), int(vals[1]), int(vals[2]))
            except ValueError as exc:
                raise QueryError("EXPLAIN-NON-ANSWERS parameters must be integers") from exc
            idx += 4
        elif kw == "RETURN-ALL":
            if idx + 1 >= len(tokens) or tokens[idx + 1].lower() not in ("true", "false"):
                raise QueryError("RETURN-ALL requires true or false")
            return_all = tokens[idx + 1].lower() == "true"
            idx += 2
        else:
            raise QueryError(f"unexpected token {tokens[idx]!r}")
    return Query(
        log_name=log_name,
        pattern=pattern,
        constraints=tuple(constraints),
        window=window,
        groups=groups,
        explain=explain,
        return_all=return_all,
    )


def parse_query_json(doc: dict | str) -> Query:
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise QueryError(f"query is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise QueryError("query document must be a JSON object")
    known = {"from", "pattern", "where", "between", "groups", "explain", "return_all"}
    unknown = set(doc) - known
    if unknown:
        raise QueryError(f"unknown query fields: {sorted(unknown)}")
    if "from" not in doc or "pattern" not in doc:
        raise QueryError("query requires 'from' and 'pattern'")

    pattern: list[QueryEvent] = []
    for entry in doc["pattern"]:
        if isinstance(entry, str):
            pattern.append(_parse_pattern_atom(entry))
        elif isinstance(entry, dict):
            op = Operator(entry.get("op", "simple"))
            try:
                pattern.append(
                    QueryEvent(entry["type"], op, tuple(entry.get("alternatives", ())))
                )
            except (KeyError, ValueError) as exc:
                raise QueryError(f"bad pattern entry {entry!r}: {exc}") from exc
        else:
            raise QueryError(f"bad pattern entry {entry!r}")

    constraints = []
    for entry in doc.get("where", ()):
        try:
            constraints.append(
                Constraint(entry["kind"], entry["mode"], int(entry["value"]),
                           int(entry["i"]), int(entry["j"]))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise QueryError(f"bad constraint {entry!r}: {exc}") from exc

    window = None
    if doc.get("between") is not None:
        between = doc["between"]
        if not (isinstance(between, (list, tuple)) and len(between) == 2):
            raise QueryError("'between' must be a two-element array")
        window = (int(between[0]), int(between[1]))

    groups = None
    if doc.get("groups") is not None:
        groups = tuple(
            tuple(
                sorted(
                    {tid for entry in g for tid in _expand_group_entry(entry)},
                    key=_id_sort_key,
                )
            )
            for g in doc["groups"]
        )

    explain = None
    if doc.get("explain") is not None:
        e = doc["explain"]
        try:
            explain = ExplainParams(int(e["k"]), int(e["uncertainty"]), int(e["step"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise QueryError(f"bad explain parameters {e!r}: {exc}") from exc

    return Query(
        log_name=str(doc["from"]),
        pattern=tuple(pattern),
        constraints=tuple(constraints),
        window=window,
        groups=groups,
        explain=explain,
        return_all=bool(doc.get("return_all", False)),
    )
