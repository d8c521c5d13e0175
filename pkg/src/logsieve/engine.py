"""Validation engine: matches compiled patterns against candidate streams.

A pattern compiles to a row of positive states (one per non-negated query
event) with type predicates, Kleene flags, per-edge negation guards, and
constraints rewritten against state indices. Matching scans a stream left
to right, each state taking the next acceptable event; on a dead end the
search backtracks over earlier choices, so a trace is reported as matching
whenever any valid assignment exists. Kleene states absorb every
same-predicate event up to the next state's match.

Streams built from a position-only index use positions as the ordering key;
time and gap constraints read the real ts/pos fields, which the planner
guarantees are present when such constraints occur.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import Constraint, Event, Occurrence, Operator, QueryEvent
from .query import QueryError


@dataclass(frozen=True)
class State:
    types: frozenset[str]
    kleene: str | None  # None | "plus" | "star"
    source_pos: int  # 1-based position in the original pattern


@dataclass(frozen=True)
class CompiledConstraint:
    kind: str
    mode: str
    value: int
    si: int  # positive-state indices
    sj: int


@dataclass(frozen=True)
class CompiledPattern:
    states: tuple[State, ...]
    guards: tuple[frozenset[str], ...]  # guards[k] sits between states k and k+1
    constraints: tuple[CompiledConstraint, ...]

    @property
    def is_simple(self) -> bool:
        return all(s.kleene is None and len(s.types) == 1 for s in self.states) and not any(
            self.guards
        )


@dataclass(frozen=True)
class MatchPolicy:
    strategy: str = "stnm_consume"  # | "skip_till_any_match"
    return_all: bool = False

    def __post_init__(self) -> None:
        if self.strategy not in ("stnm_consume", "skip_till_any_match"):
            raise ValueError(f"unknown strategy {self.strategy!r}")


def compile_pattern(
    pattern: tuple[QueryEvent, ...], constraints: tuple[Constraint, ...] = ()
) -> CompiledPattern:
    """Build states in pattern order; negations become guards on the
    surrounding edge and constraints are rewritten to state indices."""
    states: list[State] = []
    edge_guards: list[set[str]] = []
    pending: set[str] = set()
    pos_to_state: dict[int, int] = {}
    for pos, qe in enumerate(pattern, start=1):
        if qe.operator is Operator.NEGATION:
            if not states:
                raise QueryError("negation cannot start a pattern")
            pending.add(qe.event_type)
            continue
        if states:
            edge_guards.append(set(pending))
            pending.clear()
        kleene = {
            Operator.KLEENE_PLUS: "plus",
            Operator.KLEENE_STAR: "star",
        }.get(qe.operator)
        states.append(State(frozenset(qe.type_choices()), kleene, pos))
        pos_to_state[pos] = len(states) - 1
    if pending:
        raise QueryError("negation cannot end a pattern")
    compiled_constraints = []
    for c in constraints:
        if c.i not in pos_to_state or c.j not in pos_to_state:
            raise QueryError(
                f"constraint endpoints ({c.i},{c.j}) must refer to non-negated positions"
            )
        compiled_constraints.append(
            CompiledConstraint(c.kind, c.mode, c.value, pos_to_state[c.i], pos_to_state[c.j])
        )
    return CompiledPattern(
        states=tuple(states),
        guards=tuple(frozenset(g) for g in edge_guards),
        constraints=tuple(compiled_constraints),
    )


class _Draft:
    __slots__ = ("sets", "last_index")

    def __init__(self, sets: list[list[int]], last_index: int):
        self.sets = sets
        self.last_index = last_index


def _constraint_holds(cc: CompiledConstraint, ev_a: Event, ev_b: Event) -> bool:
    diff = (ev_b.ts - ev_a.ts) if cc.kind == "time" else (ev_b.pos - ev_a.pos)
    if cc.mode == "within":
        return diff <= cc.value
    return diff >= cc.value


class _Matcher:
    """One search over one stream; collects the first or all completions."""

    def __init__(self, cp: CompiledPattern, events, keys, collect_all: bool):
        self.cp = cp
        self.states = cp.states
        self.m = len(cp.states)
        self.events = events
        self.keys = keys
        self.n = len(events)
        self.collect_all = collect_all
        self.results: list[_Draft] = []
        self.starts: list[int | None] = [None] * self.m

    def run(self, scan_from: int) -> _Draft | None:
        self._rec(0, scan_from, -1)
        return self.results[0] if self.results else None

    # --- search ---------------------------------------------------------

    def _suffix_types(self, k: int) -> frozenset[str]:
        out: set[str] = set()
        for s in self.states[k:]:
            out |= s.types
            if s.kleene != "star":
                break
        return frozenset(out)

    def _rec(self, k: int, pos: int, prev_idx: int) -> bool:
        """Return True when done (first match found and not collecting)."""
        if k == self.m:
            draft = self._finalize()
            if draft is not None:
                self.results.append(draft)
                return not self.collect_all
            return False
        st = self.states[k]
        events, keys = self.events, self.keys
        prev_key = keys[prev_idx] if prev_idx >= 0 else None
        cands = [
            i
            for i in range(pos, self.n)
            if events[i].event_type in st.types and (prev_key is None or keys[i] > prev_key)
        ]
        branches: list[tuple] = [("bind", i) for i in cands]
        if st.kleene == "star":
            skip_first = False
            if not cands:
                branches = [("skip",)]
            else:
                ahead = self._suffix_types(k + 1)
                i_suffix = next(
                    (
                        i
                        for i in range(pos, self.n)
                        if events[i].event_type in ahead
                        and (prev_key is None or keys[i] > prev_key)
                    ),
                    None,
                )
                skip_first = i_suffix is not None and i_suffix < cands[0]
                branches = (
                    [("skip",), *branches] if skip_first else [*branches, ("skip",)]
                )
        for br in branches:
            if br[0] == "skip":
                self.starts[k] = None
                if self._rec(k + 1, pos, prev_idx):
                    return True
                continue
            i = br[1]
            self.starts[k] = i
            if self._incremental_ok(k, i):
                if self._rec(k + 1, i + 1, i):
                    return True
            self.starts[k] = None
        self.starts[k] = None
        return False

    def _incremental_ok(self, k: int, i: int) -> bool:
        for cc in self.cp.constraints:
            if cc.sj != k:
                continue
            si_start = self.starts[cc.si]
            if si_start is None:
                continue
            if not _constraint_holds(cc, self.events[si_start], self.events[i]):
                return False
        return True

    def _finalize(self) -> _Draft | None:
        starts = self.starts
        bound = [(k, i) for k, i in enumerate(starts) if i is not None]
        if not bound:
            return None
        events, keys = self.events, self.keys
        # derive Kleene sets: absorb matching events up to the next bound state
        sets: list[list[int]] = [[] for _ in range(self.m)]
        for b_idx, (k, start) in enumerate(bound):
            st = self.states[k]
            if st.kleene is None:
                sets[k] = [start]
                continue
            end = bound[b_idx + 1][1] if b_idx + 1 < len(bound) else self.n
            limit_key = keys[end] if end < self.n and b_idx + 1 < len(bound) else None
            run = [start]
            last_key = keys[start]
            for j in range(start + 1, end):
                if events[j].event_type in st.types and keys[j] > last_key:
                    if limit_key is not None and keys[j] >= limit_key:
                        continue
                    run.append(j)
                    last_key = keys[j]
            sets[k] = run
        # negation guards between adjacent positive states; anchors skip
        # zero-match optional states and fall open at the pattern edges
        for q, forbidden in enumerate(self.cp.guards):
            if not forbidden:
                continue
            left_key = None
            for k in range(q, -1, -1):
                if sets[k]:
                    left_key = keys[sets[k][-1]]
                    break
            right_key = None
            for k in range(q + 1, self.m):
                if sets[k]:
                    right_key = keys[sets[k][0]]
                    break
            for j in range(self.n):
                if events[j].event_type in forbidden:
                    kj = keys[j]
                    if (left_key is None or kj > left_key) and (
                        right_key is None or kj < right_key
                    ):
                        return None
        for cc in self.cp.constraints:
            a = starts[cc.si]
            b = starts[cc.sj]
            if a is None or b is None:
                continue
            if not _constraint_holds(cc, events[a], events[b]):
                return None
        last_index = max(run[-1] for run in sets if run)
        return _Draft([list(run) for run in sets], last_index)


def match_stream(cp: CompiledPattern, stream, policy: MatchPolicy) -> list[Occurrence]:
    """Detect occurrences of ``cp`` in one candidate stream.

    With the consume strategy the scan restarts after each accepted
    occurrence's last event, so no event takes part in two results and the
    results are pairwise non-overlapping. The any-match strategy enumerates
    every valid assignment instead (used for explanation and tests).
    """
    events = tuple(stream.events)
    key_is_ts = getattr(stream, "key_is_ts", True)
    keys = [ev.ts if key_is_ts else ev.pos for ev in events]
    _check_required_fields(cp, stream)

    def build(draft: _Draft) -> Occurrence:
        return Occurrence(
            trace_id=stream.trace_id,
            matches=tuple(tuple(events[j] for j in run) for run in draft.sets),
        )

    if policy.strategy == "skip_till_any_match":
        matcher = _Matcher(cp, events, keys, collect_all=True)
        matcher.run(0)
        occs = [build(d) for d in matcher.results]
        occs.sort(key=lambda o: tuple((ev.ts, ev.pos) for ev in o.all_events()))
        return occs

    # restarting after each accepted occurrence's last event makes results
    # pairwise non-overlapping by construction and consumes every used event
    occs: list[Occurrence] = []
    start = 0
    while start <= len(events):
        matcher = _Matcher(cp, events, keys, collect_all=False)
        draft = matcher.run(start)
        if draft is None:
            break
        occs.append(build(draft))
        if not policy.return_all:
            break
        start = draft.last_index + 1
    return occs


def _check_required_fields(cp: CompiledPattern, stream) -> None:
    needs_ts = any(cc.kind == "time" for cc in cp.constraints)
    needs_pos = any(cc.kind == "gap" for cc in cp.constraints)
    if needs_ts and not getattr(stream, "has_ts", True):
        raise RuntimeError("stream lacks timestamps required by a time constraint")
    if needs_pos and not getattr(stream, "has_pos", True):
        raise RuntimeError("stream lacks positions required by a gap constraint")


def check_constraint(c: Constraint, occ: Occurrence) -> bool:
    """Evaluate one constraint against a detected occurrence.

    Positions index the occurrence's positive positions (1-based); Kleene
    positions anchor at their first matched event. A position that matched
    zero events satisfies any constraint vacuously. Both bounds are
    inclusive.
    """
    bundle_i = occ.matches[c.i - 1]
    bundle_j = occ.matches[c.j - 1]
    if not bundle_i or not bundle_j:
        return True
    ev_a, ev_b = bundle_i[0], bundle_j[0]
    diff = (ev_b.ts - ev_a.ts) if c.kind == "time" else (ev_b.pos - ev_a.pos)
    return diff <= c.value if c.mode == "within" else diff >= c.value


def select_non_overlapping(occs: list[Occurrence]) -> list[Occurrence]:
    """Maximum-cardinality pairwise non-overlapping subset (greedy by end).

    Occurrences are taken in ascending order of their last event's
    timestamp; one is kept when it starts strictly after the previously
    kept one ends.
    """
    ordered = sorted(occs, key=lambda o: (o.last_ts, o.first_ts))
    kept: list[Occurrence] = []
    for occ in ordered:
        if not kept or occ.first_ts > kept[-1].last_ts:
            kept.append(occ)
    return kept
