"""Incremental ingest: extend sequences, extract new event pairs, refresh stats.

Pair extraction walks each type pair's timestamp lists with a greedy
forward scan: every first-element candidate takes the earliest unused
second element at or after it, and completed pairs never overlap — except
that for same-type pairs the second event is reused as the first event of
the next pair, which chains consecutive occurrences. Incremental batches
prune both lists at the stored completion watermark before scanning, so
re-ingesting history can never duplicate a pair.
"""

from __future__ import annotations

import json
import time
from bisect import bisect_right
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping

from .model import Event, EventPair, Trace, TypePair, validate_trace
from .storage import Store


class IngestError(Exception):
    """The batch was rejected; the store is unchanged."""


@dataclass(frozen=True)
class IngestBatch:
    """New events, possibly spanning many traces and extending stored ones.

    Within each trace the events must continue the stored trace's timestamp
    ordering; positions are assigned by the store.
    """

    events: tuple[Event, ...]

    @staticmethod
    def from_rows(rows: Iterable[tuple[str, str, int]]) -> "IngestBatch":
        events = tuple(
            Event(trace_id=tid, event_type=etype, ts=ts, pos=0) for tid, etype, ts in rows
        )
        return IngestBatch(events=events)


@dataclass(frozen=True)
class IngestReport:
    traces_touched: int
    events_ingested: int
    pairs_created: int
    segments_rewritten: int
    wall_time_ms: int

    def to_json(self) -> dict:
        return {
            "traces_touched": self.traces_touched,
            "events_ingested": self.events_ingested,
            "pairs_created": self.pairs_created,
            "segments_rewritten": self.segments_rewritten,
            "wall_time_ms": self.wall_time_ms,
        }


def parse_timestamp(value) -> int:
    """Integer epoch milliseconds, or an RFC 3339 / ISO 8601 string."""
    if isinstance(value, int):
        return value
    text = str(value).strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ValueError(f"unparseable timestamp {value!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)


def read_log_file(path: str | Path, fmt: str | None = None) -> IngestBatch:
    """Load a CSV or JSON-lines log file into a batch.

    The format is inferred from the extension unless given. Malformed rows
    are reported with their line number and reject the whole file.
    """
    path = Path(path)
    if fmt is None:
        fmt = "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson", ".json") else "csv"
    if fmt not in ("csv", "jsonl"):
        raise IngestError(f"unknown input format {fmt!r}")
    rows: list[tuple[str, str, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        if fmt == "csv":
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                parts = [p.strip() for p in line.split(",")]
                if lineno == 1 and parts[:3] == ["trace_id", "event_type", "timestamp"]:
                    continue
                if len(parts) < 3:
                    raise IngestError(f"{path}:{lineno}: expected trace_id,event_type,timestamp")
                try:
                    rows.append((parts[0], parts[1], parse_timestamp(parts[2])))
                except ValueError as exc:
                    raise IngestError(f"{path}:{lineno}: {exc}") from exc
        else:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    doc = json.loads(line)
                    rows.append(
                        (str(doc["trace_id"]), str(doc["event_type"]), parse_timestamp(doc["timestamp"]))
                    )
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise IngestError(f"{path}:{lineno}: {exc}") from exc
    return IngestBatch.from_rows(rows)


def extract_pairs(
    ts_list_i: list[int],
    ts_list_j: list[int],
    ts_last: int | None = None,
    lookback_ms: int | None = None,
) -> list[tuple[int, int]]:
    """Greedy pair extraction over two strictly increasing timestamp lists.

    Entries earlier than ``ts_last`` are pruned from both lists first (an
    entry exactly at the watermark survives). Each remaining first-element
    candidate matches the earliest second element strictly after it that
    has not been used and lies within ``lookback_ms``. A candidate inside a
    completed pair's span is skipped, keeping pairs non-overlapping; when
    both lists are the same type, a pair's second element is allowed to
    start the next pair.
    """
    same = ts_list_i == ts_list_j
    if ts_last is not None:
        ts_list_i = [t for t in ts_list_i if t >= ts_last]
        ts_list_j = [t for t in ts_list_j if t >= ts_last]
    pairs: list[tuple[int, int]] = []
    frontier: int | None = None
    n = len(ts_list_j)
    for t in ts_list_i:
        if frontier is not None and (t < frontier or (t == frontier and not same)):
            continue
        idx = bisect_right(ts_list_j, t)
        if idx >= n:
            break
        v = ts_list_j[idx]
        if lookback_ms is not None and v - t > lookback_ms:
            continue
        pairs.append((t, v))
        frontier = v
    return pairs


def _pairs_for_comb(
    by_type: Mapping[str, list[int]],
    comb: Iterable[TypePair],
    last_checked: Mapping[TypePair, int],
    lookback_ms: int | None,
) -> list[tuple[TypePair, int, int]]:
    out = []
    for et in comb:
        ts_i = by_type.get(et.first)
        ts_j = by_type.get(et.second)
        if not ts_i or not ts_j:
            continue
        for first, second in extract_pairs(ts_i, ts_j, last_checked.get(et), lookback_ms):
            out.append((et, first, second))
    return out


def extract_pairs_for_trace(
    trace: Trace,
    last_checked: Mapping[TypePair, int] | None = None,
    lookback_ms: int | None = None,
) -> list[tuple[TypePair, EventPair]]:
    """All new event pairs of a trace, over every type pair present in it."""
    problem = validate_trace(trace)
    if problem is not None:
        raise ValueError(f"invalid trace {trace.trace_id}: {problem}")
    last_checked = last_checked or {}
    by_type: dict[str, list[int]] = {}
    pos_of = {}
    for ev in trace.events:
        by_type.setdefault(ev.event_type, []).append(ev.ts)
        pos_of[ev.ts] = ev.pos
    types = sorted(by_type)
    comb = [TypePair(a, b) for a in types for b in types]
    out = []
    for et, first, second in _pairs_for_comb(by_type, comb, last_checked, lookback_ms):
        out.append(
            (
                et,
                EventPair(
                    trace_id=trace.trace_id,
                    first_ts=first,
                    second_ts=second,
                    first_pos=pos_of[first],
                    second_pos=pos_of[second],
                ),
            )
        )
    return out


def assign_intervals(
    pairs: Iterable[tuple[TypePair, EventPair]],
    split_every_days: int,
    origin_ts: int,
) -> list[tuple[tuple[int, int], TypePair, EventPair]]:
    """Tag each pair with the half-open interval containing its second event.

    Intervals are aligned to ``origin_ts`` in steps of ``split_every_days``;
    a pair spanning several intervals lands in the one of its last event.
    """
    split_ms = split_every_days * 86_400_000
    out = []
    for et, pair in pairs:
        k = (pair.second_ts - origin_ts) // split_ms
        start = origin_ts + k * split_ms
        out.append(((start, start + split_ms), et, pair))
    return out


def update_counts(store: Store, new_pairs: Iterable[tuple[TypePair, int]]) -> None:
    """Fold new pair durations (ms) into the per-pair statistics table."""
    merged: dict[TypePair, list[int]] = {}
    for et, duration in new_pairs:
        merged.setdefault(et, []).append(duration)
    if not merged:
        return
    path = store.count_segment_path()
    table = {
        (first, second): [total, total_sum, lo, hi]
        for first, second, total, total_sum, lo, hi in store.read_segment("count", path)
    }
    for et, durations in merged.items():
        key = (et.first, et.second)
        row = table.get(key)
        if row is None:
            table[key] = [
                len(durations),
                sum(durations),
                min(durations),
                max(durations),
            ]
        else:
            row[0] += len(durations)
            row[1] += sum(durations)
            row[2] = min(row[2], min(durations))
            row[3] = max(row[3], max(durations))
    store.rewrite_segment(
        "count", path, [(f, s, *vals) for (f, s), vals in table.items()]
    )


def ingest(store: Store, batch: IngestBatch) -> IngestReport:
    """Apply one batch per the incremental indexing procedure.

    Sequences and the per-type index are extended first, then new pairs are
    extracted per trace against the stored watermarks, assigned to interval
    segments, and merged into the pair index; watermarks and duration stats
    are refreshed last. A batch whose events do not strictly extend every
    touched trace is rejected before any write.
    """
    started = time.perf_counter()
    if not batch.events:
        return IngestReport(0, 0, 0, 0, 0)

    with store.writer_lock():
        # group and validate against stored state before touching anything
        new_by_trace: dict[str, list[Event]] = {}
        for ev in batch.events:
            if not ev.event_type:
                raise IngestError(f"trace {ev.trace_id}: empty event type")
            new_by_trace.setdefault(ev.trace_id, []).append(ev)
        for tid, evs in sorted(new_by_trace.items()):
            for prev, cur in zip(evs, evs[1:]):
                if cur.ts <= prev.ts:
                    raise IngestError(
                        f"trace {tid}: batch events out of order at ts {cur.ts}"
                    )
        registry = store.read_registry()
        for tid, evs in new_by_trace.items():
            meta = registry.get(tid)
            if meta is not None and evs[0].ts <= meta["max_ts"]:
                if evs[-1].ts <= meta["max_ts"]:
                    raise IngestError(f"trace {tid}: batch already indexed")
                raise IngestError(
                    f"trace {tid}: event at ts {evs[0].ts} does not extend stored trace"
                )

        if store.origin_ts is None:
            store.set_origin(min(ev.ts for ev in batch.events))

        # load stored tails of touched traces
        existing = store.read_sequences([t for t in new_by_trace if t in registry])
        segments_rewritten = 0

        # assign sequence numbers to new traces in sorted order for determinism
        next_seq = max((m["seq"] for m in registry.values()), default=-1) + 1
        for tid in sorted(new_by_trace):
            if tid not in registry:
                registry[tid] = {"seq": next_seq, "max_ts": -1, "events": 0}
                next_seq += 1

        full_traces: dict[str, Trace] = {}
        for tid, evs in new_by_trace.items():
            old = existing.get(tid)
            old_events = old.events if old else ()
            base_pos = len(old_events)
            renumbered = tuple(
                Event(trace_id=tid, event_type=e.event_type, ts=e.ts, pos=base_pos + i)
                for i, e in enumerate(evs, start=1)
            )
            full_traces[tid] = Trace(trace_id=tid, events=old_events + renumbered)
            problem = validate_trace(full_traces[tid])
            if problem is not None:
                raise IngestError(f"trace {tid}: {problem}")

        # sequence segments: merge each affected range once
        seq_updates: dict[str, dict[str, Trace]] = {}
        for tid, trace in full_traces.items():
            rng = store.trace_range_name(registry[tid]["seq"])
            seq_updates.setdefault(rng, {})[tid] = trace
        for rng, traces in seq_updates.items():
            path = store.seq_segment_path(rng)
            rows = {t: evs for t, evs in store.read_segment("seq", path)}
            for tid, trace in traces.items():
                rows[tid] = [(ev.event_type, ev.ts) for ev in trace.events]
            seq_of = {t: registry[t]["seq"] for t in rows}
            store.rewrite_segment(
                "seq",
                path,
                sorted(rows.items(), key=lambda kv: seq_of[kv[0]]),
            )
            segments_rewritten += 1

        # per-type occurrence index for the new events only
        single_updates: dict[tuple[int, str], list[tuple]] = {}
        for tid, trace in full_traces.items():
            base_pos = registry[tid]["events"]
            for ev in trace.events[base_pos:]:
                start, _ = store.interval_of(ev.ts)
                single_updates.setdefault((start, ev.event_type), []).append(
                    (ev.event_type, tid, ev.ts, ev.pos)
                )
        for (start, etype), rows in single_updates.items():
            path = store.single_segment_path(start, etype)
            merged = store.read_segment("single", path)
            merged.extend(rows)
            store.rewrite_segment("single", path, merged)
            segments_rewritten += 1

        # pair extraction: only type pairs whose second type gained events
        # can yield new pairs, since new events follow everything stored
        lookback_ms = store.config.lookback_ms
        watermark_cache: dict[str, dict[tuple[TypePair, str], int]] = {}
        new_pairs: list[tuple[str, TypePair, int, int, int, int]] = []
        for tid in sorted(full_traces):
            trace = full_traces[tid]
            base_pos = registry[tid]["events"]
            new_types = {ev.event_type for ev in trace.events[base_pos:]}
            by_type: dict[str, list[int]] = {}
            pos_of: dict[int, int] = {}
            for ev in trace.events:
                by_type.setdefault(ev.event_type, []).append(ev.ts)
                pos_of[ev.ts] = ev.pos
            rng = store.trace_range_name(registry[tid]["seq"])
            if rng not in watermark_cache:
                watermark_cache[rng] = store.read_last_completed(rng)
            marks = watermark_cache[rng]
            all_types = sorted(by_type)
            comb = [TypePair(a, b) for a in all_types for b in sorted(new_types)]
            last_checked = {
                et: marks[(et, tid)] for et in comb if (et, tid) in marks
            }
            for et, first, second in _pairs_for_comb(by_type, comb, last_checked, lookback_ms):
                new_pairs.append((tid, et, first, second, pos_of[first], pos_of[second]))

        # pair index segments, grouped by (interval, first type)
        index_updates: dict[tuple[int, str], list[tuple]] = {}
        pos_mode = store.config.mode == "pos"
        for tid, et, first, second, fpos, spos in new_pairs:
            start, _ = store.interval_of(second)
            a, b = (fpos, spos) if pos_mode else (first, second)
            index_updates.setdefault((start, et.first), []).append(
                (et.first, et.second, tid, a, b)
            )
        for (start, first_type), rows in index_updates.items():
            path = store.index_segment_path(start, first_type)
            merged = store.read_segment("index", path)
            merged.extend(rows)
            store.rewrite_segment("index", path, merged)
            segments_rewritten += 1

        # watermarks: new max completion per (pair, trace)
        mark_updates: dict[str, dict[tuple[TypePair, str], int]] = {}
        for tid, et, _first, second, _fp, _sp in new_pairs:
            rng = store.trace_range_name(registry[tid]["seq"])
            bucket = mark_updates.setdefault(rng, {})
            key = (et, tid)
            if second > bucket.get(key, -1):
                bucket[key] = second
        for rng, updates in mark_updates.items():
            marks = watermark_cache.get(rng) or store.read_last_completed(rng)
            for key, second in updates.items():
                if second > marks.get(key, -(1 << 62)):
                    marks[key] = second
            store.rewrite_segment(
                "last",
                store.last_segment_path(rng),
                [(et.first, et.second, tid, ts) for (et, tid), ts in marks.items()],
            )
            segments_rewritten += 1

        if new_pairs:
            update_counts(
                store, [(et, second - first) for _t, et, first, second, _f, _s in new_pairs]
            )
            segments_rewritten += 1

        for tid, trace in full_traces.items():
            registry[tid]["max_ts"] = trace.max_ts
            registry[tid]["events"] = len(trace.events)
        store.write_registry(registry)

    wall_ms = int((time.perf_counter() - started) * 1000)
    return IngestReport(
        traces_touched=len(new_by_trace),
        events_ingested=len(batch.events),
        pairs_created=len(new_pairs),
        segments_rewritten=segments_rewritten,
        wall_time_ms=wall_ms,
    )
