"""Partitioned, immutable segment storage for one or more log databases.

Layout under ``<root>/<log_name>/``::

    manifest.json                  store configuration + interval origin
    registry.json                  trace id -> (sequence no, max ts, length)
    index/<interval>/<type>.seg    pair index, partitioned by completion time
                                   then by the first type of the pair
    single/<interval>/<type>.seg   per-type occurrence index
    seq/<lo>-<hi>.seg              full traces, in ranges of trace_split
    last/<lo>-<hi>.seg             per (type pair, trace) completion watermark
    count/all.seg                  per type pair duration statistics

Segment files are immutable: a rewrite builds a temp file and renames it
into place, so readers never observe partial contents. Files start with a
16-byte header (magic, version, record count) followed by length-prefixed
binary records, sorted by the table's natural key so identical contents
produce identical bytes. A single writer is enforced with a lock file;
readers need no coordination.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path
from urllib.parse import quote, unquote

from filelock import FileLock

from .model import Event, EventPair, Trace, TypePair

MAGIC = b"LSEG"
VERSION = 1
_HEADER = struct.Struct("<4sIQ")
_U32 = struct.Struct("<I")

MS_PER_DAY = 86_400_000


class StoreError(Exception):
    """Configuration or usage error against an existing store."""


class SegmentFormatError(Exception):
    """A segment file failed to decode; the store is corrupt."""


@dataclass(frozen=True)
class StoreConfig:
    """Indexing parameters fixed at store creation.

    ``lookback`` is in days: the maximum separation between two events for
    them to be indexed as a pair. ``mode`` selects whether pair records
    persist timestamps or positions.
    """

    log_name: str
    mode: str = "ts"  # "ts" | "pos"
    split_every_days: int = 30
    trace_split: int = 10_000
    lookback: int = 30
    compression: str = "none"  # "none" | "deflate"

    def __post_init__(self) -> None:
        if self.mode not in ("ts", "pos"):
            raise ValueError(f"mode must be 'ts' or 'pos', got {self.mode!r}")
        if self.split_every_days < 1:
            raise ValueError("split_every_days must be >= 1")
        if self.trace_split < 1:
            raise ValueError("trace_split must be >= 1")
        if self.lookback < 1:
            raise ValueError("lookback must be >= 1")
        if self.compression not in ("none", "deflate"):
            raise ValueError(f"unknown compression {self.compression!r}")

    @property
    def lookback_ms(self) -> int:
        return self.lookback * MS_PER_DAY

    @property
    def split_ms(self) -> int:
        return self.split_every_days * MS_PER_DAY


@dataclass(frozen=True)
class CountRecord:
    """Aggregate duration statistics for one type pair."""

    et_pair: TypePair
    total_completions: int
    sum_durations: int
    min_duration: int
    max_duration: int

    @property
    def mean_duration(self) -> float:
        return self.sum_durations / self.total_completions


# --- record codecs ----------------------------------------------------------
#
# Records are tuples; strings are u16-length-prefixed UTF-8. One codec per
# table keeps files self-describing enough for the CLI dump.


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError("string field too long")
    return struct.pack("<H", len(raw)) + raw


def _unpack_str(buf: bytes, off: int) -> tuple[str, int]:
    (n,) = struct.unpack_from("<H", buf, off)
    off += 2
    return buf[off : off + n].decode("utf-8"), off + n


def _encode_index(rec: tuple) -> bytes:
    first, second, trace, a, b = rec
    return _pack_str(first) + _pack_str(second) + _pack_str(trace) + struct.pack("<qq", a, b)


def _decode_index(buf: bytes) -> tuple:
    first, off = _unpack_str(buf, 0)
    second, off = _unpack_str(buf, off)
    trace, off = _unpack_str(buf, off)
    a, b = struct.unpack_from("<qq", buf, off)
    return (first, second, trace, a, b)


def _encode_single(rec: tuple) -> bytes:
    etype, trace, ts, pos = rec
    return _pack_str(etype) + _pack_str(trace) + struct.pack("<qq", ts, pos)


def _decode_single(buf: bytes) -> tuple:
    etype, off = _unpack_str(buf, 0)
    trace, off = _unpack_str(buf, off)
    ts, pos = struct.unpack_from("<qq", buf, off)
    return (etype, trace, ts, pos)


def _encode_seq(rec: tuple) -> bytes:
    trace, events = rec
    out = [_pack_str(trace), struct.pack("<I", len(events))]
    for etype, ts in events:
        out.append(_pack_str(etype))
        out.append(struct.pack("<q", ts))
    return b"".join(out)


def _decode_seq(buf: bytes) -> tuple:
    trace, off = _unpack_str(buf, 0)
    (n,) = struct.unpack_from("<I", buf, off)
    off += 4
    events = []
    for _ in range(n):
        etype, off = _unpack_str(buf, off)
        (ts,) = struct.unpack_from("<q", buf, off)
        off += 8
        events.append((etype, ts))
    return (trace, events)


def _encode_last(rec: tuple) -> bytes:
    first, second, trace, ts_last = rec
    return _pack_str(first) + _pack_str(second) + _pack_str(trace) + struct.pack("<q", ts_last)


def _decode_last(buf: bytes) -> tuple:
    first, off = _unpack_str(buf, 0)
    second, off = _unpack_str(buf, off)
    trace, off = _unpack_str(buf, off)
    (ts_last,) = struct.unpack_from("<q", buf, off)
    return (first, second, trace, ts_last)


def _encode_count(rec: tuple) -> bytes:
    first, second, total, total_sum, lo, hi = rec
    return _pack_str(first) + _pack_str(second) + struct.pack("<qqqq", total, total_sum, lo, hi)


def _decode_count(buf: bytes) -> tuple:
    first, off = _unpack_str(buf, 0)
    second, off = _unpack_str(buf, off)
    total, total_sum, lo, hi = struct.unpack_from("<qqqq", buf, off)
    return (first, second, total, total_sum, lo, hi)


_CODECS = {
    "index": (_encode_index, _decode_index),
    "single": (_encode_single, _decode_single),
    "seq": (_encode_seq, _decode_seq),
    "last": (_encode_last, _decode_last),
    "count": (_encode_count, _decode_count),
}

# Natural sort key per table; rewrites re-sort so files are deterministic.
_SORT_KEYS = {
    "index": lambda r: (r[0], r[1], r[2], r[4], r[3]),
    "single": lambda r: (r[0], r[1], r[2]),
    "seq": lambda r: r[0],
    "last": lambda r: (r[0], r[1], r[2]),
    "count": lambda r: (r[0], r[1]),
}


def write_segment_file(path: Path, table: str, records: list[tuple], compression: str) -> None:
    """Atomically write a sorted segment file (temp file + rename)."""
    encode = _CODECS[table][0]
    records = sorted(records, key=_SORT_KEYS[table])
    body_parts = []
    for rec in records:
        raw = encode(rec)
        body_parts.append(_U32.pack(len(raw)))
        body_parts.append(raw)
    body = b"".join(body_parts)
    if compression == "deflate":
        body = zlib.compress(body, 6)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, len(records)))
            fh.write(body)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def read_segment_file(path: Path, table: str, compression: str) -> list[tuple]:
    decode = _CODECS[table][1]
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        return []
    if len(data) < _HEADER.size:
        raise SegmentFormatError(f"{path}: truncated header")
    magic, version, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise SegmentFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SegmentFormatError(f"{path}: unsupported version {version}")
    body = data[_HEADER.size :]
    if compression == "deflate":
        try:
            body = zlib.decompress(body)
        except zlib.error as exc:
            raise SegmentFormatError(f"{path}: {exc}") from exc
    records = []
    off = 0
    for _ in range(count):
        if off + 4 > len(body):
            raise SegmentFormatError(f"{path}: truncated record length")
        (n,) = _U32.unpack_from(body, off)
        off += 4
        raw = body[off : off + n]
        if len(raw) != n:
            raise SegmentFormatError(f"{path}: truncated record")
        off += n
        records.append(decode(raw))
    if off != len(body):
        raise SegmentFormatError(f"{path}: trailing bytes after last record")
    return records


def _safe_name(value: str) -> str:
    return quote(value, safe="")


def _unsafe_name(value: str) -> str:
    return unquote(value)


class Store:
    """Handle on one log database under a store root.

    Readers may use a Store concurrently; ingest acquires the writer lock
    through :meth:`writer_lock`.
    """

    def __init__(self, root: Path, config: StoreConfig, origin_ts: int | None):
        self.root = root
        self.config = config
        self.origin_ts = origin_ts

    # --- paths ---------------------------------------------------------

    @property
    def base(self) -> Path:
        return self.root / self.config.log_name

    def _manifest_path(self) -> Path:
        return self.base / "manifest.json"

    def _registry_path(self) -> Path:
        return self.base / "registry.json"

    def interval_name(self, start: int) -> str:
        return f"{start}-{start + self.config.split_ms}"

    def interval_of(self, ts: int) -> tuple[int, int]:
        """Half-open segment interval containing ts, aligned to the origin."""
        if self.origin_ts is None:
            raise StoreError("store has no indexed events yet")
        split = self.config.split_ms
        k = (ts - self.origin_ts) // split
        start = self.origin_ts + k * split
        return (start, start + split)

    def trace_range_name(self, seq_no: int) -> str:
        lo = (seq_no // self.config.trace_split) * self.config.trace_split
        return f"{lo}-{lo + self.config.trace_split}"

    def index_segment_path(self, interval_start: int, first_type: str) -> Path:
        return self.base / "index" / self.interval_name(interval_start) / f"{_safe_name(first_type)}.seg"

    def single_segment_path(self, interval_start: int, event_type: str) -> Path:
        return self.base / "single" / self.interval_name(interval_start) / f"{_safe_name(event_type)}.seg"

    def seq_segment_path(self, range_name: str) -> Path:
        return self.base / "seq" / f"{range_name}.seg"

    def last_segment_path(self, range_name: str) -> Path:
        return self.base / "last" / f"{range_name}.seg"

    def count_segment_path(self) -> Path:
        return self.base / "count" / "all.seg"

    # --- manifest / registry --------------------------------------------

    def _write_manifest(self) -> None:
        doc = asdict(self.config)
        doc["origin_ts"] = self.origin_ts
        _atomic_write_json(self._manifest_path(), doc)

    def set_origin(self, origin_ts: int) -> None:
        if self.origin_ts is not None:
            raise StoreError("origin is already set")
        self.origin_ts = origin_ts
        self._write_manifest()

    def read_registry(self) -> dict[str, dict]:
        try:
            with open(self._registry_path(), "r", encoding="utf-8") as fh:
                return json.load(fh)["traces"]
        except FileNotFoundError:
            return {}

    def write_registry(self, traces: dict[str, dict]) -> None:
        _atomic_write_json(self._registry_path(), {"traces": traces})

    def writer_lock(self) -> FileLock:
        self.base.mkdir(parents=True, exist_ok=True)
        return FileLock(self.base / ".lock", timeout=10)

    # --- segment enumeration ---------------------------------------------

    def _intervals(self, table_dir: str) -> list[tuple[int, int]]:
        base = self.base / table_dir
        out = []
        if base.is_dir():
            for name in os.listdir(base):
                try:
                    start, end = name.split("-")
                    out.append((int(start), int(end)))
                except ValueError:
                    continue
        return sorted(out)

    def _intersecting(self, table_dir: str, window: tuple[int, int] | None) -> list[tuple[int, int]]:
        intervals = self._intervals(table_dir)
        if window is None:
            return intervals
        lo, hi = window
        return [(s, e) for (s, e) in intervals if s <= hi and e > lo]

    def _trace_ranges(self, table_dir: str) -> list[str]:
        base = self.base / table_dir
        if not base.is_dir():
            return []
        return sorted(p.stem for p in base.glob("*.seg"))

    # --- readers ---------------------------------------------------------

    def read_segment(self, table: str, path: Path) -> list[tuple]:
        return read_segment_file(path, table, self.config.compression)

    def read_inverted_list(self, et: TypePair, window: tuple[int, int] | None = None) -> list[EventPair]:
        """All indexed pairs of ``et``, ordered by (trace_id, second).

        With a window, only segments whose interval intersects it are read;
        entries are not filtered further. In pos mode the stored values are
        positions, so the window cannot narrow segment selection and all
        segments are read.
        """
        if self.config.mode == "pos":
            window = None
        out: list[EventPair] = []
        for start, _end in self._intersecting("index", window):
            path = self.index_segment_path(start, et.first)
            for first, second, trace, a, b in self.read_segment("index", path):
                if first == et.first and second == et.second:
                    if self.config.mode == "ts":
                        out.append(EventPair(trace_id=trace, first_ts=a, second_ts=b))
                    else:
                        out.append(EventPair(trace_id=trace, first_pos=a, second_pos=b))
        if self.config.mode == "ts":
            out.sort(key=lambda p: (p.trace_id, p.second_ts, p.first_ts))
        else:
            out.sort(key=lambda p: (p.trace_id, p.second_pos, p.first_pos))
        return out

    def read_singles(self, event_type: str, window: tuple[int, int] | None = None) -> list[tuple[str, int, int]]:
        """All (trace_id, ts, pos) occurrences of one type, ts-ordered."""
        out = []
        for start, _end in self._intersecting("single", window):
            path = self.single_segment_path(start, event_type)
            for etype, trace, ts, pos in self.read_segment("single", path):
                if etype == event_type:
                    out.append((trace, ts, pos))
        out.sort(key=lambda r: (r[0], r[1]))
        return out

    def single_types(self) -> set[str]:
        """Every event type that has been indexed."""
        out: set[str] = set()
        for start, _end in self._intervals("single"):
            seg_dir = self.base / "single" / self.interval_name(start)
            for p in seg_dir.glob("*.seg"):
                out.add(_unsafe_name(p.stem))
        return out

    def read_sequences(self, trace_ids) -> dict[str, Trace]:
        """The requested traces that exist; missing ids are absent."""
        registry = self.read_registry()
        wanted: dict[str, list[str]] = {}
        for tid in trace_ids:
            meta = registry.get(tid)
            if meta is not None:
                wanted.setdefault(self.trace_range_name(meta["seq"]), []).append(tid)
        out: dict[str, Trace] = {}
        for range_name, tids in wanted.items():
            tid_set = set(tids)
            path = self.seq_segment_path(range_name)
            for trace, events in self.read_segment("seq", path):
                if trace in tid_set:
                    evs = tuple(
                        Event(trace_id=trace, event_type=t, ts=ts, pos=i)
                        for i, (t, ts) in enumerate(events, start=1)
                    )
                    out[trace] = Trace(trace_id=trace, events=evs)
        return out

    def all_trace_ids(self) -> list[str]:
        return sorted(self.read_registry())

    def read_last_completed(self, range_name: str) -> dict[tuple[TypePair, str], int]:
        path = self.last_segment_path(range_name)
        return {
            (TypePair(first, second), trace): ts_last
            for first, second, trace, ts_last in self.read_segment("last", path)
        }

    def read_pair_stats(self) -> dict[TypePair, CountRecord]:
        out = {}
        for first, second, total, total_sum, lo, hi in self.read_segment("count", self.count_segment_path()):
            et = TypePair(first, second)
            out[et] = CountRecord(et, total, total_sum, lo, hi)
        return out

    # --- writer ----------------------------------------------------------

    def rewrite_segment(self, table: str, path: Path, records: list[tuple]) -> None:
        """Replace one segment atomically; readers never see partial files."""
        write_segment_file(path, table, records, self.config.compression)

    # --- audits ----------------------------------------------------------

    def audit(self) -> list[str]:
        """Full-scan consistency audit; returns a list of problems (empty = ok).

        Checks interval containment of every indexed pair, watermark
        consistency against the pair index, and count-table agreement with a
        recomputation of every inverted list.
        """
        problems: list[str] = []
        mode = self.config.mode
        seq_cache: dict[str, Trace] = {}

        def trace_for(tid: str) -> Trace | None:
            if tid not in seq_cache:
                seq_cache.update(self.read_sequences([tid]))
            return seq_cache.get(tid)

        # pair index: interval containment + per-pair aggregation
        per_pair: dict[TypePair, list[tuple[str, int, int]]] = {}
        seen: set[tuple] = set()
        for start, end in self._intervals("index"):
            seg_dir = self.base / "index" / self.interval_name(start)
            for seg in seg_dir.glob("*.seg"):
                for first, second, trace, a, b in self.read_segment("index", seg):
                    key = (first, second, trace, a, b)
                    if key in seen:
                        problems.append(f"duplicate pair record {key}")
                    seen.add(key)
                    if mode == "ts":
                        first_ts, second_ts = a, b
                    else:
                        t = trace_for(trace)
                        if t is None or b > len(t.events) or a < 1:
                            problems.append(f"pair {key} references missing events")
                            continue
                        first_ts = t.events[a - 1].ts
                        second_ts = t.events[b - 1].ts
                    if not (start <= second_ts < end):
                        problems.append(
                            f"pair {key} completes at {second_ts} outside [{start},{end})"
                        )
                    per_pair.setdefault(TypePair(first, second), []).append(
                        (trace, first_ts, second_ts)
                    )

        # watermarks: max completion per (pair, trace)
        expected_last: dict[tuple[TypePair, str], int] = {}
        for et, entries in per_pair.items():
            for trace, _first_ts, second_ts in entries:
                key = (et, trace)
                if second_ts > expected_last.get(key, -(1 << 62)):
                    expected_last[key] = second_ts
        stored_last: dict[tuple[TypePair, str], int] = {}
        for range_name in self._trace_ranges("last"):
            stored_last.update(self.read_last_completed(range_name))
        if stored_last != expected_last:
            for key in set(stored_last) ^ set(expected_last):
                problems.append(f"watermark mismatch for {key}")
            for key in set(stored_last) & set(expected_last):
                if stored_last[key] != expected_last[key]:
                    problems.append(
                        f"watermark {key}: stored {stored_last[key]}, expected {expected_last[key]}"
                    )

        # counts: recompute duration stats from the inverted lists
        stats = self.read_pair_stats()
        if set(stats) != set(per_pair):
            for et in set(stats) ^ set(per_pair):
                problems.append(f"count table and pair index disagree on {et}")
        for et in set(stats) & set(per_pair):
            durations = [s - f for _t, f, s in per_pair[et]]
            rec = stats[et]
            if (
                rec.total_completions != len(durations)
                or rec.sum_durations != sum(durations)
                or rec.min_duration != min(durations)
                or rec.max_duration != max(durations)
            ):
                problems.append(f"count record mismatch for {et}")
        return problems

    # --- debug dump -------------------------------------------------------

    def dump_records(self, table: str):
        """Yield every record of one table as a JSON-ready dict."""
        if table == "index":
            for start, _end in self._intervals("index"):
                seg_dir = self.base / "index" / self.interval_name(start)
                for seg in sorted(seg_dir.glob("*.seg")):
                    for first, second, trace, a, b in self.read_segment("index", seg):
                        yield {
                            "interval": self.interval_name(start),
                            "pair": [first, second],
                            "trace_id": trace,
                            "first": a,
                            "second": b,
                        }
        elif table == "single":
            for start, _end in self._intervals("single"):
                seg_dir = self.base / "single" / self.interval_name(start)
                for seg in sorted(seg_dir.glob("*.seg")):
                    for etype, trace, ts, pos in self.read_segment("single", seg):
                        yield {
                            "interval": self.interval_name(start),
                            "event_type": etype,
                            "trace_id": trace,
                            "ts": ts,
                            "pos": pos,
                        }
        elif table == "seq":
            for range_name in self._trace_ranges("seq"):
                for trace, events in self.read_segment("seq", self.seq_segment_path(range_name)):
                    yield {"range": range_name, "trace_id": trace, "events": events}
        elif table == "last":
            for range_name in self._trace_ranges("last"):
                for first, second, trace, ts_last in self.read_segment(
                    "last", self.last_segment_path(range_name)
                ):
                    yield {
                        "range": range_name,
                        "pair": [first, second],
                        "trace_id": trace,
                        "ts_last": ts_last,
                    }
        elif table == "count":
            for first, second, total, total_sum, lo, hi in self.read_segment(
                "count", self.count_segment_path()
            ):
                yield {
                    "pair": [first, second],
                    "total_completions": total,
                    "sum_durations": total_sum,
                    "min_duration": lo,
                    "max_duration": hi,
                }
        else:
            raise ValueError(f"unknown table {table!r}")

    def summary(self) -> dict:
        doc = asdict(self.config)
        doc["origin_ts"] = self.origin_ts
        doc["traces"] = len(self.read_registry())
        tables = {}
        for table in ("index", "single"):
            files = records = 0
            for start, _end in self._intervals(table):
                seg_dir = self.base / table / self.interval_name(start)
                for seg in seg_dir.glob("*.seg"):
                    files += 1
                    records += len(self.read_segment(table, seg))
            tables[table] = {"segments": files, "records": records}
        for table in ("seq", "last"):
            ranges = self._trace_ranges(table)
            records = 0
            for rn in ranges:
                path = self.base / table / f"{rn}.seg"
                records += len(self.read_segment(table, path))
            tables[table] = {"segments": len(ranges), "records": records}
        tables["count"] = {
            "segments": 1 if self.count_segment_path().exists() else 0,
            "records": len(self.read_segment("count", self.count_segment_path())),
        }
        doc["tables"] = tables
        return doc


def _atomic_write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def open_store(root: str | Path, log_name: str, config: StoreConfig | None = None) -> Store:
    """Open or create the log database ``log_name`` under ``root``.

    A fresh store writes a manifest from ``config`` (defaults apply when
    omitted). Opening an existing store with a config that differs from the
    manifest is rejected; none of the indexing parameters may change once
    data exists.
    """
    root = Path(root)
    manifest_path = root / log_name / "manifest.json"
    if manifest_path.exists():
        with open(manifest_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        origin_ts = doc.pop("origin_ts", None)
        existing = StoreConfig(**doc)
        if config is not None and config != existing:
            diffs = [
                f
                for f in ("log_name", "mode", "split_every_days", "trace_split", "lookback", "compression")
                if getattr(config, f) != getattr(existing, f)
            ]
            raise StoreError(
                f"config mismatch with existing manifest (differs on: {', '.join(diffs)})"
            )
        return Store(root, existing, origin_ts)
    if config is None:
        config = StoreConfig(log_name=log_name)
    elif config.log_name != log_name:
        raise StoreError("config.log_name does not match log_name")
    store = Store(root, config, None)
    store.base.mkdir(parents=True, exist_ok=True)
    store._write_manifest()
    return store
