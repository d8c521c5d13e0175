import os

import pytest

from logsieve import (
    IngestBatch,
    StoreConfig,
    StoreError,
    TypePair,
    ingest,
    open_store,
)
from logsieve.storage import read_segment_file, write_segment_file

from helpers import build_store

DAY = 86_400_000


def test_open_empty_dir_creates_empty_store(tmp_path):
    store = open_store(tmp_path, "main")
    assert store.read_registry() == {}
    assert store.read_pair_stats() == {}
    assert (tmp_path / "main" / "manifest.json").exists()


def test_reopen_preserves_contents(tmp_path):
    store = build_store(tmp_path, [("t1", "A", 1000), ("t1", "B", 2000)])
    again = open_store(tmp_path, "main")
    assert again.config == store.config
    assert [p.trace_id for p in again.read_inverted_list(TypePair("A", "B"))] == ["t1"]


def test_reopen_with_changed_mode_rejected(tmp_path):
    open_store(tmp_path, "main", StoreConfig(log_name="main", mode="pos"))
    with pytest.raises(StoreError, match="mode"):
        open_store(tmp_path, "main", StoreConfig(log_name="main", mode="ts"))


def test_reopen_with_changed_lookback_rejected(tmp_path):
    open_store(tmp_path, "main", StoreConfig(log_name="main", lookback=30))
    with pytest.raises(StoreError, match="lookback"):
        open_store(tmp_path, "main", StoreConfig(log_name="main", lookback=7))


@pytest.mark.parametrize(
    "table,records",
    [
        ("index", [("A", "B", "t1", 10, 20), ("A", "A", "t2", 5, 9)]),
        ("single", [("A", "t1", 10, 1), ("A", "t2", 30, 4)]),
        ("seq", [("t1", [("A", 10), ("B", 20)]), ("t2", [("C", 5)])]),
        ("last", [("A", "B", "t1", 20)]),
        ("count", [("A", "B", 2, 40, 10, 30)]),
    ],
)
@pytest.mark.parametrize("compression", ["none", "deflate"])
def test_segment_round_trip(tmp_path, table, records, compression):
    path = tmp_path / "seg.seg"
    write_segment_file(path, table, records, compression)
    assert sorted(read_segment_file(path, table, compression)) == sorted(records)


def test_rewrite_identical_contents_is_byte_identical(tmp_path):
    path = tmp_path / "seg.seg"
    records = [("A", "B", "t2", 7, 9), ("A", "B", "t1", 1, 3)]
    write_segment_file(path, "index", records, "none")
    first = path.read_bytes()
    write_segment_file(path, "index", list(reversed(records)), "none")
    assert path.read_bytes() == first


def test_rewrite_appends_and_keeps_sorted(tmp_path):
    path = tmp_path / "seg.seg"
    write_segment_file(path, "index", [("A", "B", "t1", 1, 3), ("A", "B", "t1", 5, 8)], "none")
    merged = read_segment_file(path, "index", "none")
    merged.append(("A", "B", "t1", 4, 6))
    write_segment_file(path, "index", merged, "none")
    out = read_segment_file(path, "index", "none")
    assert out == [("A", "B", "t1", 1, 3), ("A", "B", "t1", 4, 6), ("A", "B", "t1", 5, 8)]


def test_crash_between_temp_write_and_rename_keeps_old_segment(tmp_path, monkeypatch):
    path = tmp_path / "seg.seg"
    write_segment_file(path, "count", [("A", "B", 1, 5, 5, 5)], "none")
    before = path.read_bytes()

    def boom(src, dst):
        raise OSError("simulated crash")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        write_segment_file(path, "count", [("A", "B", 9, 9, 9, 9)], "none")
    monkeypatch.undo()
    assert path.read_bytes() == before
    assert not list(tmp_path.glob("*.tmp"))


def test_read_inverted_list_after_single_pair(tmp_path):
    store = build_store(tmp_path, [("t1", "A", 1000), ("t1", "B", 2000)])
    pairs = store.read_inverted_list(TypePair("A", "B"))
    assert [(p.trace_id, p.first_ts, p.second_ts) for p in pairs] == [("t1", 1000, 2000)]


def test_read_inverted_list_unknown_pair_is_empty(tmp_path):
    store = build_store(tmp_path, [("t1", "A", 1000), ("t1", "B", 2000)])
    assert store.read_inverted_list(TypePair("Z", "Z")) == []


def test_windowed_read_returns_only_intersecting_segments(tmp_path):
    # two one-day segments: pairs completing on day 0 vs day 2
    rows = [
        ("t1", "A", 0), ("t1", "B", 3_600_000),
        ("t2", "A", 2 * DAY), ("t2", "B", 2 * DAY + 3_600_000),
    ]
    store = build_store(tmp_path, rows, split_every_days=1)
    window = (2 * DAY, 3 * DAY - 1)
    pairs = store.read_inverted_list(TypePair("A", "B"), window)
    assert [p.trace_id for p in pairs] == ["t2"]
    assert len(store.read_inverted_list(TypePair("A", "B"))) == 2


def test_read_sequences_present_and_missing(tmp_path):
    store = build_store(tmp_path, [("t1", "A", 1), ("t1", "B", 2)])
    out = store.read_sequences(["t1", "t99"])
    assert set(out) == {"t1"}
    assert [(ev.event_type, ev.ts, ev.pos) for ev in out["t1"].events] == [
        ("A", 1, 1),
        ("B", 2, 2),
    ]


def test_read_sequences_spanning_partitions(tmp_path):
    rows = [("t1", "A", 1), ("t2", "B", 2), ("t3", "C", 3)]
    store = build_store(tmp_path, rows, trace_split=1)
    assert len(store._trace_ranges("seq")) == 3
    out = store.read_sequences(["t1", "t3"])
    assert set(out) == {"t1", "t3"}


def test_pos_mode_persists_positions_not_timestamps(tmp_path):
    store = build_store(tmp_path, [("t1", "A", 1000), ("t1", "B", 2000)], mode="pos")
    (pair,) = store.read_inverted_list(TypePair("A", "B"))
    assert (pair.first_pos, pair.second_pos) == (1, 2)
    assert (pair.first_ts, pair.second_ts) == (0, 0)


def test_deflate_store_round_trips(tmp_path):
    store = build_store(
        tmp_path, [("t1", "A", 1000), ("t1", "B", 2000)], compression="deflate"
    )
    (pair,) = store.read_inverted_list(TypePair("A", "B"))
    assert (pair.first_ts, pair.second_ts) == (1000, 2000)
    assert store.audit() == []


def test_audit_clean_after_ingest(tmp_path):
    rows = [
        ("t1", "A", 1000), ("t1", "B", 2000), ("t1", "A", 3000),
        ("t2", "B", 1500), ("t2", "B", 2500),
    ]
    store = build_store(tmp_path, rows)
    assert store.audit() == []


def test_audit_detects_tampered_counts(tmp_path):
    store = build_store(tmp_path, [("t1", "A", 1000), ("t1", "B", 2000)])
    path = store.count_segment_path()
    store.rewrite_segment("count", path, [("A", "B", 7, 7, 7, 7)])
    assert any("count" in p for p in store.audit())


def test_writer_lock_blocks_second_writer(tmp_path):
    store = build_store(tmp_path, [("t1", "A", 1)])
    from filelock import Timeout, FileLock

    with store.writer_lock():
        second = FileLock(store.base / ".lock", timeout=0.05)
        with pytest.raises(Timeout):
            second.acquire()


def test_manifest_layout_matches_documented_paths(tmp_path):
    store = build_store(tmp_path, [("t1", "A", 0), ("t1", "B", 1000)])
    base = tmp_path / "main"
    assert (base / "manifest.json").exists()
    assert list((base / "index").glob("*/A.seg"))
    assert list((base / "single").glob("*/A.seg"))
    assert list((base / "seq").glob("*.seg"))
    assert list((base / "last").glob("*.seg"))
    assert (base / "count" / "all.seg").exists()
    ingest(store, IngestBatch.from_rows([("t1", "C", 2000)]))
    assert store.audit() == []
