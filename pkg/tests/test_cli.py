import json

import pytest

from logsieve.cli import main

MIN = 60_000


@pytest.fixture()
def log_file(tmp_path):
    path = tmp_path / "day1.csv"
    lines = ["trace_id,event_type,timestamp"]
    rows = [
        ("t1", "A", 1_000), ("t1", "B", 2_000), ("t1", "A", 3_000), ("t1", "B", 4_000),
        ("t2", "A", 1_500), ("t2", "B", 2_500), ("t2", "C", 3_500),
    ]
    lines += [f"{t},{e},{ts}" for t, e, ts in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, out


def test_index_then_query(tmp_path, capsys, log_file):
    code, out = _run(
        capsys, "index", "--root", tmp_path, "--log", "main", "--input", log_file
    )
    assert code == 0
    report = json.loads(out)
    assert report["events_ingested"] == 7 and report["traces_touched"] == 2

    code, out = _run(capsys, "query", "--root", tmp_path, "--q", "FROM main PATTERN A;B;C")
    assert code == 0
    doc = json.loads(out)
    assert doc["matches"] == ["t2"]
    assert doc["occurrences"]["t2"][0][0][0]["type"] == "A"
    assert set(doc["timings"]) == {"fetch_prune_ms", "validation_ms", "explain_ms", "total_ms"}


def test_duplicate_reingest_fails_with_message(tmp_path, capsys, log_file):
    assert _run(capsys, "index", "--root", tmp_path, "--log", "main", "--input", log_file)[0] == 0
    code = main(["index", "--root", str(tmp_path), "--log", "main", "--input", str(log_file)])
    assert code == 1


def test_query_with_unknown_type_reports_and_fails(tmp_path, capsys, log_file):
    _run(capsys, "index", "--root", tmp_path, "--log", "main", "--input", log_file)
    code, out = _run(capsys, "query", "--root", tmp_path, "--q", "FROM main PATTERN A;Q")
    assert code == 1
    doc = json.loads(out)
    assert doc["unknown_types"] == ["Q"]


def test_explanation_through_cli(tmp_path, capsys):
    log = tmp_path / "sensors.csv"
    log.write_text(
        "trace_id,event_type,timestamp\nw,A,2000\nw,B,3000\nw,C,6000\n"
    )
    _run(capsys, "index", "--root", tmp_path, "--log", "plant", "--input", log)
    code, out = _run(
        capsys,
        "query",
        "--root",
        tmp_path,
        "--q",
        "FROM plant PATTERN B;A;C WHERE time within 2000 2 3 EXPLAIN-NON-ANSWERS 4000 1000 1000",
        "--no-check",
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["matches"] == []
    (explanation,) = doc["explanations"]
    assert explanation["cost"] == 3000
    assert [e["modified_ts"] for e in explanation["events"]] == [2000, 3000, 5000]


def test_stats_command(tmp_path, capsys, log_file):
    _run(capsys, "index", "--root", tmp_path, "--log", "main", "--input", log_file)
    code, out = _run(capsys, "stats", "--root", tmp_path, "--log", "main", "--pattern", "A;B;C")
    assert code == 0
    rows = json.loads(out)
    assert [r["pair"] for r in rows] == [["A", "B"], ["B", "C"]]


def test_check_command_exit_codes(tmp_path, capsys, log_file):
    _run(capsys, "index", "--root", tmp_path, "--log", "main", "--input", log_file)
    code, out = _run(capsys, "check", "--root", tmp_path, "--q", "FROM main PATTERN A;B")
    assert code == 0 and json.loads(out)["consistent"] is True
    code, out = _run(capsys, "check", "--root", tmp_path, "--q", "FROM main PATTERN A;Q")
    assert code == 1 and json.loads(out)["consistent"] is False


def test_gen_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["gen", "--seed", "1", "--traces", "20", "--mean-length", "5", "--alphabet", "6"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_powerlaw_skews_type_frequencies(tmp_path, capsys):
    out = tmp_path / "p.csv"
    assert (
        main(
            [
                "gen", "--seed", "7", "--traces", "200", "--mean-length", "20",
                "--alphabet", "30", "--distribution", "powerlaw", "--out", str(out),
            ]
        )
        == 0
    )
    from collections import Counter
    import csv as _csv

    with open(out) as fh:
        counts = Counter(row["event_type"] for row in _csv.DictReader(fh))
    freqs = sorted(counts.values(), reverse=True)
    median = freqs[len(freqs) // 2]
    assert freqs[0] >= 5 * median


def test_inspect_summary_and_dump(tmp_path, capsys, log_file):
    _run(capsys, "index", "--root", tmp_path, "--log", "main", "--input", log_file)
    code, out = _run(capsys, "inspect", "--root", tmp_path, "--log", "main")
    assert code == 0
    doc = json.loads(out)
    assert doc["tables"]["seq"]["records"] == 2

    code, out = _run(capsys, "inspect", "--root", tmp_path, "--log", "main", "--table", "count", "--dump")
    assert code == 0
    rows = [json.loads(line) for line in out.strip().splitlines()]
    assert all({"pair", "total_completions"} <= set(r) for r in rows)

    code, out = _run(capsys, "inspect", "--root", tmp_path, "--log", "main", "--audit")
    assert code == 0 and json.loads(out)["ok"] is True


def test_missing_root_is_user_error(capsys, monkeypatch):
    monkeypatch.delenv("LOGSIEVE_ROOT", raising=False)
    code = main(["query", "--q", "FROM m PATTERN A;B"])
    assert code == 1


def test_env_root_default(tmp_path, capsys, log_file, monkeypatch):
    monkeypatch.setenv("LOGSIEVE_ROOT", str(tmp_path))
    assert main(["index", "--log", "main", "--input", str(log_file)]) == 0
    capsys.readouterr()
    code, out = _run(capsys, "query", "--q", "FROM main PATTERN A;B;C")
    assert code == 0 and json.loads(out)["matches"] == ["t2"]


def test_config_mismatch_is_user_error(tmp_path, capsys, log_file):
    assert _run(capsys, "index", "--root", tmp_path, "--log", "main", "--input", log_file)[0] == 0
    code = main(
        ["index", "--root", str(tmp_path), "--log", "main", "--input", str(log_file), "--mode", "pos"]
    )
    assert code == 1


def test_jsonl_input(tmp_path, capsys):
    log = tmp_path / "log.jsonl"
    log.write_text(
        '{"trace_id": "t1", "event_type": "A", "timestamp": 100}\n'
        '{"trace_id": "t1", "event_type": "B", "timestamp": "1970-01-01T00:00:01Z"}\n'
    )
    code, out = _run(capsys, "index", "--root", tmp_path, "--log", "j", "--input", log)
    assert code == 0 and json.loads(out)["events_ingested"] == 2
