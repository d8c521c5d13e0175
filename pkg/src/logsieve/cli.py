"""Command-line surface: index, query, stats, check, gen, inspect.

Exit codes: 0 success, 1 user error (bad query or input), 2 store
corruption, 3 internal error. All structured output is JSON; ``--format
table`` renders a few human-oriented views instead. The store root defaults
to the LOGSIEVE_ROOT environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .explainer import check_consistency
from .gen import GenSpec, write_csv
from .indexer import IngestError, ingest, read_log_file
from .pipeline import run_query
from .planner import stats_query
from .query import Query, QueryError, parse_pattern, parse_query_json, parse_query_text
from .storage import SegmentFormatError, StoreConfig, StoreError, open_store

EXIT_OK = 0
EXIT_USER = 1
EXIT_CORRUPT = 2
EXIT_INTERNAL = 3


def _print_json(doc) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True))


def _add_store_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--root",
        default=os.environ.get("LOGSIEVE_ROOT"),
        help="store root directory (default: $LOGSIEVE_ROOT)",
    )
    p.add_argument("--format", choices=("json", "table"), default="json")


def _require_root(args) -> str:
    if not args.root:
        raise QueryError("no store root given (use --root or set LOGSIEVE_ROOT)")
    return args.root


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logsieve", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="ingest a log file into a store")
    _add_store_args(p)
    p.add_argument("--log", required=True, help="log database name (FROM clause)")
    p.add_argument("--input", required=True, help="CSV or JSON-lines log file")
    p.add_argument("--input-format", choices=("csv", "jsonl"), default=None)
    p.add_argument("--mode", choices=("ts", "pos"), default="ts")
    p.add_argument("--split-every-days", type=int, default=30)
    p.add_argument("--trace-split", type=int, default=10_000)
    p.add_argument("--lookback", type=int, default=30, help="days")
    p.add_argument("--compression", choices=("none", "deflate"), default="none")

    p = sub.add_parser("query", help="run a pattern-detection query")
    _add_store_args(p)
    q = p.add_mutually_exclusive_group(required=True)
    q.add_argument("--query-file", help="JSON query document")
    q.add_argument("--q", help="compact text form: FROM ... PATTERN ...")
    p.add_argument(
        "--no-check",
        action="store_true",
        help="skip the consistency check before executing",
    )

    p = sub.add_parser("stats", help="duration statistics for a simple pattern")
    _add_store_args(p)
    p.add_argument("--log", required=True)
    p.add_argument("--pattern", required=True, help="e.g. A;B;C")

    p = sub.add_parser("check", help="consistency-check a query without running it")
    _add_store_args(p)
    q = p.add_mutually_exclusive_group(required=True)
    q.add_argument("--query-file")
    q.add_argument("--q")

    p = sub.add_parser("gen", help="generate a synthetic log file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--traces", type=int, required=True)
    p.add_argument("--mean-length", type=int, required=True)
    p.add_argument("--alphabet", type=int, required=True)
    p.add_argument("--distribution", choices=("uniform", "powerlaw"), default="uniform")
    p.add_argument("--days", type=int, default=30)

    p = sub.add_parser("inspect", help="summarize a store or dump a table")
    _add_store_args(p)
    p.add_argument("--log", required=True)
    p.add_argument("--table", choices=("index", "single", "seq", "last", "count"))
    p.add_argument("--dump", action="store_true", help="dump records as JSON lines")
    p.add_argument("--audit", action="store_true", help="run the storage audit")
    return parser


def _load_query(args) -> Query:
    if args.query_file:
        try:
            with open(args.query_file, "r", encoding="utf-8") as fh:
                return parse_query_json(fh.read())
        except FileNotFoundError as exc:
            raise QueryError(f"query file not found: {exc.filename}") from exc
    return parse_query_text(args.q)


def _cmd_index(args) -> int:
    config = StoreConfig(
        log_name=args.log,
        mode=args.mode,
        split_every_days=args.split_every_days,
        trace_split=args.trace_split,
        lookback=args.lookback,
        compression=args.compression,
    )
    store = open_store(_require_root(args), args.log, config)
    batch = read_log_file(args.input, args.input_format)
    report = ingest(store, batch)
    _print_json(report.to_json())
    return EXIT_OK


def _cmd_query(args) -> int:
    query = _load_query(args)
    store = open_store(_require_root(args), query.log_name)
    if not args.no_check:
        report = check_consistency(store, query)
        if not report.consistent:
            _print_json({"error": "inconsistent query", **report.to_json()})
            return EXIT_USER
    result = run_query(store, query)
    doc = result.to_json()
    if args.format == "table":
        print(f"matches: {', '.join(result.matches) or '(none)'}")
        t = result.timings
        print(
            f"fetch+prune {t.fetch_prune_ms:.1f} ms, validation {t.validation_ms:.1f} ms, "
            f"explain {t.explain_ms:.1f} ms"
        )
        for e in result.explanations:
            print(f"explanation {e.trace_id}: cost {e.cost}")
    else:
        _print_json(doc)
    return EXIT_OK


def _cmd_stats(args) -> int:
    store = open_store(_require_root(args), args.log)
    pattern = [qe.event_type for qe in parse_pattern(args.pattern)]
    rows = stats_query(store, pattern)
    if args.format == "table":
        for row in rows:
            mark = "" if row["seen"] else "  (never indexed)"
            print(
                f"{row['pair'][0]} -> {row['pair'][1]}: n={row['total_completions']} "
                f"mean={row['mean_duration']:.1f} min={row['min_duration']} "
                f"max={row['max_duration']}{mark}"
            )
    else:
        _print_json(rows)
    return EXIT_OK


def _cmd_check(args) -> int:
    query = _load_query(args)
    store = open_store(_require_root(args), query.log_name)
    report = check_consistency(store, query)
    _print_json(report.to_json())
    return EXIT_OK if report.consistent else EXIT_USER


def _cmd_gen(args) -> int:
    spec = GenSpec(
        seed=args.seed,
        traces=args.traces,
        mean_length=args.mean_length,
        alphabet=args.alphabet,
        distribution=args.distribution,
        days=args.days,
    )
    rows = write_csv(spec, args.out)
    _print_json({"out": args.out, "events": rows, "traces": args.traces})
    return EXIT_OK


def _cmd_inspect(args) -> int:
    store = open_store(_require_root(args), args.log)
    if args.dump:
        if not args.table:
            raise QueryError("--dump requires --table")
        for record in store.dump_records(args.table):
            print(json.dumps(record, sort_keys=True))
        return EXIT_OK
    if args.audit:
        problems = store.audit()
        _print_json({"ok": not problems, "problems": problems})
        return EXIT_OK if not problems else EXIT_CORRUPT
    _print_json(store.summary())
    return EXIT_OK


_COMMANDS = {
    "index": _cmd_index,
    "query": _cmd_query,
    "stats": _cmd_stats,
    "check": _cmd_check,
    "gen": _cmd_gen,
    "inspect": _cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (QueryError, IngestError, StoreError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except SegmentFormatError as exc:
        print(f"store corruption: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
