"""logsieve: an embedded event-log index and pattern-detection engine.

Event logs are ingested incrementally into inverted indices over pairs of
event types; pattern queries (with Kleene closure, negation, alternatives,
and time/gap constraints) are answered by pruning candidate traces through
those indices and validating the survivors with a small matching automaton.
Non-matching traces can be explained by the cheapest timestamp modification
that would have made them match.
"""

from .model import (
    Constraint,
    Event,
    EventPair,
    Occurrence,
    Operator,
    QueryEvent,
    Trace,
    TypePair,
    make_trace,
    pairs_overlap,
    validate_trace,
)
from .query import ExplainParams, Query, QueryError, parse_pattern, parse_query_json, parse_query_text
from .storage import CountRecord, SegmentFormatError, Store, StoreConfig, StoreError, open_store
from .indexer import (
    IngestBatch,
    IngestError,
    IngestReport,
    assign_intervals,
    extract_pairs,
    extract_pairs_for_trace,
    ingest,
    read_log_file,
    update_counts,
)
from .planner import (
    CandidateStream,
    PairSets,
    assemble_streams,
    compute_pair_sets,
    expand_or,
    prune,
    stats_query,
)
from .engine import (
    CompiledPattern,
    MatchPolicy,
    check_constraint,
    compile_pattern,
    match_stream,
    select_non_overlapping,
)
from .explainer import (
    ConsistencyReport,
    Explanation,
    ModifiedEvent,
    check_consistency,
    explain,
    generate_modified_stream,
)
from .pipeline import QueryResult, QueryTimings, run_query

__all__ = [
    "CandidateStream",
    "CompiledPattern",
    "ConsistencyReport",
    "Constraint",
    "CountRecord",
    "Event",
    "EventPair",
    "ExplainParams",
    "Explanation",
    "IngestBatch",
    "IngestError",
    "IngestReport",
    "MatchPolicy",
    "ModifiedEvent",
    "Occurrence",
    "Operator",
    "PairSets",
    "Query",
    "QueryError",
    "QueryEvent",
    "QueryResult",
    "QueryTimings",
    "SegmentFormatError",
    "Store",
    "StoreConfig",
    "StoreError",
    "Trace",
    "TypePair",
    "assemble_streams",
    "assign_intervals",
    "check_consistency",
    "check_constraint",
    "compile_pattern",
    "compute_pair_sets",
    "expand_or",
    "explain",
    "extract_pairs",
    "extract_pairs_for_trace",
    "generate_modified_stream",
    "ingest",
    "make_trace",
    "match_stream",
    "open_store",
    "pairs_overlap",
    "parse_pattern",
    "parse_query_json",
    "parse_query_text",
    "prune",
    "read_log_file",
    "run_query",
    "select_non_overlapping",
    "stats_query",
    "update_counts",
    "validate_trace",
]

__version__ = "0.1.0"
