"""Synthetic event-log generation, deterministic by seed.

Trace ids are plain integers (as strings) so generated logs work with the
GROUPS clause. Event types are drawn either uniformly or from a Zipf
distribution truncated to the alphabet; timestamps start at a per-trace
offset and advance by random strides, staying strictly increasing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ZIPF_EXPONENT = 1.5
MS_PER_DAY = 86_400_000


@dataclass(frozen=True)
class GenSpec:
    seed: int
    traces: int
    mean_length: int
    alphabet: int
    distribution: str = "uniform"  # | "powerlaw"
    days: int = 30
    start_ts: int = 1_600_000_000_000

    def __post_init__(self) -> None:
        if self.distribution not in ("uniform", "powerlaw"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if min(self.traces, self.mean_length, self.alphabet, self.days) < 1:
            raise ValueError("traces, mean_length, alphabet, and days must be >= 1")


def _zipf_truncated(rng: np.random.Generator, n: int, alphabet: int) -> np.ndarray:
    out = np.empty(n, dtype=np.int64)
    filled = 0
    while filled < n:
        draw = rng.zipf(ZIPF_EXPONENT, size=(n - filled) * 2)
        draw = draw[draw <= alphabet]
        take = min(len(draw), n - filled)
        out[filled : filled + take] = draw[:take] - 1
        filled += take
    return out


def generate_rows(spec: GenSpec):
    """Yield (trace_id, event_type, ts) rows for one synthetic log."""
    rng = np.random.default_rng(spec.seed)
    lengths = np.maximum(1, rng.poisson(spec.mean_length, size=spec.traces))
    for t in range(spec.traces):
        n = int(lengths[t])
        if spec.distribution == "uniform":
            type_ids = rng.integers(0, spec.alphabet, size=n)
        else:
            type_ids = _zipf_truncated(rng, n, spec.alphabet)
        # spread trace starts across the requested day span
        day = int(rng.integers(0, spec.days))
        ts = spec.start_ts + day * MS_PER_DAY + int(rng.integers(0, MS_PER_DAY // 2))
        trace_id = str(t + 1)
        for i in range(n):
            yield (trace_id, f"act_{int(type_ids[i])}", ts)
            ts += int(rng.integers(1_000, 600_000))


def write_csv(spec: GenSpec, path: str | Path) -> int:
    """Write the log as CSV (trace_id,event_type,timestamp); returns row count."""
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trace_id", "event_type", "timestamp"])
        for row in generate_rows(spec):
            writer.writerow(row)
            count += 1
    return count
