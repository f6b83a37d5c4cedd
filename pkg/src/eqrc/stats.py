"""Estimators over runs of measurement records.

Pair-product expectations, single-wing marginals, and the triple tables
obtained by appending a hypothetical constant third column to a measured
pair. Accumulation uses exact int64 sums of ±1 data, so results are
independent of summation order and reproducible bit-for-bit; parallel
partial tallies merge exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import GaugeKey, MeasurementRecord, PairStream, Setting, gauge_eval

__all__ = [
    "ExpectationEstimate",
    "TripleTable",
    "TRIPLE_KINDS",
    "RecordMatchError",
    "match_records",
    "estimate_expectation",
    "estimate_marginals",
    "build_triple_table",
]

TRIPLE_KINDS = ("abc'", "ab'c")


class RecordMatchError(ValueError):
    """A pair index lacks its partner record (or appears twice on one side)."""


@dataclass(frozen=True)
class ExpectationEstimate:
    """Sample mean of ±1 data with its normal-approximation standard error."""

    value: float
    n_samples: int
    std_error: float

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if abs(self.value) > 1.0:
            raise ValueError(f"a ±1 mean cannot exceed 1 in magnitude, got {self.value}")


def _estimate_from_pm1(values: np.ndarray) -> ExpectationEstimate:
    n = int(values.size)
    total = int(np.sum(values, dtype=np.int64))
    value = total / n
    var = max(0.0, 1.0 - value * value)
    return ExpectationEstimate(value=value, n_samples=n, std_error=math.sqrt(var / n))


def match_records(records: Iterable[MeasurementRecord]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Join a mixed L/R record sequence on pair index.

    Returns (pair_index, left, right) arrays sorted by index. Every index
    must occur exactly once per station; anything unmatched raises a
    RecordMatchError naming the offending index; silent drops would mask
    exactly the pairing bugs this code exists to expose.
    """
    left: dict[int, int] = {}
    right: dict[int, int] = {}
    for rec in records:
        side = left if rec.station == "L" else right
        if rec.pair_index in side:
            raise RecordMatchError(f"duplicate {rec.station} record for pair index {rec.pair_index}")
        side[rec.pair_index] = rec.outcome
    for n in left:
        if n not in right:
            raise RecordMatchError(f"pair index {n} has no R record")
    for n in right:
        if n not in left:
            raise RecordMatchError(f"pair index {n} has no L record")
    idx = np.array(sorted(left), dtype=np.int64)
    l_arr = np.array([left[int(n)] for n in idx], dtype=np.int8)
    r_arr = np.array([right[int(n)] for n in idx], dtype=np.int8)
    return idx, l_arr, r_arr


def _as_matched_arrays(records) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Fast path: anything exposing matched outcome arrays (e.g. a run group).
    if hasattr(records, "pair_index") and hasattr(records, "left") and hasattr(records, "right"):
        return (
            np.asarray(records.pair_index, dtype=np.int64),
            np.asarray(records.left, dtype=np.int8),
            np.asarray(records.right, dtype=np.int8),
        )
    records = list(records)
    if records and isinstance(records[0], tuple):
        flat: list[MeasurementRecord] = []
        for pair in records:
            flat.extend(pair)
        records = flat
    return match_records(records)


def estimate_expectation(records) -> ExpectationEstimate:
    """Mean of left×right products over matched pairs.

    Accepts a run group (array-backed), a flat L/R record sequence, or a
    sequence of (left, right) record tuples.
    """
    _, l_arr, r_arr = _as_matched_arrays(records)
    if l_arr.size == 0:
        raise ValueError("no records to estimate from")
    return _estimate_from_pm1(l_arr.astype(np.int64) * r_arr)


def estimate_marginals(records) -> tuple[ExpectationEstimate, ExpectationEstimate]:
    """Single-wing means (left, right) over the same matched pairs."""
    _, l_arr, r_arr = _as_matched_arrays(records)
    if l_arr.size == 0:
        raise ValueError("no records to estimate from")
    return _estimate_from_pm1(l_arr), _estimate_from_pm1(r_arr)


@dataclass(frozen=True)
class TripleTable:
    """Counts over the eight sign patterns of one appended-column triple.

    Taken alone it is a valid probability table: all eight cells are
    present and sum to the total. Tables of different kinds built from
    the same events generally disagree; each triple carries its own
    measure.
    """

    kind: str
    counts: dict[tuple[int, int, int], int]
    total: int

    def __post_init__(self) -> None:
        cells = [(s1, s2, s3) for s1 in (1, -1) for s2 in (1, -1) for s3 in (1, -1)]
        if sorted(self.counts) != sorted(cells):
            raise ValueError("triple table must carry all eight sign-pattern cells")
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("cell counts must be nonnegative")
        if sum(self.counts.values()) != self.total:
            raise ValueError("cell counts must sum to the total")
        if self.total < 1:
            raise ValueError("total must be >= 1")

    def fraction(self, pattern: tuple[int, int, int]) -> float:
        return self.counts[pattern] / self.total


def build_triple_table(
    kind: str,
    events: PairStream,
    key: GaugeKey,
    settings: Sequence[Setting],
) -> TripleTable:
    """Tally the triple obtained from one measured pair plus a constant column.

    With settings (a, b, c): kind ``abc'`` uses columns
    (A(a), A(b), +1) and kind ``ab'c`` uses (A(a), A(c), +1), where
    A(a) is the left outcome, A(x) is the sign-flipped right outcome at x
    evaluated with the *same* gauge as the first column, and the appended
    hypothetical column stays at +1 and never carries the gauge. Only
    this construction reproduces the distinct per-triple measures.
    """
    if kind not in TRIPLE_KINDS:
        raise ValueError(f"kind must be one of {TRIPLE_KINDS}, got {kind!r}")
    a, b, c = settings
    for x, y in ((a, b), (a, c), (b, c)):
        if x.close_to(y):
            raise ValueError("the three settings must be pairwise distinct")
    if len(events) == 0:
        raise ValueError("no events to tally")

    partner = b if kind == "abc'" else c
    g = np.asarray(gauge_eval(key, events.t), dtype=np.int8)
    col1 = g
    # A(x) = -B(x): +g below the threshold of x, -g above.
    flip = events.lam <= 0.5 * (1.0 + partner.b2)
    col2 = np.where(flip, g, -g).astype(np.int8)

    # Encode (s1, s2, +1) as a 2-bit cell index and tally.
    idx = ((col1 > 0).astype(np.int64) << 1) | (col2 > 0).astype(np.int64)
    tally = np.bincount(idx, minlength=4)
    counts: dict[tuple[int, int, int], int] = {}
    for s1 in (1, -1):
        for s2 in (1, -1):
            cell = int(tally[((s1 > 0) << 1) | (s2 > 0)])
            counts[(s1, s2, 1)] = cell
            counts[(s1, s2, -1)] = 0
    return TripleTable(kind=kind, counts=counts, total=len(events))
