"""Statistics over admissible listening-test responses.

Implements the fooling-rate estimate (share of machine-or-human recordings a
rater labels ``human``), binomial confidence intervals (normal-approximation
by default, Wilson as an alternative), grouped tables with unweighted row
means, multi-select marker rates, MUSHRA score means, per-sample timing, and
rushed-response flagging.

Every function here is a deterministic pure function of its input multiset:
sums use :func:`math.fsum` (exact accumulation), so permuting the responses
can never change a result in the last bit.  Only responses with verified
full playback are admitted; an empty selection is always an error, never a
zero.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from statistics import NormalDist
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

from .core import (
    DEFAULT_MARKER_CATALOG,
    EarshotError,
    HfrResult,
    KindMismatchError,
    LABEL_HUMAN,
    MarkerCatalog,
    NoDataError,
    Origin,
    TestKind,
)

#: Exact column order of the results CSV; a stability contract.
CSV_COLUMNS = (
    "study_id",
    "rater_id",
    "session_id",
    "trial_id",
    "test_kind",
    "system",
    "utterance_id",
    "stimulus_id",
    "origin",
    "label",
    "markers",
    "mushra_score",
    "response_time_ms",
    "decision_time_ms",
    "playback_verified",
    "served_at",
    "responded_at",
)


class SchemaError(EarshotError):
    """Results CSV does not match the stability contract."""


@dataclass(frozen=True)
class Rating:
    """One admissible judgment joined with its stimulus metadata.

    Forced-choice kinds produce one Rating per trial; MUSHRA produces one
    per scored stimulus within the trial, all sharing the trial's timing.
    """

    study_id: str
    rater_id: str
    session_id: str
    trial_id: str
    test_kind: TestKind
    system: str
    utterance_id: str
    stimulus_id: str
    origin: Origin
    label: Optional[str]
    markers: frozenset[str]
    mushra_score: Optional[int]
    response_time_ms: int
    decision_time_ms: Optional[int]
    playback_verified: bool
    served_at: Optional[int] = None
    responded_at: Optional[int] = None

    def column(self, name: str) -> str:
        value = getattr(self, name)
        if isinstance(value, (TestKind, Origin)):
            return value.value
        return "" if value is None else str(value)


Predicate = Callable[[Rating], bool]
GroupKey = Union[str, Callable[[Rating], str]]


def _as_key(key: GroupKey) -> Callable[[Rating], str]:
    if callable(key):
        return key
    return lambda r: r.column(key)


class ResponseSet:
    """An immutable collection of admissible ratings.

    Construction silently drops rows without verified playback: by
    definition they are inadmissible and may never enter a statistic.
    """

    def __init__(self, ratings: Iterable[Rating]):
        self._ratings = tuple(r for r in ratings if r.playback_verified)

    def __len__(self) -> int:
        return len(self._ratings)

    def __iter__(self):
        return iter(self._ratings)

    @property
    def ratings(self) -> tuple[Rating, ...]:
        return self._ratings

    def filter(self, predicate: Predicate) -> "ResponseSet":
        return ResponseSet(r for r in self._ratings if predicate(r))

    def kinds(self) -> set[TestKind]:
        return {r.test_kind for r in self._ratings}

    @classmethod
    def from_csv(cls, source: Union[str, Path, io.TextIOBase]) -> "ResponseSet":
        """Parse a results CSV in the exact exported schema.

        Column drift raises :class:`SchemaError` naming the offending
        columns rather than guessing.
        """
        if isinstance(source, (str, Path)):
            with open(source, newline="", encoding="utf-8") as fh:
                return cls._from_reader(csv.reader(fh))
        return cls._from_reader(csv.reader(source))

    @classmethod
    def _from_reader(cls, reader) -> "ResponseSet":
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("results CSV is empty (no header row)") from None
        if tuple(header) != CSV_COLUMNS:
            missing = [c for c in CSV_COLUMNS if c not in header]
            extra = [c for c in header if c not in CSV_COLUMNS]
            problems = []
            if missing:
                problems.append(f"missing columns {missing}")
            if extra:
                problems.append(f"unexpected columns {extra}")
            if not problems:
                problems.append("columns out of order")
            raise SchemaError("results CSV schema drift: " + "; ".join(problems))
        ratings = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise SchemaError(f"line {line_no}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
            d = dict(zip(CSV_COLUMNS, row))
            try:
                ratings.append(
                    Rating(
                        study_id=d["study_id"],
                        rater_id=d["rater_id"],
                        session_id=d["session_id"],
                        trial_id=d["trial_id"],
                        test_kind=TestKind(d["test_kind"]),
                        system=d["system"],
                        utterance_id=d["utterance_id"],
                        stimulus_id=d["stimulus_id"],
                        origin=Origin(d["origin"]),
                        label=d["label"] or None,
                        markers=frozenset(m for m in d["markers"].split(";") if m),
                        mushra_score=int(d["mushra_score"]) if d["mushra_score"] else None,
                        response_time_ms=int(d["response_time_ms"]),
                        decision_time_ms=int(d["decision_time_ms"]) if d["decision_time_ms"] else None,
                        playback_verified=d["playback_verified"] == "true",
                        served_at=int(d["served_at"]) if d["served_at"] else None,
                        responded_at=int(d["responded_at"]) if d["responded_at"] else None,
                    )
                )
            except ValueError as e:
                raise SchemaError(f"line {line_no}: {e}") from None
        return cls(ratings)


# --- confidence intervals ---------------------------------------------------

CI_METHODS = ("wald", "wilson")


def z_value(confidence: float) -> float:
    """Two-sided standard-normal critical value, e.g. 1.959964 at 0.95."""
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must be in (0,1), got {confidence}")
    return NormalDist().inv_cdf((1.0 + confidence) / 2.0)


def compute_ci(
    estimate_pct: float,
    n: int,
    confidence: float = 0.95,
    method: str = "wald",
) -> tuple[float, float]:
    """Binomial CI for a percentage estimate over ``n`` admissible responses.

    ``wald`` is the normal-approximation interval: half-width
    z * 100 * sqrt(p(1-p)/n), endpoints clipped to [0, 100].  ``wilson``
    is the score interval, preferable at small n or extreme estimates.
    """
    if n < 1:
        raise NoDataError("confidence interval over zero responses")
    if not 0.0 <= estimate_pct <= 100.0:
        raise ValueError(f"estimate_pct must be in [0,100], got {estimate_pct}")
    z = z_value(confidence)
    p = estimate_pct / 100.0
    if method == "wald":
        half = z * 100.0 * math.sqrt(p * (1.0 - p) / n)
        return max(0.0, estimate_pct - half), min(100.0, estimate_pct + half)
    if method == "wilson":
        z2 = z * z
        denom = 1.0 + z2 / n
        center = (p + z2 / (2.0 * n)) / denom
        margin = (z / denom) * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n))
        low = max(0.0, 100.0 * (center - margin))
        high = min(100.0, 100.0 * (center + margin))
        # the score interval always contains the point estimate; guard the
        # invariant against last-bit rounding at the extremes
        return min(low, estimate_pct), max(high, estimate_pct)
    raise ValueError(f"unknown CI method {method!r}; expected one of {CI_METHODS}")


# --- fooling rate ------------------------------------------------------------


def _require_binary(ratings: Sequence[Rating]) -> None:
    bad = {r.test_kind for r in ratings if not r.test_kind.is_binary}
    if bad:
        raise KindMismatchError(f"fooling rate is undefined for {sorted(k.value for k in bad)} responses")


def compute_hfr(
    responses: ResponseSet,
    where: Optional[Predicate] = None,
    *,
    confidence: float = 0.95,
    ci_method: str = "wald",
) -> HfrResult:
    """Percentage of filtered responses labeled ``human``, with CI.

    The denominator is the count of admissible filtered responses.  An empty
    selection raises :class:`NoDataError`; MUSHRA responses in the selection
    raise :class:`KindMismatchError`.
    """
    rows = responses.ratings if where is None else tuple(r for r in responses if where(r))
    if not rows:
        raise NoDataError("no admissible responses match the filter")
    _require_binary(rows)
    n = len(rows)
    hits = sum(1 for r in rows if r.label == LABEL_HUMAN)
    estimate = (100.0 * hits) / n
    low, high = compute_ci(estimate, n, confidence, ci_method)
    return HfrResult(estimate_pct=estimate, n=n, ci_low_pct=low, ci_high_pct=high)


@dataclass(frozen=True)
class HfrTable:
    """Grid of fooling rates with an unweighted per-row mean column.

    ``cells[(row, col)]`` is None for an absent cell; absent cells are
    excluded from the row mean and must be rendered as absent, never zero.
    """

    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    cells: Mapping[tuple[str, str], Optional[HfrResult]]
    row_mu: Mapping[str, float]


def row_mean(estimates: Sequence[float]) -> float:
    """Unweighted arithmetic mean of cell estimates (never count-pooled)."""
    if not estimates:
        raise NoDataError("row mean of an empty row")
    return math.fsum(estimates) / len(estimates)


def hfr_table(
    responses: ResponseSet,
    row_key: GroupKey = "system",
    col_key: GroupKey = "study_id",
    *,
    confidence: float = 0.95,
    ci_method: str = "wald",
) -> HfrTable:
    """Group responses into (row, col) cells and compute the fooling rate per
    cell plus the unweighted mean of each row's present cells.

    Rows are ordered by descending mean; columns sort ascending.
    """
    if len(responses) == 0:
        raise NoDataError("no admissible responses")
    _require_binary(responses.ratings)
    rkey, ckey = _as_key(row_key), _as_key(col_key)
    groups: dict[tuple[str, str], list[Rating]] = {}
    for r in responses:
        groups.setdefault((rkey(r), ckey(r)), []).append(r)
    rows = sorted({rc[0] for rc in groups})
    cols = tuple(sorted({rc[1] for rc in groups}))
    cells: dict[tuple[str, str], Optional[HfrResult]] = {}
    mu: dict[str, float] = {}
    for row in rows:
        present = []
        for col in cols:
            bucket = groups.get((row, col))
            if bucket is None:
                cells[(row, col)] = None
                continue
            result = compute_hfr(ResponseSet(bucket), confidence=confidence, ci_method=ci_method)
            cells[(row, col)] = result
            present.append(result.estimate_pct)
        mu[row] = row_mean(present)
    ordered_rows = tuple(sorted(rows, key=lambda r: (-mu[r], r)))
    return HfrTable(row_labels=ordered_rows, col_labels=cols, cells=cells, row_mu=mu)


# --- granular marker rates ---------------------------------------------------


@dataclass(frozen=True)
class MarkerRateTable:
    """cohort -> marker_id -> share (percent) of cohort responses selecting it.

    Markers are multi-select, so a cohort's rates need not sum to 100.  The
    denominator is every admissible cohort response, including those labeled
    human (their marker sets are empty by schema).
    """

    cohorts: tuple[str, ...]
    marker_ids: tuple[str, ...]
    rates: Mapping[str, Mapping[str, float]]
    n: Mapping[str, int]


def compute_marker_rates(
    responses: ResponseSet,
    cohort_map: Mapping[str, str],
    catalog: MarkerCatalog = DEFAULT_MARKER_CATALOG,
) -> MarkerRateTable:
    """Rate of each catalog marker per cohort of systems.

    ``cohort_map`` maps system labels to cohort labels; systems missing from
    the map are excluded.  A cohort named in the map but holding zero
    responses raises :class:`NoDataError`.
    """
    bad = {r.test_kind for r in responses if r.test_kind is not TestKind.HFR_GRANULAR}
    if bad:
        raise KindMismatchError(
            f"marker rates need granular responses, found {sorted(k.value for k in bad)}"
        )
    by_cohort: dict[str, list[Rating]] = {c: [] for c in cohort_map.values()}
    for r in responses:
        cohort = cohort_map.get(r.system)
        if cohort is not None:
            by_cohort[cohort].append(r)
    for cohort, rows in by_cohort.items():
        if not rows:
            raise NoDataError(f"cohort {cohort!r} has no admissible responses")
    rates: dict[str, dict[str, float]] = {}
    totals: dict[str, int] = {}
    for cohort, rows in by_cohort.items():
        total = len(rows)
        totals[cohort] = total
        rates[cohort] = {
            mid: (100.0 * sum(1 for r in rows if mid in r.markers)) / total
            for mid in catalog.ids
        }
    return MarkerRateTable(
        cohorts=tuple(sorted(by_cohort)),
        marker_ids=catalog.ids,
        rates=rates,
        n=totals,
    )


# --- MUSHRA ------------------------------------------------------------------


@dataclass(frozen=True)
class MushraResult:
    mean: float
    n: int
    ci_low: float
    ci_high: float


def compute_mushra(
    responses: ResponseSet, *, confidence: float = 0.95
) -> dict[str, MushraResult]:
    """Per-system arithmetic mean of 0-100 scores with a normal CI on the
    score sample (mean +- z * sd / sqrt(n), sample sd with n-1).

    The hidden reference is reported like any other system under its
    ``human`` label; no mandatory-100 rule and no rater post-screening are
    applied here (see :func:`mushra_post_screen` for the opt-in screen).
    """
    bad = {r.test_kind for r in responses if r.test_kind is not TestKind.MUSHRA}
    if bad:
        raise KindMismatchError(f"MUSHRA means need MUSHRA responses, found {sorted(k.value for k in bad)}")
    if len(responses) == 0:
        raise NoDataError("no admissible MUSHRA scores")
    z = z_value(confidence)
    by_system: dict[str, list[int]] = {}
    for r in responses:
        if r.mushra_score is None:
            raise SchemaError(f"MUSHRA rating {r.trial_id}/{r.stimulus_id} lacks a score")
        by_system.setdefault(r.system, []).append(r.mushra_score)
    out: dict[str, MushraResult] = {}
    for system in sorted(by_system):
        scores = by_system[system]
        n = len(scores)
        mean = math.fsum(scores) / n
        if n > 1:
            sd = math.sqrt(math.fsum((s - mean) ** 2 for s in scores) / (n - 1))
            half = z * sd / math.sqrt(n)
        else:
            half = 0.0
        out[system] = MushraResult(mean=mean, n=n, ci_low=mean - half, ci_high=mean + half)
    return out


def mushra_post_screen(
    responses: ResponseSet,
    *,
    reference_system: str = "human",
    min_score: int = 90,
    max_fail_fraction: float = 0.15,
) -> ResponseSet:
    """Optional rater screen: drop raters who score the hidden reference
    below ``min_score`` in more than ``max_fail_fraction`` of their trials.

    Off by default everywhere; apply it explicitly before
    :func:`compute_mushra` when a stricter protocol calls for it.
    """
    fails: dict[str, int] = {}
    totals: dict[str, int] = {}
    for r in responses:
        if r.system == reference_system and r.mushra_score is not None:
            totals[r.rater_id] = totals.get(r.rater_id, 0) + 1
            if r.mushra_score < min_score:
                fails[r.rater_id] = fails.get(r.rater_id, 0) + 1
    excluded = {
        rater
        for rater, total in totals.items()
        if total and fails.get(rater, 0) / total > max_fail_fraction
    }
    return responses.filter(lambda r: r.rater_id not in excluded)


# --- timing and rush flags ---------------------------------------------------


def timing_stats(responses: ResponseSet) -> dict[TestKind, float]:
    """Mean seconds spent per audio sample, grouped by test kind.

    A trial containing k stimuli (MUSHRA) contributes its trial time divided
    by k, so the figure is always per-sample-per-system.
    """
    if len(responses) == 0:
        raise NoDataError("no admissible responses for timing")
    trials: dict[TestKind, dict[tuple[str, str], list[Rating]]] = {}
    for r in responses:
        trials.setdefault(r.test_kind, {}).setdefault((r.rater_id, r.trial_id), []).append(r)
    out: dict[TestKind, float] = {}
    for kind, by_trial in trials.items():
        per_sample = [
            rows[0].response_time_ms / 1000.0 / len(rows) for rows in by_trial.values()
        ]
        out[kind] = math.fsum(per_sample) / len(per_sample)
    return out


def flag_rushed(responses: ResponseSet, min_decision_ms: int = 500) -> frozenset[tuple[str, str]]:
    """Advisory flags for trials decided faster than ``min_decision_ms``
    after playback completed (strict <; the boundary itself is not flagged).

    Returns (rater_id, trial_id) pairs.  Flags are metadata: they exclude
    responses from statistics only when a study's configuration says so.
    """
    flagged = set()
    for r in responses:
        if r.decision_time_ms is not None and r.decision_time_ms < min_decision_ms:
            flagged.add((r.rater_id, r.trial_id))
    return frozenset(flagged)


def exclude_rushed(responses: ResponseSet, min_decision_ms: int = 500) -> ResponseSet:
    """Drop flagged-rushed responses; the opt-in used by report tooling."""
    flagged = flag_rushed(responses, min_decision_ms)
    return responses.filter(lambda r: (r.rater_id, r.trial_id) not in flagged)
