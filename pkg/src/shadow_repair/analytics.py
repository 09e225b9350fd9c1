"""Aggregate recorded repair sessions into pass-rate tables, fix
classification summaries, fix-time histograms, and sample-size figures."""

from __future__ import annotations

import csv
import io
import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

from .patching import LABEL_EXACT, LABEL_IMPLAUSIBLE, LABEL_PLAUSIBLE, ManualLabel
from .shadow import RepairSession, bucket_labels, bucket_of

SUMMARY_COLUMNS = (LABEL_EXACT, LABEL_PLAUSIBLE, LABEL_IMPLAUSIBLE)


class DegenerateComparison(ZeroDivisionError):
    """Equal proportions make the sample-size denominator vanish."""


class InconsistentSample(ValueError):
    """Reviewers labeled different attempt sets."""


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def sample_size(p1: float, p2: float) -> int:
    """Sample size for detecting a difference between two binary-outcome
    proportions: ceil(16 * pbar * (1 - pbar) / (p1 - p2)^2) with pbar the
    mean of the two.

    Evaluated over exact rationals (decimal reading of the inputs) so that
    cases like (0.25, 0.30), which equal an integer exactly, are not pushed
    over the ceiling by float noise.
    """
    for p in (p1, p2):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"proportions must lie in [0, 1], got {p}")
    if p1 == p2:
        raise DegenerateComparison("p1 == p2 leaves nothing to detect")
    a, b = Fraction(str(p1)), Fraction(str(p2))
    pbar = (a + b) / 2
    return math.ceil(16 * pbar * (1 - pbar) / (a - b) ** 2)


def first_pass_iteration(session: RepairSession) -> int | None:
    for attempt in session.attempts:
        if attempt.verdict.outcome == "pass":
            return attempt.iteration
    return None


@dataclass(frozen=True)
class PassRateTable:
    """Percentage of sessions passing within each iteration cap, per group.

    Rows are iteration caps 1..max, columns are model names or recipe
    numbers; cells are integer percentages. Groups with no sessions simply
    do not appear.
    """

    caps: tuple[int, ...]
    groups: tuple[str, ...]
    cells: dict[tuple[int, str], int]

    def column_is_monotone(self, group: str) -> bool:
        values = [self.cells[(cap, group)] for cap in self.caps]
        return all(a <= b for a, b in zip(values, values[1:]))


def pass_rate(
    sessions: Sequence[RepairSession],
    group_by: str = "model",
    iteration_cap: int = 5,
) -> PassRateTable:
    """Per-group pass percentage at every cap from 1 to ``iteration_cap``.

    A session counts as passing at cap k when its first passing attempt has
    iteration <= k. Percentages round half-up to integers.
    """
    if group_by not in ("model", "recipe"):
        raise ValueError(f"group_by must be 'model' or 'recipe', got {group_by!r}")
    if iteration_cap < 1:
        raise ValueError(f"iteration_cap must be >= 1, got {iteration_cap}")
    grouped: dict[str, list[int | None]] = {}
    for session in sessions:
        key = session.model if group_by == "model" else str(session.recipe)
        grouped.setdefault(key, []).append(first_pass_iteration(session))
    caps = tuple(range(1, iteration_cap + 1))
    groups = tuple(sorted(grouped))
    cells = {}
    for group in groups:
        outcomes = grouped[group]
        for cap in caps:
            passing = sum(1 for it in outcomes if it is not None and it <= cap)
            cells[(cap, group)] = _round_half_up(100.0 * passing / len(outcomes))
    return PassRateTable(caps=caps, groups=groups, cells=cells)


@dataclass(frozen=True)
class ClassificationSummary:
    """Per-reviewer counts of exact/plausible/implausible plus the average row."""

    reviewers: tuple[str, ...]
    counts: dict[str, tuple[int, int, int]]
    average: tuple[int, int, int]
    sample_size: int


def classification_summary(
    labels: Mapping[str, Mapping[Hashable, str]],
) -> ClassificationSummary:
    """Tally reviewer labels over one shared sample.

    ``labels`` maps reviewer -> {attempt key -> label}. Every reviewer must
    have labeled exactly the same attempt set, else InconsistentSample. The
    average row is the per-column arithmetic mean, rounded half-up.
    """
    if not labels:
        raise ValueError("no reviewer labels supplied")
    reviewers = tuple(labels)
    sample = set(labels[reviewers[0]])
    for reviewer in reviewers[1:]:
        if set(labels[reviewer]) != sample:
            raise InconsistentSample(
                f"reviewer {reviewer!r} labeled a different attempt set than {reviewers[0]!r}"
            )
    counts: dict[str, tuple[int, int, int]] = {}
    for reviewer in reviewers:
        tally = {column: 0 for column in SUMMARY_COLUMNS}
        for key, label in labels[reviewer].items():
            if label not in tally:
                raise ValueError(f"reviewer {reviewer!r}, attempt {key!r}: unknown label {label!r}")
            tally[label] += 1
        counts[reviewer] = tuple(tally[c] for c in SUMMARY_COLUMNS)
    average = tuple(
        _round_half_up(sum(counts[r][i] for r in reviewers) / len(reviewers))
        for i in range(len(SUMMARY_COLUMNS))
    )
    return ClassificationSummary(
        reviewers=reviewers, counts=counts, average=average, sample_size=len(sample)
    )


def labels_by_reviewer(records: Iterable[ManualLabel]) -> dict[str, dict[tuple[str, int], str]]:
    out: dict[str, dict[tuple[str, int], str]] = {}
    for record in records:
        out.setdefault(record.reviewer, {})[(record.session_id, record.attempt)] = record.label
    return out


@dataclass(frozen=True)
class HistogramBin:
    pass_count: int
    fail_count: int


def time_histogram(sessions: Sequence[RepairSession]) -> dict[str, HistogramBin]:
    """Session totals bucketed by fix time and split by final outcome.

    Only populated buckets appear, in bucket order; counts over all buckets
    sum to the number of sessions.
    """
    passes: dict[str, int] = {}
    fails: dict[str, int] = {}
    for session in sessions:
        label = bucket_of(session.total_duration)
        side = passes if session.final == "pass" else fails
        side[label] = side.get(label, 0) + 1
    out = {}
    for label in bucket_labels():
        if label in passes or label in fails:
            out[label] = HistogramBin(passes.get(label, 0), fails.get(label, 0))
    return out


# -- plain-text and CSV rendering ------------------------------------------


def render_pass_rate(table: PassRateTable, title: str = "CI pass rate (%)") -> str:
    if not table.groups:
        return f"{title}\n(no sessions)\n"
    width = max(12, *(len(g) + 2 for g in table.groups))
    header = "iterations".ljust(12) + "".join(g.rjust(width) for g in table.groups)
    rows = [title, header]
    for cap in table.caps:
        row = str(cap).ljust(12)
        row += "".join(str(table.cells[(cap, g)]).rjust(width) for g in table.groups)
        rows.append(row)
    return "\n".join(rows) + "\n"


def render_pass_rate_csv(table: PassRateTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["iterations", *table.groups])
    for cap in table.caps:
        writer.writerow([cap, *(table.cells[(cap, g)] for g in table.groups)])
    return buf.getvalue()


def render_classification(summary: ClassificationSummary) -> str:
    rows = ["Fix analysis", "reviewer".ljust(16) + "".join(c.rjust(14) for c in SUMMARY_COLUMNS)]
    for reviewer in summary.reviewers:
        rows.append(
            reviewer.ljust(16) + "".join(str(n).rjust(14) for n in summary.counts[reviewer])
        )
    rows.append("average".ljust(16) + "".join(str(n).rjust(14) for n in summary.average))
    return "\n".join(rows) + "\n"


def render_classification_csv(summary: ClassificationSummary) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["reviewer", *SUMMARY_COLUMNS])
    for reviewer in summary.reviewers:
        writer.writerow([reviewer, *summary.counts[reviewer]])
    writer.writerow(["average", *summary.average])
    return buf.getvalue()


def render_histogram(histogram: dict[str, HistogramBin]) -> str:
    rows = ["Fix time (minutes)", "bucket".ljust(10) + "pass".rjust(8) + "fail".rjust(8)]
    for label, cell in histogram.items():
        rows.append(label.ljust(10) + str(cell.pass_count).rjust(8) + str(cell.fail_count).rjust(8))
    return "\n".join(rows) + "\n"


def render_histogram_csv(histogram: dict[str, HistogramBin]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["bucket", "pass", "fail"])
    for label, cell in histogram.items():
        writer.writerow([label, cell.pass_count, cell.fail_count])
    return buf.getvalue()
