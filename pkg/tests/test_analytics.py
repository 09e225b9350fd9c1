import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from shadow_repair.analytics import (
    DegenerateComparison,
    InconsistentSample,
    classification_summary,
    first_pass_iteration,
    labels_by_reviewer,
    pass_rate,
    render_classification_csv,
    render_histogram_csv,
    render_pass_rate,
    render_pass_rate_csv,
    sample_size,
    time_histogram,
)
from shadow_repair.patching import ManualLabel

from conftest import make_session


class TestSampleSize:
    def test_quarter_vs_thirty_percent(self):
        # independent evaluation of the formula over exact rationals
        F = Fraction
        oracle = lambda a, b: math.ceil(16 * (F(str(a)) + F(str(b))) / 2 * (1 - (F(str(a)) + F(str(b))) / 2) / (F(str(a)) - F(str(b))) ** 2)
        assert sample_size(0.25, 0.30) == oracle(0.25, 0.30) == 1276

    def test_extreme_proportions(self):
        assert sample_size(0, 1) == 4

    def test_equal_proportions_degenerate(self):
        with pytest.raises(DegenerateComparison):
            sample_size(0.5, 0.5)

    def test_out_of_domain(self):
        with pytest.raises(ValueError):
            sample_size(-0.1, 0.5)
        with pytest.raises(ValueError):
            sample_size(0.2, 1.5)

    @given(
        st.floats(0.01, 0.99).map(lambda x: round(x, 3)),
        st.floats(0.01, 0.99).map(lambda x: round(x, 3)),
    )
    def test_symmetric(self, p1, p2):
        if p1 == p2:
            return
        assert sample_size(p1, p2) == sample_size(p2, p1)

    def test_decreasing_in_gap_at_fixed_mean(self):
        previous = None
        for gap in (0.02, 0.05, 0.1, 0.2, 0.4):
            n = sample_size(0.5 - gap / 2, 0.5 + gap / 2)
            if previous is not None:
                assert n < previous
            previous = n


class TestPassRate:
    def test_half_pass_at_cap_one(self):
        sessions = [
            make_session(session_id="a", first_pass=1),
            make_session(session_id="b", first_pass=1),
            make_session(session_id="c", first_pass=None),
            make_session(session_id="d", first_pass=None),
        ]
        table = pass_rate(sessions, "model", 1)
        assert table.cells[(1, "codellama")] == 50

    def test_rendering_fixture_63_of_100_within_cap_three(self):
        # rendering fixture: 63 of 100 sessions pass within three iterations
        sessions = [
            make_session(session_id=f"p{i}", first_pass=(i % 3) + 1) for i in range(63)
        ] + [make_session(session_id=f"f{i}", first_pass=None) for i in range(37)]
        table = pass_rate(sessions, "model", 5)
        assert table.cells[(3, "codellama")] == 63

    def test_monotone_in_cap(self):
        rng = random.Random(5)
        sessions = [
            make_session(
                session_id=f"s{i}",
                first_pass=rng.choice([None, 1, 2, 3, 4, 5]),
                model=rng.choice(["codellama", "falcon"]),
            )
            for i in range(60)
        ]
        table = pass_rate(sessions, "model", 5)
        for group in table.groups:
            assert table.column_is_monotone(group)

    def test_rounding_half_up(self):
        sessions = [make_session(session_id="p", first_pass=1)] + [
            make_session(session_id=f"f{i}", first_pass=None) for i in range(7)
        ]
        assert pass_rate(sessions, "model", 1).cells[(1, "codellama")] == 13  # 12.5 -> 13

    def test_group_by_recipe(self):
        sessions = [
            make_session(session_id="a", recipe=3, first_pass=1),
            make_session(session_id="b", recipe=6, first_pass=None),
        ]
        table = pass_rate(sessions, "recipe", 1)
        assert table.cells[(1, "3")] == 100
        assert table.cells[(1, "6")] == 0

    def test_first_pass_iteration(self):
        assert first_pass_iteration(make_session(first_pass=2)) == 2
        assert first_pass_iteration(make_session(first_pass=None)) is None

    def test_bad_group_by(self):
        with pytest.raises(ValueError):
            pass_rate([], "build", 1)


def _labels(counts: dict[str, tuple[int, int, int]]) -> dict[str, dict[int, str]]:
    out = {}
    for reviewer, (exact, plausible, implausible) in counts.items():
        labels = ["exact"] * exact + ["plausible"] * plausible + ["implausible"] * implausible
        out[reviewer] = dict(enumerate(labels))
    return out


class TestClassificationSummary:
    def test_two_reviewer_average(self):
        summary = classification_summary(_labels({"dev1": (18, 63, 19), "dev2": (16, 69, 15)}))
        assert summary.counts["dev1"] == (18, 63, 19)
        assert summary.counts["dev2"] == (16, 69, 15)
        assert summary.average == (17, 66, 17)
        assert summary.sample_size == 100

    def test_single_reviewer(self):
        summary = classification_summary(_labels({"dev1": (10, 0, 0)}))
        assert summary.average == (10, 0, 0)

    def test_inconsistent_sample(self):
        labels = _labels({"dev1": (1, 1, 0), "dev2": (1, 1, 0)})
        labels["dev2"][99] = "exact"
        with pytest.raises(InconsistentSample):
            classification_summary(labels)

    def test_counts_sum_to_sample(self):
        summary = classification_summary(_labels({"dev1": (3, 4, 5), "dev2": (5, 4, 3)}))
        for reviewer in summary.reviewers:
            assert sum(summary.counts[reviewer]) == summary.sample_size

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError):
            classification_summary({"dev1": {0: "great"}})

    def test_average_rounds_half_up(self):
        summary = classification_summary(_labels({"dev1": (1, 1, 0), "dev2": (2, 0, 0)}))
        assert summary.average == (2, 1, 0)  # 1.5 -> 2, 0.5 -> 1

    def test_from_manual_label_records(self):
        records = [
            ManualLabel("s1", 1, "plausible", "dev1"),
            ManualLabel("s2", 1, "exact", "dev1"),
            ManualLabel("s1", 1, "implausible", "dev2"),
            ManualLabel("s2", 1, "exact", "dev2"),
        ]
        summary = classification_summary(labels_by_reviewer(records))
        assert summary.counts["dev1"] == (1, 1, 0)
        assert summary.counts["dev2"] == (1, 0, 1)


class TestTimeHistogram:
    def test_pass_and_fail_split(self):
        sessions = [
            make_session(session_id="a", first_pass=1, total_duration=60),
            make_session(session_id="b", first_pass=None, total_duration=11 * 60),
        ]
        histogram = time_histogram(sessions)
        assert histogram["[0,2)"].pass_count == 1
        assert histogram["[0,2)"].fail_count == 0
        assert histogram["[10,15)"].fail_count == 1
        assert list(histogram) == ["[0,2)", "[10,15)"]

    def test_empty_input(self):
        assert time_histogram([]) == {}

    def test_counts_partition_sessions(self):
        rng = random.Random(42)
        sessions = [
            make_session(
                session_id=f"s{i}",
                first_pass=rng.choice([None, 1]),
                total_duration=rng.uniform(0, 45 * 60),
            )
            for i in range(500)
        ]
        histogram = time_histogram(sessions)
        assert sum(c.pass_count + c.fail_count for c in histogram.values()) == 500


class TestRendering:
    def test_pass_rate_text_and_csv(self):
        table = pass_rate([make_session(first_pass=1)], "model", 2)
        text = render_pass_rate(table)
        assert "codellama" in text and "100" in text
        csv_text = render_pass_rate_csv(table)
        assert csv_text.splitlines()[0] == "iterations,codellama"
        assert csv_text.splitlines()[1] == "1,100"

    def test_classification_csv(self):
        summary = classification_summary(_labels({"dev1": (18, 63, 19), "dev2": (16, 69, 15)}))
        lines = render_classification_csv(summary).splitlines()
        assert lines[0] == "reviewer,exact,plausible,implausible"
        assert lines[-1] == "average,17,66,17"

    def test_histogram_csv(self):
        histogram = time_histogram([make_session(first_pass=1, total_duration=30)])
        lines = render_histogram_csv(histogram).splitlines()
        assert lines[0] == "bucket,pass,fail"
        assert lines[1] == '"[0,2)",1,0'
