"""Distribution data: ECDFs, densities, yearly tables, year sets, series."""

import math

import numpy as np
import pytest

from toxtempo.churn import cohort_churn
from toxtempo.classifier import classify
from toxtempo.errors import EmptyInput
from toxtempo.metrics import compute_metrics
from toxtempo.model import Corpus, Event, Timeline
from toxtempo.report import (
    active_year_set,
    active_year_sets,
    ecdf,
    histogram_density,
    user_yearly_series,
    write_distribution_report,
    yearly_table,
)
from toxtempo.synth import GenSpec, ProcessSpec, ToxicityModel, generate

T0 = 1577836800
YEAR = int(365.25 * 86400)


class TestEcdf:
    def test_singleton(self):
        assert ecdf([5.0]).points == [(5.0, 1.0)]

    def test_hand_count(self):
        assert ecdf([1, 2, 2, 4]).points == [(1.0, 0.25), (2.0, 0.75), (4.0, 1.0)]

    def test_terminal_fraction_one_and_monotone(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            values = rng.normal(size=int(rng.integers(1, 300)))
            pts = ecdf(values).points
            assert pts[-1][1] == 1.0
            xs = [p[0] for p in pts]
            fs = [p[1] for p in pts]
            assert xs == sorted(xs)
            assert fs == sorted(fs)

    def test_empty_raises(self):
        with pytest.raises(EmptyInput):
            ecdf([])


class TestHistogramDensity:
    def integral(self, pairs):
        if len(pairs) == 1:
            return pairs[0][1] * 1.0  # single bin has nominal width 1
        width = pairs[1][0] - pairs[0][0]
        return sum(d for _, d in pairs) * width

    def test_constant_vector_single_bin(self):
        pairs = histogram_density([0.7] * 100)
        assert pairs == [(0.7, 1.0)]
        assert self.integral(pairs) == 1.0

    def test_uniform_sample_flat_within_15_percent(self):
        rng = np.random.default_rng(2024)
        pairs = histogram_density(rng.random(10_000))
        for _, density in pairs:
            assert abs(density - 1.0) < 0.15

    def test_integral_is_one(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            values = rng.normal(loc=rng.uniform(-5, 5), scale=rng.uniform(0.1, 10),
                                size=int(rng.integers(2, 2000)))
            assert abs(self.integral(histogram_density(values)) - 1.0) < 1e-9

    def test_bin_count_bounds(self):
        rng = np.random.default_rng(11)
        small = histogram_density(rng.random(20))
        assert 10 <= len(small) <= 200
        spread = np.concatenate([rng.random(5000), rng.random(5000) * 1e4])
        assert len(histogram_density(spread)) <= 200

    def test_explicit_bins(self):
        pairs = histogram_density([1.0, 2.0, 3.0, 4.0], bins=2)
        assert len(pairs) == 2
        assert abs(self.integral(pairs) - 1.0) < 1e-12

    def test_empty_raises(self):
        with pytest.raises(EmptyInput):
            histogram_density([])


def make_timeline(uid, year_events, tox=0.2):
    """year_events: {calendar_year: n_events}; events spread inside the year."""
    events = []
    i = 0
    for year, n in sorted(year_events.items()):
        base = int((np.datetime64(f"{year}-01-10") - np.datetime64("1970-01-01"))
                   / np.timedelta64(1, "s"))
        for k in range(n):
            events.append(Event(uid, f"e{i:04d}", base + k * 86400 * 7, toxicity=tox))
            i += 1
    return Timeline(uid, events)


class TestYearlyTable:
    def metrics_and_summary(self):
        # two CTU-shaped users at span 3, one BU-shaped at span 1
        timelines = {
            "ctu1": make_timeline("ctu1", {2018: 5, 2020: 5}, tox=0.9),
            "ctu2": make_timeline("ctu2", {2018: 5, 2020: 5}, tox=0.8),
            "bu1": make_timeline("bu1", {2018: 10}, tox=0.1),
            "bu2": make_timeline("bu2", {2018: 10}, tox=0.05),
        }
        corpus = Corpus(timelines=timelines)
        metrics = compute_metrics(corpus)
        summary = classify(metrics)
        return corpus, metrics, summary

    def test_counting(self):
        corpus, metrics, summary = self.metrics_and_summary()
        rows = yearly_table(metrics, summary)
        by_span = {r.span_years: r for r in rows}
        spans = {m.user_id: m.span_years for m in metrics}
        for span, row in by_span.items():
            want_ctu = sum(1 for uid in summary.ctu_ids if spans[uid] == span)
            want_bu = sum(1 for uid in summary.bu_ids if spans[uid] == span)
            assert (row.ctu_count, row.bu_count) == (want_ctu, want_bu)

    def test_group_sums_conserved(self):
        _, metrics, summary = self.metrics_and_summary()
        rows = yearly_table(metrics, summary)
        assert sum(r.ctu_count for r in rows) == summary.n_ctu
        assert sum(r.bu_count for r in rows) == summary.n_bu

    def test_required_length_tweets_per_year(self):
        _, metrics, summary = self.metrics_and_summary()
        rows = yearly_table(metrics, summary, required_length=3200)
        by_span = {r.span_years: r for r in rows}
        if 2 in by_span:
            assert by_span[2].tweets_per_year == 1600.0
        for r in rows:
            assert r.tweets_per_year == 3200 / r.span_years

    def test_without_required_length_blank(self):
        _, metrics, summary = self.metrics_and_summary()
        rows = yearly_table(metrics, summary)
        assert all(r.tweets_per_year is None for r in rows)


class TestActiveYearSets:
    def test_set_extraction(self):
        tl = make_timeline("u1", {2020: 3, 2021: 2})
        assert active_year_set(tl) == (2020, 2021)

    def test_identical_sets_grouped(self):
        timelines = {
            "a": make_timeline("a", {2019: 4}, tox=0.9),
            "b": make_timeline("b", {2019: 4}, tox=0.8),
            "c": make_timeline("c", {2018: 2, 2019: 2}, tox=0.1),
            "d": make_timeline("d", {2018: 4}, tox=0.1),
        }
        corpus = Corpus(timelines=timelines)
        metrics = compute_metrics(corpus)
        summary = classify(metrics)
        sets = active_year_sets(corpus, summary)
        for group, ids in (("ctu", summary.ctu_ids), ("bu", summary.bu_ids)):
            assert sum(count for _, count, _ in sets[group]) == len(ids)
        all_rows = sets["ctu"] + sets["bu"]
        if {"a", "b"} <= summary.ctu_ids:
            row = [r for r in sets["ctu"] if r[0] == (2019,)]
            assert row and row[0][1] == 2

    def test_percentages_sum_to_100(self):
        spec = GenSpec(seed=5, n_users=20, events_per_user=40,
                       process=ProcessSpec(kind="poisson", rate=1 / (86400 * 5)),
                       toxicity_model=ToxicityModel(kind="two_class", p_toxic=0.4,
                                                    v_toxic=0.9, v_benign=0.1))
        corpus = generate(spec)
        metrics = compute_metrics(corpus)
        summary = classify(metrics)
        for group, rows in active_year_sets(corpus, summary).items():
            if rows:
                assert math.isclose(sum(pct for _, _, pct in rows), 100.0, abs_tol=1e-9)


class TestUserYearlySeries:
    def test_single_year(self):
        tl = make_timeline("u1", {2020: 7}, tox=0.3)
        series = user_yearly_series(tl)
        assert series == [(2020, 7, pytest.approx(0.3))]

    def test_counts_conserved(self):
        tl = make_timeline("u1", {2018: 3, 2019: 5, 2021: 2})
        series = user_yearly_series(tl)
        assert sum(c for _, c, _ in series) == len(tl.events)
        assert [y for y, _, _ in series] == [2018, 2019, 2021]

    def test_hand_known_three_years(self):
        events = []
        for i, (year, tox) in enumerate([(2018, 0.2), (2018, 0.4), (2019, 1.0), (2021, 0.0)]):
            base = int((np.datetime64(f"{year}-06-01") - np.datetime64("1970-01-01"))
                       / np.timedelta64(1, "s"))
            events.append(Event("u1", f"e{i}", base + i * 3600, toxicity=tox))
        series = user_yearly_series(Timeline("u1", events))
        assert series == [
            (2018, 2, pytest.approx(0.3)),
            (2019, 1, pytest.approx(1.0)),
            (2021, 1, pytest.approx(0.0)),
        ]


class TestWriteDistributionReport:
    def corpus(self):
        spec = GenSpec(seed=77, n_users=12, events_per_user=60,
                       process=ProcessSpec(kind="poisson", rate=1 / (86400 * 2)),
                       toxicity_model=ToxicityModel(kind="two_class", p_toxic=0.3,
                                                    v_toxic=0.8, v_benign=0.1))
        return generate(spec)

    def build(self, out_dir, svg=False):
        corpus = self.corpus()
        metrics = compute_metrics(corpus)
        summary = classify(metrics)
        churn_table = cohort_churn(corpus)
        files = write_distribution_report(out_dir, corpus, metrics, summary,
                                          churn_table, svg=svg)
        return files

    def test_expected_files_present(self, tmp_path):
        files = self.build(tmp_path)
        assert "ecdf_mean_toxicity_all.tsv" in files
        assert "ecdf_gini_ctu.tsv" in files
        assert "pdf_burstiness_all.tsv" in files
        assert "ecdf_avg_life_weeks_bu.tsv" in files
        assert "yearly_table.csv" in files
        assert "year_sets_ctu.csv" in files
        assert "year_sets_bu.csv" in files
        assert "yearly_series.csv" in files
        assert "scatter_toxicity_gini.tsv" in files
        for name in files:
            assert (tmp_path / name).stat().st_size > 0

    def test_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        files_a = self.build(a, svg=True)
        files_b = self.build(b, svg=True)
        assert files_a == files_b
        for name in files_a:
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_tsv_format(self, tmp_path):
        self.build(tmp_path)
        for line in (tmp_path / "ecdf_mean_toxicity_all.tsv").read_text().splitlines():
            parts = line.split("\t")
            assert len(parts) == 2
            float(parts[0]), float(parts[1])

    def test_svg_emitted_when_asked(self, tmp_path):
        files = self.build(tmp_path, svg=True)
        svgs = [f for f in files if f.endswith(".svg")]
        assert "ecdf_mean_toxicity.svg" in svgs
        assert "pdf_burstiness.svg" in svgs
        text = (tmp_path / "ecdf_mean_toxicity.svg").read_text()
        assert text.startswith("<svg") and "<polyline" in text

    def test_external_user_scores_curves(self, tmp_path):
        from toxtempo.scoring import UserScoreTable

        corpus = self.corpus()
        metrics = compute_metrics(corpus)
        summary = classify(metrics)
        # scores for a subset of users plus one unknown user
        known = sorted(corpus.timelines)[:8]
        table = UserScoreTable(
            entries={uid: (i + 1) / 10 for i, uid in enumerate(known)} | {"ghost": 0.5},
            label="bot_score",
        )
        files = write_distribution_report(tmp_path, corpus, metrics, summary,
                                          cohort_churn(corpus), user_scores=table)
        assert "ecdf_bot_score_all.tsv" in files
        rows = (tmp_path / "ecdf_bot_score_all.tsv").read_text().splitlines()
        # unknown users are permitted but excluded from group curves
        assert len(rows) == len(known)
