"""Plot-ready report data: ECDFs, histogram densities, yearly activity
tables, per-user yearly series, active-year sets, and minimal SVG charts.

Canonical output is text: two-column TSV (no header, %.10g) for curves and
CSV for tables.  SVG output is a convenience polyline rendering of the same
data.  Everything is emitted in stable sort orders so a report directory is
byte-identical across runs of the same corpus and config.

Calendar bucketing here uses UTC calendar years (the churn module's weeks
are anchored per user instead; both conventions are intentional).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .churn import ChurnDecomposition, ChurnSummaryRow
from .classifier import CohortSummary
from .errors import EmptyInput, UnscoredEvent
from .metrics import UserMetrics
from .model import Corpus, Timeline, timestamps
from .scoring import UserScoreTable


@dataclass(slots=True)
class Ecdf:
    """Step function of sorted sample fractions; last fraction is 1."""

    points: list[tuple[float, float]]


@dataclass(slots=True)
class YearlyRow:
    """One activity-span row: group counts, in-group percentages, and the
    events-per-year implied by a fixed timeline length (when known)."""

    span_years: int
    ctu_count: int
    ctu_pct: float
    bu_count: int
    bu_pct: float
    tweets_per_year: float | None


def ecdf(values: Sequence[float] | np.ndarray) -> Ecdf:
    """Empirical CDF at the sorted unique values: fraction = count(<= v) / n."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("ecdf of empty value list")
    uniq, counts = np.unique(arr, return_counts=True)
    fractions = np.cumsum(counts) / arr.size
    fractions[-1] = 1.0
    return Ecdf(points=[(float(v), float(f)) for v, f in zip(uniq, fractions)])


def histogram_density(values: Sequence[float] | np.ndarray,
                      bins: int | None = None) -> list[tuple[float, float]]:
    """(bin_center, density) pairs whose density integrates to 1.

    Default bin count is Freedman-Diaconis, floored at 10 and capped at 200.
    A constant vector collapses to one bin of nominal width 1 centered on
    the value (density 1), keeping the unit integral.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("histogram of empty value list")
    lo, hi = float(arr.min()), float(arr.max())
    if lo == hi:
        return [(lo, 1.0)]
    if bins is None:
        q25, q75 = np.percentile(arr, [25, 75])
        iqr = float(q75 - q25)
        if iqr > 0.0:
            width = 2.0 * iqr / arr.size ** (1.0 / 3.0)
            bins = int(np.ceil((hi - lo) / width))
        else:
            bins = 10
        bins = min(200, max(10, bins))
    elif bins < 1:
        raise ValueError("bins must be >= 1")
    counts, edges = np.histogram(arr, bins=bins)
    widths = np.diff(edges)
    centers = (edges[:-1] + edges[1:]) / 2.0
    density = counts / (arr.size * widths)
    return [(float(c), float(d)) for c, d in zip(centers, density)]


def yearly_table(metrics: Sequence[UserMetrics], summary: CohortSummary,
                 required_length: int | None = None) -> list[YearlyRow]:
    """Per-span user counts for each group, percentages within the group."""
    ctu_spans: dict[int, int] = {}
    bu_spans: dict[int, int] = {}
    for m in metrics:
        if m.user_id in summary.ctu_ids:
            ctu_spans[m.span_years] = ctu_spans.get(m.span_years, 0) + 1
        elif m.user_id in summary.bu_ids:
            bu_spans[m.span_years] = bu_spans.get(m.span_years, 0) + 1
    n_ctu, n_bu = summary.n_ctu, summary.n_bu
    rows = []
    for span in sorted(set(ctu_spans) | set(bu_spans)):
        c = ctu_spans.get(span, 0)
        b = bu_spans.get(span, 0)
        rows.append(YearlyRow(
            span_years=span,
            ctu_count=c,
            ctu_pct=100.0 * c / n_ctu if n_ctu else 0.0,
            bu_count=b,
            bu_pct=100.0 * b / n_bu if n_bu else 0.0,
            tweets_per_year=required_length / span if required_length else None,
        ))
    return rows


def _event_years(timeline: Timeline) -> np.ndarray:
    ts = timestamps(timeline)
    return ts.astype("datetime64[s]").astype("datetime64[Y]").astype(np.int64) + 1970


def active_year_set(timeline: Timeline) -> tuple[int, ...]:
    """Distinct UTC calendar years in which the user posted, ascending."""
    return tuple(int(y) for y in np.unique(_event_years(timeline)))


def active_year_sets(corpus: Corpus, summary: CohortSummary
                     ) -> dict[str, list[tuple[tuple[int, ...], int, float]]]:
    """Per group: (year set, user count, in-group percentage) rows.

    Rows are keyed by the exact year set and sorted by (set size, years),
    the order the Gantt-style activity tables use.
    """
    out: dict[str, list[tuple[tuple[int, ...], int, float]]] = {}
    for group, ids in (("ctu", summary.ctu_ids), ("bu", summary.bu_ids)):
        buckets: dict[tuple[int, ...], int] = {}
        for uid in ids:
            if uid not in corpus.timelines:
                continue
            years = active_year_set(corpus.timelines[uid])
            buckets[years] = buckets.get(years, 0) + 1
        total = sum(buckets.values())
        rows = [
            (years, count, 100.0 * count / total if total else 0.0)
            for years, count in sorted(buckets.items(), key=lambda kv: (len(kv[0]), kv[0]))
        ]
        out[group] = rows
    return out


def user_yearly_series(timeline: Timeline) -> list[tuple[int, int, float]]:
    """(year, event count, mean toxicity) per calendar year with activity."""
    years = _event_years(timeline)
    scores = np.empty(len(timeline.events), dtype=np.float64)
    for i, ev in enumerate(timeline.events):
        if ev.toxicity is None:
            raise UnscoredEvent(timeline.user_id, ev.event_id)
        scores[i] = ev.toxicity
    out = []
    for year in np.unique(years):
        mask = years == year
        out.append((int(year), int(mask.sum()), float(scores[mask].mean())))
    return out


def write_tsv(path: str | Path, pairs: Iterable[tuple[float, float]]) -> None:
    """Two-column TSV, no header, %.10g formatting."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y in pairs:
            fh.write("%.10g\t%.10g\n" % (x, y))


_SVG_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]


def write_svg(path: str | Path, curves: Sequence[tuple[str, Sequence[tuple[float, float]]]],
              title: str = "") -> None:
    """Minimal static polyline chart of one or more (label, points) curves."""
    width, height = 640, 440
    ml, mr, mt, mb = 60, 20, 30, 40
    xs = [p[0] for _, pts in curves for p in pts]
    ys = [p[1] for _, pts in curves for p in pts]
    if not xs:
        return
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x: float) -> float:
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y: float) -> float:
        return mt + ph - (y - y0) / (y1 - y0) * ph

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:g}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
        f'<text x="{ml}" y="{height - 8}" font-size="11" text-anchor="middle">{x0:.6g}</text>',
        f'<text x="{ml + pw}" y="{height - 8}" font-size="11" text-anchor="middle">{x1:.6g}</text>',
        f'<text x="{ml - 6}" y="{mt + ph}" font-size="11" text-anchor="end">{y0:.6g}</text>',
        f'<text x="{ml - 6}" y="{mt + 10}" font-size="11" text-anchor="end">{y1:.6g}</text>',
    ]
    for k, (label, pts) in enumerate(curves):
        color = _SVG_COLORS[k % len(_SVG_COLORS)]
        coords = " ".join(f"{sx(x):.6g},{sy(y):.6g}" for x, y in pts)
        lines.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        lines.append(f'<text x="{ml + pw - 6}" y="{mt + 16 + 14 * k}" text-anchor="end" '
                     f'font-size="12" fill="{color}">{label}</text>')
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _fmtg(value: float | None) -> str:
    return "" if value is None else "%.10g" % value


def write_yearly_table_csv(rows: Sequence[YearlyRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["span_years", "ctu_count", "ctu_pct", "bu_count", "bu_pct",
                         "tweets_per_year"])
        for r in rows:
            writer.writerow([r.span_years, r.ctu_count, _fmtg(r.ctu_pct),
                             r.bu_count, _fmtg(r.bu_pct), _fmtg(r.tweets_per_year)])


def write_year_sets_csv(rows: Sequence[tuple[tuple[int, ...], int, float]],
                        path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_years", "years", "user_count", "pct"])
        for years, count, pct in rows:
            writer.writerow([len(years), " ".join(str(y) for y in years), count, _fmtg(pct)])


def write_yearly_series_csv(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "year", "event_count", "mean_toxicity"])
        for uid in sorted(corpus.timelines):
            for year, count, mean_tox in user_yearly_series(corpus.timelines[uid]):
                writer.writerow([uid, year, count, _fmtg(mean_tox)])


_GROUPS = ("all", "ctu", "bu")

# UserMetrics fields turned into per-group ECDF curves
_METRIC_FIELDS = ("mean_toxicity", "gini", "burstiness_all",
                  "burstiness_toxic", "burstiness_benign")

# ChurnDecomposition quantities turned into per-group ECDF curves
_CHURN_FIELDS = ("avg_life_weeks", "avg_death_weeks", "mean_tweets_per_life",
                 "mean_toxicity_per_life", "cycles")


def _group_ids(summary: CohortSummary, group: str) -> set[str]:
    if group == "ctu":
        return summary.ctu_ids
    if group == "bu":
        return summary.bu_ids
    return summary.ctu_ids | summary.bu_ids


def _churn_value(d: ChurnDecomposition | ChurnSummaryRow, field: str) -> float | None:
    if field == "cycles":
        return float(d.cycle_count)
    if field == "avg_death_weeks":
        return d.avg_death_weeks
    return getattr(d, field)


def write_distribution_report(
    out_dir: str | Path,
    corpus: Corpus,
    metrics: Sequence[UserMetrics],
    summary: CohortSummary,
    churn_table: Sequence[ChurnDecomposition | ChurnSummaryRow],
    svg: bool = False,
    user_scores: UserScoreTable | None = None,
) -> list[str]:
    """Write every distribution/table file into ``out_dir``.

    Emits per-group ECDFs of each user metric and churn quantity, the
    burstiness density, the activity-span table, active-year sets, per-user
    yearly series, and the (mean_toxicity, gini) scatter pairs.  Files whose
    group has no defined values are skipped.  Returns sorted filenames.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[str] = []

    def emit_tsv(name: str, pairs) -> None:
        write_tsv(out_dir / name, pairs)
        written.append(name)

    metric_values: dict[tuple[str, str], list[float]] = {}
    for field in _METRIC_FIELDS:
        for group in _GROUPS:
            ids = _group_ids(summary, group)
            values = [getattr(m, field) for m in metrics
                      if m.user_id in ids and getattr(m, field) is not None]
            metric_values[(field, group)] = values
            if values:
                emit_tsv(f"ecdf_{field}_{group}.tsv", ecdf(values).points)

    for group in _GROUPS:
        values = metric_values[("burstiness_all", group)]
        if values:
            emit_tsv(f"pdf_burstiness_{group}.tsv", histogram_density(values))

    for field in _CHURN_FIELDS:
        for group in _GROUPS:
            ids = _group_ids(summary, group)
            values = [v for d in churn_table if d.user_id in ids
                      for v in [_churn_value(d, field)] if v is not None]
            if values:
                emit_tsv(f"ecdf_{field}_{group}.tsv", ecdf(values).points)

    if user_scores is not None:
        for group in _GROUPS:
            ids = _group_ids(summary, group)
            values = [user_scores.entries[u] for u in sorted(ids & set(user_scores.entries))]
            if values:
                emit_tsv(f"ecdf_{user_scores.label}_{group}.tsv", ecdf(values).points)

    scatter = [(m.mean_toxicity, m.gini) for m in sorted(metrics, key=lambda m: m.user_id)
               if m.mean_toxicity is not None and m.gini is not None]
    if scatter:
        emit_tsv("scatter_toxicity_gini.tsv", scatter)

    rows = yearly_table(metrics, summary, required_length=corpus.required_length)
    write_yearly_table_csv(rows, out_dir / "yearly_table.csv")
    written.append("yearly_table.csv")

    for group, rows_ in active_year_sets(corpus, summary).items():
        name = f"year_sets_{group}.csv"
        write_year_sets_csv(rows_, out_dir / name)
        written.append(name)

    write_yearly_series_csv(corpus, out_dir / "yearly_series.csv")
    written.append("yearly_series.csv")

    if svg:
        for field in _METRIC_FIELDS:
            curves = [(group, ecdf(metric_values[(field, group)]).points)
                      for group in _GROUPS if metric_values[(field, group)]]
            if curves:
                name = f"ecdf_{field}.svg"
                write_svg(out_dir / name, curves, title=f"ECDF of {field}")
                written.append(name)
        pdf_curves = [(group, histogram_density(metric_values[("burstiness_all", group)]))
                      for group in _GROUPS if metric_values[("burstiness_all", group)]]
        if pdf_curves:
            write_svg(out_dir / "pdf_burstiness.svg", pdf_curves, title="Burstiness density")
            written.append("pdf_burstiness.svg")

    return sorted(written)
