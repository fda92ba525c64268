"""Per-user scalar metrics.

For each timeline: mean toxicity, the Gini index of its toxicity scores
(0 = uniform behavior, towards 1 = a few extreme posts dominate), the
burstiness of inter-event times B = (sigma - mu) / (sigma + mu) overall and
split by toxic/benign class, and the activity span in whole years.

Conventions pinned here so results are reproducible:

* Gini uses the population estimator in its O(n log n) sorted-rank form,
  no small-sample correction; an all-zero vector returns 0 by convention.
* Burstiness sigma is the population standard deviation (divide by k); the
  limiting values (-1 periodic, ~0 memoryless, -> 1 extremely bursty) hold
  exactly for that form.
* The toxic class is events with toxicity strictly greater than the user's
  mean; equal-to-mean events count as benign.  Per-class burstiness uses the
  gaps between consecutive same-class events at their original timestamps.
* span_years = max(1, ceil(duration / 365.25 days)); with 3,200-event
  timelines this yields 3200, 1600, 1067, 800... events per year for spans
  of 1, 2, 3, 4... years.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyInput, TooFewEvents, TooFewIntervals, UnscoredEvent
from .model import Corpus, Timeline, inter_event_times, timestamps

YEAR_SECONDS = int(365.25 * 86400)  # 31_557_600


@dataclass(slots=True)
class UserMetrics:
    """The per-user metric bundle; burstiness fields are None when undefined."""

    user_id: str
    event_count: int
    mean_toxicity: float
    gini: float
    burstiness_all: float | None
    burstiness_toxic: float | None
    burstiness_benign: float | None
    span_years: int
    tweets_per_year: float


def _toxicity_array(timeline: Timeline) -> np.ndarray:
    scores = np.empty(len(timeline), dtype=np.float64)
    for i, ev in enumerate(timeline.events):
        if ev.toxicity is None:
            raise UnscoredEvent(timeline.user_id, ev.event_id)
        scores[i] = ev.toxicity
    return scores


def mean_toxicity(timeline: Timeline) -> float:
    """Arithmetic mean of the timeline's toxicity scores."""
    if not timeline.events:
        raise EmptyInput(f"user {timeline.user_id!r} has no events")
    scores = _toxicity_array(timeline)
    return math.fsum(scores.tolist()) / scores.size


def gini(values: Sequence[float] | np.ndarray) -> float:
    """Gini concentration index of non-negative values, in [0, 1).

    Sorted-rank form of G = sum_ij |x_i - x_j| / (2 n^2 mu): with x sorted
    ascending and 1-based ranks i, G = sum((2i - n - 1) x_i) / (n sum(x)).
    Identical values give 0; a single holder among n gives (n-1)/n.
    All-zero input returns 0 by convention.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise EmptyInput("gini of empty value list")
    if (x < 0).any():
        raise ValueError("gini requires non-negative values")
    total = float(x.sum())
    if total == 0.0:
        return 0.0
    x = np.sort(x)
    if x[0] == x[-1]:
        return 0.0
    n = x.size
    ranks = 2.0 * np.arange(1, n + 1) - n - 1
    # clamp the tiny negative rounding residue near-equal vectors can leave
    return max(0.0, float(np.dot(ranks, x) / (n * total)))


def _burstiness_of(intervals: np.ndarray) -> float | None:
    """B over >= 1 intervals; None when every interval is zero (B undefined)."""
    mu = float(intervals.mean())
    if mu == 0.0:
        return None
    sigma = float(intervals.std())
    return (sigma - mu) / (sigma + mu)


def burstiness(intervals: Sequence[float] | np.ndarray) -> float | None:
    """Burstiness B = (sigma - mu) / (sigma + mu) of inter-event times.

    sigma is the population standard deviation.  B is -1 exactly for a
    periodic series (sigma = 0), near 0 for a memoryless one, and approaches
    1 as sigma grows for finite mu.  Returns None when all intervals are
    zero (sigma = mu = 0 leaves B undefined).
    """
    arr = np.asarray(intervals, dtype=np.float64)
    if arr.size < 2:
        raise TooFewIntervals(f"need >= 2 inter-event times, got {arr.size}")
    if (arr < 0).any():
        raise ValueError("inter-event times must be non-negative")
    return _burstiness_of(arr)


def split_burstiness(timeline: Timeline) -> tuple[float | None, float | None]:
    """Burstiness computed separately over toxic and benign sub-sequences.

    Events scoring strictly above the user's mean toxicity form the toxic
    sub-sequence, the rest the benign one; each keeps original timestamps and
    B is taken over the gaps between its consecutive members.  A class with
    fewer than two events has no gaps and yields None.
    """
    if len(timeline) < 2:
        raise TooFewEvents(f"user {timeline.user_id!r} has {len(timeline)} event(s); need >= 2")
    scores = _toxicity_array(timeline)
    ts = timestamps(timeline)
    mean = math.fsum(scores.tolist()) / scores.size
    toxic_mask = scores > mean

    def class_b(mask: np.ndarray) -> float | None:
        class_ts = ts[mask]
        if class_ts.size < 2:
            return None
        return _burstiness_of(np.diff(class_ts).astype(np.float64))

    return class_b(toxic_mask), class_b(~toxic_mask)


def activity_span(timeline: Timeline) -> tuple[int, float]:
    """(span_years, tweets_per_year) for the timeline.

    span_years is the ceiling of the first-to-last duration over 365.25 days,
    floored at 1 year so single-burst users still report a span.
    """
    if not timeline.events:
        raise EmptyInput(f"user {timeline.user_id!r} has no events")
    duration = timeline.events[-1].timestamp - timeline.events[0].timestamp
    span_years = max(1, -(-duration // YEAR_SECONDS))
    return span_years, len(timeline.events) / span_years


def compute_user_metrics(timeline: Timeline) -> UserMetrics:
    """Assemble the full metric bundle for one scored timeline."""
    scores = _toxicity_array(timeline)
    n = len(timeline.events)
    mean = math.fsum(scores.tolist()) / n
    g = gini(scores)
    if n >= 3:
        b_all = burstiness(inter_event_times(timeline))
    else:
        b_all = None
    if n >= 2:
        b_toxic, b_benign = split_burstiness(timeline)
    else:
        b_toxic, b_benign = None, None
    span_years, per_year = activity_span(timeline)
    return UserMetrics(
        user_id=timeline.user_id,
        event_count=n,
        mean_toxicity=mean,
        gini=g,
        burstiness_all=b_all,
        burstiness_toxic=b_toxic,
        burstiness_benign=b_benign,
        span_years=span_years,
        tweets_per_year=per_year,
    )


def compute_metrics(corpus: Corpus, parallelism: int = 1) -> list[UserMetrics]:
    """Metric bundles for every timeline, sorted by user_id.

    Per-timeline work is independent; with parallelism > 1 it fans out to a
    thread pool and results are merged back in user order, so the output is
    identical at any worker count.
    """
    user_ids = sorted(corpus.timelines)
    tls = [corpus.timelines[uid] for uid in user_ids]
    if parallelism > 1 and len(tls) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(compute_user_metrics, tls))
    return [compute_user_metrics(tl) for tl in tls]


METRICS_CSV_HEADER = [
    "user_id", "event_count", "mean_toxicity", "gini", "burstiness_all",
    "burstiness_toxic", "burstiness_benign", "span_years", "tweets_per_year",
]


def _fmt(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return repr(value)


def write_metrics_csv(metrics: Sequence[UserMetrics], path: str | Path) -> None:
    """Write the per-user metrics table (empty field = undefined burstiness)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_CSV_HEADER)
        for m in sorted(metrics, key=lambda m: m.user_id):
            writer.writerow([
                m.user_id, m.event_count, _fmt(m.mean_toxicity), _fmt(m.gini),
                _fmt(m.burstiness_all), _fmt(m.burstiness_toxic), _fmt(m.burstiness_benign),
                m.span_years, _fmt(m.tweets_per_year),
            ])


def read_metrics_csv(path: str | Path) -> list[UserMetrics]:
    """Read a metrics table written by :func:`write_metrics_csv`."""
    out: list[UserMetrics] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(UserMetrics(
                user_id=row["user_id"],
                event_count=int(row["event_count"]),
                mean_toxicity=float(row["mean_toxicity"]),
                gini=float(row["gini"]),
                burstiness_all=float(row["burstiness_all"]) if row["burstiness_all"] else None,
                burstiness_toxic=float(row["burstiness_toxic"]) if row["burstiness_toxic"] else None,
                burstiness_benign=float(row["burstiness_benign"]) if row["burstiness_benign"] else None,
                span_years=int(row["span_years"]),
                tweets_per_year=float(row["tweets_per_year"]),
            ))
    return out
