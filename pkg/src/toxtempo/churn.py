"""Alternating life/death churn decomposition of a timeline.

A user's activity is bucketed into consecutive 7-day windows anchored at
their earliest event (half-open [start, start + 7d)), giving a boolean
weekly activity indicator from the first through the last active week.
Maximal runs of active weeks are life periods; maximal runs of inactive
weeks strictly between two lives are death periods, so leading/trailing
inactivity never occurs and the decomposition always starts and ends with a
life.  Each life carries its event count and summed toxicity.

Anchoring at the user's first event keeps the decomposition timezone-free
and invariant under shifting a whole timeline by multiples of 7 days.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyInput, ToxtempoError, UnscoredEvent
from .model import Corpus, Timeline, timestamps

logger = logging.getLogger(__name__)

WEEK_SECONDS = 7 * 86400


@dataclass(slots=True)
class LifePeriod:
    """One maximal run of active weeks with its event mass."""

    start_week: int
    length_weeks: int
    tweet_count: int
    toxicity_sum: float


@dataclass(slots=True)
class ChurnDecomposition:
    """A timeline's lives, deaths and their per-user averages."""

    user_id: str
    week_activity: list[bool]
    lives: list[LifePeriod]
    deaths: list[int]
    avg_life_weeks: float
    avg_death_weeks: float | None
    cycle_count: int

    @property
    def mean_tweets_per_life(self) -> float:
        return sum(l.tweet_count for l in self.lives) / len(self.lives)

    @property
    def mean_toxicity_per_life(self) -> float:
        return sum(l.toxicity_sum for l in self.lives) / len(self.lives)

    def reconstruct_weeks(self) -> list[bool]:
        """Expand lives/deaths back into the boolean week sequence."""
        out: list[bool] = []
        for i, life in enumerate(self.lives):
            if i > 0:
                out.extend([False] * self.deaths[i - 1])
            out.extend([True] * life.length_weeks)
        return out


def week_indices(timeline: Timeline) -> np.ndarray:
    """Week bucket of each event, anchored at the user's earliest event."""
    ts = timestamps(timeline)
    return (ts - ts[0]) // WEEK_SECONDS


def weekly_indicator(timeline: Timeline) -> list[bool]:
    """Weekly activity booleans spanning the first through last event week."""
    if not timeline.events:
        raise EmptyInput(f"user {timeline.user_id!r} has no events")
    idx = week_indices(timeline)
    n_weeks = int(idx[-1]) + 1
    active = np.zeros(n_weeks, dtype=bool)
    active[idx] = True
    return active.tolist()


def decompose(timeline: Timeline) -> ChurnDecomposition:
    """Split a scored timeline into alternating life and death periods.

    Lives are maximal runs of active weeks; deaths are the inactive gaps
    between consecutive lives.  Conservation holds: life tweet counts sum to
    the event count and life toxicity sums to the total toxicity.
    """
    if not timeline.events:
        raise EmptyInput(f"user {timeline.user_id!r} has no events")
    scores = np.empty(len(timeline.events), dtype=np.float64)
    for i, ev in enumerate(timeline.events):
        if ev.toxicity is None:
            raise UnscoredEvent(timeline.user_id, ev.event_id)
        scores[i] = ev.toxicity

    idx = week_indices(timeline)
    active_weeks = np.unique(idx)  # sorted
    # run boundaries: a new life starts wherever consecutive active weeks
    # are more than one week apart
    breaks = np.nonzero(np.diff(active_weeks) > 1)[0]
    run_starts = np.concatenate(([0], breaks + 1))
    run_ends = np.concatenate((breaks, [active_weeks.size - 1]))  # inclusive

    lives: list[LifePeriod] = []
    deaths: list[int] = []
    for k, (a, b) in enumerate(zip(run_starts, run_ends)):
        start_week = int(active_weeks[a])
        end_week = int(active_weeks[b])
        # events are week-sorted, so each life owns a contiguous slice
        lo = int(np.searchsorted(idx, start_week, side="left"))
        hi = int(np.searchsorted(idx, end_week, side="right"))
        lives.append(LifePeriod(
            start_week=start_week,
            length_weeks=end_week - start_week + 1,
            tweet_count=hi - lo,
            toxicity_sum=float(scores[lo:hi].sum()),
        ))
        if k > 0:
            prev = lives[-2]
            deaths.append(start_week - (prev.start_week + prev.length_weeks))

    avg_life = sum(l.length_weeks for l in lives) / len(lives)
    avg_death = sum(deaths) / len(deaths) if deaths else None
    return ChurnDecomposition(
        user_id=timeline.user_id,
        week_activity=weekly_indicator(timeline),
        lives=lives,
        deaths=deaths,
        avg_life_weeks=avg_life,
        avg_death_weeks=avg_death,
        cycle_count=len(lives),
    )


def cohort_churn(corpus: Corpus, parallelism: int = 1) -> list[ChurnDecomposition]:
    """Decompose every timeline, sorted by user_id.

    Per-user failures (e.g. unscored events) are logged and skipped; the
    cohort run never aborts on one bad user.
    """
    user_ids = sorted(corpus.timelines)

    def safe(uid: str) -> ChurnDecomposition | None:
        try:
            return decompose(corpus.timelines[uid])
        except ToxtempoError as exc:
            logger.warning("churn: skipping user %s: %s", uid, exc)
            return None

    if parallelism > 1 and len(user_ids) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(safe, user_ids))
    else:
        results = [safe(uid) for uid in user_ids]
    return [r for r in results if r is not None]


@dataclass(slots=True)
class ChurnSummaryRow:
    """The five per-user churn quantities the report plots."""

    user_id: str
    avg_life_weeks: float
    avg_death_weeks: float | None
    cycle_count: int
    mean_tweets_per_life: float
    mean_toxicity_per_life: float


def summary_row(d: ChurnDecomposition) -> ChurnSummaryRow:
    return ChurnSummaryRow(
        user_id=d.user_id,
        avg_life_weeks=d.avg_life_weeks,
        avg_death_weeks=d.avg_death_weeks,
        cycle_count=d.cycle_count,
        mean_tweets_per_life=d.mean_tweets_per_life,
        mean_toxicity_per_life=d.mean_toxicity_per_life,
    )


CHURN_CSV_HEADER = [
    "user_id", "avg_life_weeks", "avg_death_weeks", "cycles",
    "mean_tweets_per_life", "mean_toxicity_per_life",
]


def write_churn_csv(decomps: Sequence[ChurnDecomposition | ChurnSummaryRow],
                    path: str | Path) -> None:
    """Per-user churn summary (empty avg_death_weeks = user never went dark)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CHURN_CSV_HEADER)
        for d in sorted(decomps, key=lambda d: d.user_id):
            writer.writerow([
                d.user_id,
                repr(d.avg_life_weeks),
                repr(d.avg_death_weeks) if d.avg_death_weeks is not None else "",
                d.cycle_count,
                repr(d.mean_tweets_per_life),
                repr(d.mean_toxicity_per_life),
            ])


def read_churn_csv(path: str | Path) -> list[ChurnSummaryRow]:
    """Read back the churn summary written by :func:`write_churn_csv`."""
    out: list[ChurnSummaryRow] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(ChurnSummaryRow(
                user_id=row["user_id"],
                avg_life_weeks=float(row["avg_life_weeks"]),
                avg_death_weeks=float(row["avg_death_weeks"]) if row["avg_death_weeks"] else None,
                cycle_count=int(row["cycles"]),
                mean_tweets_per_life=float(row["mean_tweets_per_life"]),
                mean_toxicity_per_life=float(row["mean_toxicity_per_life"]),
            ))
    return out
