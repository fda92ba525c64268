"""Median-split cohort classification and rank correlation.

A user is a Consistently Toxic User (CTU) when their Gini index of toxicity
scores is at or below the cohort median while their mean toxicity is at or
above the cohort median: steadily toxic rather than occasionally extreme.
Everyone else is a Baseline User (BU).  Both boundaries are inclusive.

Because the split uses medians, the partition depends only on ranks: it is
invariant under input order and under any strictly monotone transform
applied uniformly to either metric.
"""

from __future__ import annotations

import itertools
import json
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import betainc

from .errors import DegenerateConstantInput, LengthMismatch, TooFewUsers
from .metrics import UserMetrics


@dataclass(slots=True)
class CohortSummary:
    """Cohort medians, the rank correlation between the two metrics, and the
    CTU/BU partition.  Users lacking either metric are reported in
    ``excluded_ids`` and take no part in the medians."""

    median_mean_toxicity: float
    median_gini: float
    spearman_rho: float | None
    spearman_p: float | None
    ctu_ids: set[str] = field(default_factory=set)
    bu_ids: set[str] = field(default_factory=set)
    excluded_ids: set[str] = field(default_factory=set)

    @property
    def n_ctu(self) -> int:
        return len(self.ctu_ids)

    @property
    def n_bu(self) -> int:
        return len(self.bu_ids)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        ranks[order[i:j + 1]] = avg
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(np.dot(xc, xc)) * float(np.dot(yc, yc)))
    if denom == 0.0:
        raise DegenerateConstantInput("correlation undefined for a constant vector")
    return float(np.dot(xc, yc) / denom)


def spearman(x: Sequence[float], y: Sequence[float],
             exact_permutation: bool = False) -> tuple[float, float]:
    """Spearman rank correlation with average-rank tie handling.

    rho is the Pearson correlation of the two rank vectors.  The p-value is
    the two-sided large-sample t approximation with n - 2 degrees of freedom;
    with ``exact_permutation`` (n <= 12 only) it is instead the exact
    two-sided permutation probability of |rho| at least as large as observed.
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.size != ya.size:
        raise LengthMismatch(f"x has {xa.size} values, y has {ya.size}")
    n = xa.size
    if n < 3:
        raise ValueError(f"need >= 3 pairs, got {n}")
    rx = _average_ranks(xa)
    ry = _average_ranks(ya)
    rho = _pearson(rx, ry)
    rho = max(-1.0, min(1.0, rho))

    if exact_permutation:
        if n > 12:
            raise ValueError("exact permutation p-value is limited to n <= 12")
        threshold = abs(rho) - 1e-12
        hits = total = 0
        for perm in itertools.permutations(range(n)):
            total += 1
            if abs(_pearson(rx, ry[list(perm)])) >= threshold:
                hits += 1
        return rho, hits / total

    if abs(rho) == 1.0:
        return rho, 0.0
    t2 = rho * rho * (n - 2) / (1.0 - rho * rho)
    df = n - 2
    # two-sided tail of Student's t via the regularized incomplete beta
    p = float(betainc(df / 2.0, 0.5, df / (df + t2)))
    return rho, min(1.0, max(0.0, p))


def _median(values: np.ndarray) -> float:
    """Median with the even-count convention: average of the middle two."""
    return float(np.median(values))


def classify(metrics_table: Sequence[UserMetrics],
             exact_permutation: bool = False) -> CohortSummary:
    """Partition a cohort into CTUs and BUs by the median-split quadrant rule.

    Medians are taken over all users with both metrics defined; a user is CTU
    iff gini <= median_gini and mean_toxicity >= median_mean_toxicity.  When
    either metric is constant across the cohort the correlation is undefined
    and reported as None.
    """
    usable = [m for m in metrics_table
              if m.mean_toxicity is not None and m.gini is not None]
    excluded = {m.user_id for m in metrics_table} - {m.user_id for m in usable}
    if len(usable) < 2:
        raise TooFewUsers(f"need >= 2 users with defined metrics, got {len(usable)}")

    tox = np.array([m.mean_toxicity for m in usable])
    gin = np.array([m.gini for m in usable])
    median_tox = _median(tox)
    median_gini = _median(gin)

    if len(usable) < 3:
        rho, p = None, None  # too few pairs for a rank correlation
    else:
        try:
            rho, p = spearman(tox, gin, exact_permutation=exact_permutation)
        except DegenerateConstantInput:
            rho, p = None, None

    ctu_ids = {
        m.user_id for m in usable
        if m.gini <= median_gini and m.mean_toxicity >= median_tox
    }
    bu_ids = {m.user_id for m in usable} - ctu_ids
    return CohortSummary(
        median_mean_toxicity=median_tox,
        median_gini=median_gini,
        spearman_rho=rho,
        spearman_p=p,
        ctu_ids=ctu_ids,
        bu_ids=bu_ids,
        excluded_ids=excluded,
    )


def group_of(summary: CohortSummary, user_id: str) -> str | None:
    if user_id in summary.ctu_ids:
        return "CTU"
    if user_id in summary.bu_ids:
        return "BU"
    return None


def write_classification_csv(summary: CohortSummary, path: str | Path) -> None:
    """Per-user group table: ``user_id,group`` with group in {CTU, BU}."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "group"])
        for uid in sorted(summary.ctu_ids | summary.bu_ids):
            writer.writerow([uid, group_of(summary, uid)])


def write_summary_json(summary: CohortSummary, path: str | Path,
                       metrics_table: Sequence[UserMetrics] | None = None) -> None:
    """Cohort summary: medians, correlation, and per-group user/event counts."""
    payload = {
        "median_mean_toxicity": summary.median_mean_toxicity,
        "median_gini": summary.median_gini,
        "spearman_rho": summary.spearman_rho,
        "spearman_p": summary.spearman_p,
        "n_users": summary.n_ctu + summary.n_bu,
        "n_ctu": summary.n_ctu,
        "n_bu": summary.n_bu,
        "n_excluded": len(summary.excluded_ids),
    }
    if metrics_table is not None:
        by_id = {m.user_id: m for m in metrics_table}
        payload["ctu_total_events"] = sum(by_id[u].event_count for u in summary.ctu_ids)
        payload["bu_total_events"] = sum(by_id[u].event_count for u in summary.bu_ids)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_classification_csv(path: str | Path) -> dict[str, str]:
    """Read back a ``user_id,group`` table as a dict."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["user_id"]] = row["group"]
    return out
