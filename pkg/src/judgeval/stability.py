"""Ranking stability between human-derived and model-derived system scores.

Correlations are tie-aware (Kendall's tau-b, Spearman over average ranks,
Pearson product-moment); rank-biased overlap uses the extrapolated form for
two conjoint full-length rankings. The bootstrap resamples topics with
replacement (topics are the exchangeable unit of a test collection) and
is fully determined by its seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as scipy_stats

from .agreement import StatValue
from .effectiveness import EffectivenessRow


@dataclass(frozen=True)
class SystemScores:
    """Per-system means plus the per-topic scores they were averaged from.

    Means are taken over the shared evaluated-topic set so that two
    SystemScores built for the same run pool are directly comparable.
    """

    metric: str
    per_topic: dict[str, dict[str, float]]  # run_tag -> topic_id -> score
    topics: tuple[str, ...]
    per_system: dict[str, float]

    @classmethod
    def from_rows(cls, rows: Iterable[EffectivenessRow]) -> "SystemScores":
        rows = list(rows)
        if not rows:
            raise ValueError("no effectiveness rows given")
        metrics = {row.metric for row in rows}
        if len(metrics) > 1:
            raise ValueError(f"rows mix metrics: {sorted(metrics)}")
        tags = [row.run_tag for row in rows]
        if len(tags) != len(set(tags)):
            raise ValueError("duplicate run tags in effectiveness rows")
        shared = set.intersection(*(set(row.per_topic) for row in rows))
        topics = tuple(sorted(shared))
        per_topic = {row.run_tag: dict(row.per_topic) for row in rows}
        per_system = {
            row.run_tag: _mean([row.per_topic[t] for t in topics]) for row in rows
        }
        return cls(
            metric=metrics.pop(),
            per_topic=per_topic,
            topics=topics,
            per_system=per_system,
        )

    def systems(self) -> list[str]:
        return sorted(self.per_system)


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def _aligned(x: dict[str, float], y: dict[str, float]) -> tuple[list[float], list[float]]:
    if set(x) != set(y):
        raise ValueError(
            f"system sets differ: only-x {sorted(set(x) - set(y))}, "
            f"only-y {sorted(set(y) - set(x))}"
        )
    keys = sorted(x)
    if len(keys) < 2:
        raise ValueError("need at least two systems")
    return [x[k] for k in keys], [y[k] for k in keys]


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> StatValue:
    """Tie-aware Kendall's tau-b; 0 with the degenerate flag when either
    vector is entirely tied."""
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("vectors must share a length >= 2")
    if len(set(x)) == 1 or len(set(y)) == 1:
        return StatValue(0.0, degenerate=True)
    tau = scipy_stats.kendalltau(x, y, variant="b").statistic
    return StatValue(float(tau))


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> StatValue:
    """Pearson correlation over average-ranked values."""
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("vectors must share a length >= 2")
    if len(set(x)) == 1 or len(set(y)) == 1:
        return StatValue(0.0, degenerate=True)
    rho = scipy_stats.spearmanr(x, y).statistic
    return StatValue(float(rho))


def pearson_rho(x: Sequence[float], y: Sequence[float]) -> StatValue:
    """Product-moment correlation; degenerate when either variance is zero."""
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("vectors must share a length >= 2")
    if len(set(x)) == 1 or len(set(y)) == 1:
        return StatValue(0.0, degenerate=True)
    rho = scipy_stats.pearsonr(x, y).statistic
    return StatValue(float(rho))


def rbo_ext(
    x_ranking: Sequence[str], y_ranking: Sequence[str], p: float = 0.9
) -> float:
    """Extrapolated rank-biased overlap of two conjoint rankings.

    Both rankings must be permutations of the same item set. With overlap
    X_d at depth d and n = len(ranking):

        rbo = (X_n / n) * p^n + ((1 - p) / p) * sum_d (X_d / d) * p^d
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    n = len(x_ranking)
    if n == 0:
        raise ValueError("rankings are empty")
    if len(set(x_ranking)) != n or len(set(y_ranking)) != len(y_ranking):
        raise ValueError("rankings contain duplicates")
    if set(x_ranking) != set(y_ranking):
        raise ValueError("rankings are not permutations of the same set")
    seen_x: set[str] = set()
    seen_y: set[str] = set()
    overlap = 0
    weighted_sum = 0.0
    for depth in range(1, n + 1):
        item_x = x_ranking[depth - 1]
        item_y = y_ranking[depth - 1]
        if item_x == item_y:
            overlap += 1
        else:
            if item_x in seen_y:
                overlap += 1
            if item_y in seen_x:
                overlap += 1
            seen_x.add(item_x)
            seen_y.add(item_y)
        weighted_sum += (overlap / depth) * (p**depth)
    agreement_at_n = overlap / n
    return agreement_at_n * (p**n) + ((1.0 - p) / p) * weighted_sum


def bootstrap_tau_ci(
    scores_h: SystemScores,
    scores_l: SystemScores,
    n_resamples: int = 2000,
    level: float = 0.95,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap CI for tau-b between two score sources.

    Resamples the shared evaluated-topic set with replacement, recomputes
    every system's mean over the sampled multiset for both sources, and
    takes percentile endpoints of the resulting tau distribution.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    systems = scores_h.systems()
    if systems != scores_l.systems():
        raise ValueError("score sources cover different systems")
    topics = sorted(set(scores_h.topics) & set(scores_l.topics))
    if len(topics) < 2:
        raise ValueError("need at least two shared evaluated topics")
    h_matrix = np.array(
        [[scores_h.per_topic[s][t] for t in topics] for s in systems]
    )
    l_matrix = np.array(
        [[scores_l.per_topic[s][t] for t in topics] for s in systems]
    )
    rng = np.random.default_rng(seed)
    n_topics = len(topics)
    taus = np.empty(n_resamples)
    for b in range(n_resamples):
        picks = rng.integers(0, n_topics, size=n_topics)
        taus[b] = kendall_tau(
            h_matrix[:, picks].mean(axis=1).tolist(),
            l_matrix[:, picks].mean(axis=1).tolist(),
        ).value
    tail = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(taus, [tail, 100.0 - tail])
    return float(low), float(high)


@dataclass(frozen=True)
class StabilityReport:
    metric: str
    kendall_tau: StatValue
    spearman_rho: StatValue
    pearson_rho: StatValue
    rbo: float
    rbo_p: float
    tau_ci_low: float
    tau_ci_high: float
    n_systems: int
    n_resamples: int
    seed: int


def ranking_from_scores(per_system: dict[str, float]) -> list[str]:
    """Systems ordered by descending mean score; ties break by tag."""
    return [tag for tag, _ in sorted(per_system.items(), key=lambda kv: (-kv[1], kv[0]))]


def stability_report(
    scores_h: SystemScores,
    scores_l: SystemScores,
    *,
    rbo_p: float = 0.9,
    n_resamples: int = 2000,
    level: float = 0.95,
    seed: int = 0,
) -> StabilityReport:
    x, y = _aligned(scores_h.per_system, scores_l.per_system)
    ci_low, ci_high = bootstrap_tau_ci(
        scores_h, scores_l, n_resamples=n_resamples, level=level, seed=seed
    )
    return StabilityReport(
        metric=scores_h.metric,
        kendall_tau=kendall_tau(x, y),
        spearman_rho=spearman_rho(x, y),
        pearson_rho=pearson_rho(x, y),
        rbo=rbo_ext(
            ranking_from_scores(scores_h.per_system),
            ranking_from_scores(scores_l.per_system),
            p=rbo_p,
        ),
        rbo_p=rbo_p,
        tau_ci_low=ci_low,
        tau_ci_high=ci_high,
        n_systems=len(x),
        n_resamples=n_resamples,
        seed=seed,
    )
