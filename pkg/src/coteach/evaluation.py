"""Ranking evaluation over judged test groups.

Metrics: MAP, MRR, P@1 and R_n@k for k in {1, 2, 5}, averaged over
contexts. R_n@k divides by the total number of positives in the group, so
multi-positive contexts are handled. Groups whose candidates are all
positive or all negative carry no ranking signal and are filtered out
before evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import matcher
from .corpus import TestGroup, TokenizedDialogue

RECALL_KS = (1, 2, 5)


@dataclass(frozen=True)
class RankedGroup:
    """Candidates of one context sorted by descending model score.

    Score ties keep ascending original candidate index. ``entries`` holds
    (candidate index, score, human label).
    """

    context_id: int
    entries: tuple[tuple[int, float, int], ...]


@dataclass(frozen=True)
class MetricsReport:
    map: float
    mrr: float
    p_at_1: float
    r10_at_1: float
    r10_at_2: float
    r10_at_5: float
    n_contexts: int


def filter_degenerate(groups):
    """Drop groups whose labels are all equal; returns (kept, n_removed)."""
    kept = [g for g in groups if len({label for _, label in g.candidates}) == 2]
    return kept, len(groups) - len(kept)


def rank_group(model: matcher.ModelState, context, candidates,
               context_id: int = 0) -> RankedGroup:
    """Score and sort one context's candidates (stable on ties)."""
    if not candidates:
        raise ValueError("empty candidate list")
    scored = []
    for idx, (response, label) in enumerate(candidates):
        s = matcher.score(model, TokenizedDialogue(context, response))
        scored.append((idx, s, label))
    scored.sort(key=lambda e: (-e[1], e[0]))
    return RankedGroup(context_id, tuple(scored))


def rank_test_groups(model: matcher.ModelState, groups) -> list[RankedGroup]:
    return [rank_group(model, g.context, g.candidates, context_id=i)
            for i, g in enumerate(groups)]


def _group_metrics(group: RankedGroup) -> dict[str, float]:
    labels = [label for _, _, label in group.entries]
    n_pos = sum(labels)
    if n_pos == 0:
        raise ValueError(
            f"group {group.context_id} has no positive candidate; "
            "filter degenerate groups before evaluation")
    precisions = []
    first_pos_rank = None
    seen_pos = 0
    for rank, label in enumerate(labels, start=1):
        if label == 1:
            seen_pos += 1
            precisions.append(seen_pos / rank)
            if first_pos_rank is None:
                first_pos_rank = rank
    out = {
        "AP": sum(precisions) / n_pos,
        "RR": 1.0 / first_pos_rank,
        "P@1": float(labels[0]),
    }
    for k in RECALL_KS:
        out[f"R@{k}"] = sum(labels[:k]) / n_pos
    return out


def per_group_metrics(groups) -> dict[str, np.ndarray]:
    """Metric vectors with one entry per group, for significance testing."""
    if not groups:
        raise ValueError("no groups to evaluate")
    rows = [_group_metrics(g) for g in groups]
    return {key: np.array([r[key] for r in rows]) for key in rows[0]}


def compute_metrics(groups) -> MetricsReport:
    """Mean metrics over ranked groups."""
    per_group = per_group_metrics(groups)
    return MetricsReport(
        map=float(per_group["AP"].mean()),
        mrr=float(per_group["RR"].mean()),
        p_at_1=float(per_group["P@1"].mean()),
        r10_at_1=float(per_group["R@1"].mean()),
        r10_at_2=float(per_group["R@2"].mean()),
        r10_at_5=float(per_group["R@5"].mean()),
        n_contexts=len(groups),
    )


def paired_t_test(metric_a, metric_b) -> tuple[float, float]:
    """Two-tailed paired t-test on per-group metric vectors.

    Zero-variance conventions: all differences zero -> (0, p=1); constant
    nonzero difference -> (signed inf, p=0).
    """
    a = np.asarray(metric_a, dtype=float)
    b = np.asarray(metric_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("metric vectors must be 1-d and of equal length")
    n = a.size
    if n < 2:
        raise ValueError("need at least 2 paired observations")
    diff = a - b
    mean = diff.mean()
    sd = diff.std(ddof=1)
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * float(stats.t.sf(abs(t), df=n - 1))
    return float(t), p


def ema(series, alpha: float) -> list[float]:
    """Exponential moving average: out[t] = a*x[t] + (1-a)*out[t-1]."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    out: list[float] = []
    for x in series:
        if not out:
            out.append(float(x))
        else:
            out.append(alpha * float(x) + (1.0 - alpha) * out[-1])
    return out
