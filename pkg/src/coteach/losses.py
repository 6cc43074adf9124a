"""Per-instance loss functions and the learning-protocol container.

A learning protocol is what one peer model hands the other in each
co-teaching iteration: the selected training instances together with their
per-instance margins or weights, plus the loss kind to apply. Margins and
weights are produced by the teacher and treated as constants by the
student's gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .corpus import PairwiseTriple, PointwiseExample

# Loss kinds
CROSS_ENTROPY = "cross_entropy"
WEIGHTED_CROSS_ENTROPY = "weighted_cross_entropy"
HINGE_WITH_MARGIN = "hinge_with_margin"

LOSS_KINDS = (CROSS_ENTROPY, WEIGHTED_CROSS_ENTROPY, HINGE_WITH_MARGIN)

# Scores are clamped to [CE_EPS, 1 - CE_EPS] inside cross_entropy so the
# logs stay finite; the clamp perturbs desk-scale losses below any test
# tolerance used here.
CE_EPS = 1e-7


@dataclass(frozen=True)
class LearningProtocol:
    """Instances plus loss kind for one student update.

    Exactly one of ``pairwise`` / ``pointwise`` is nonempty: the hinge loss
    consumes (triple, margin) pairs, the cross-entropy losses consume
    (example, weight) pairs.
    """

    loss_kind: str
    pairwise: tuple[tuple[PairwiseTriple, float], ...] = ()
    pointwise: tuple[tuple[PointwiseExample, float], ...] = ()

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")
        if bool(self.pairwise) == bool(self.pointwise):
            raise ValueError("exactly one of pairwise/pointwise must be nonempty")
        if self.pairwise and self.loss_kind != HINGE_WITH_MARGIN:
            raise ValueError("pairwise instances require the hinge loss")
        if self.pointwise and self.loss_kind == HINGE_WITH_MARGIN:
            raise ValueError("hinge loss requires pairwise instances")
        for _, margin in self.pairwise:
            if margin < 0:
                raise ValueError(f"negative margin {margin}")
        for _, weight in self.pointwise:
            if not 0.0 <= weight <= 1.0:
                raise ValueError(f"weight {weight} outside [0, 1]")


def cross_entropy(y: int, s: float) -> float:
    """Binary cross-entropy -y*log(s) - (1-y)*log(1-s), score clamped."""
    s = min(max(s, CE_EPS), 1.0 - CE_EPS)
    if y == 1:
        return -math.log(s)
    return -math.log(1.0 - s)


def hinge_with_margin(s_pos: float, s_neg: float, margin: float) -> float:
    """Ranking hinge max(0, margin - s_pos + s_neg)."""
    if margin < 0:
        raise ValueError(f"negative margin {margin}")
    return max(0.0, margin - s_pos + s_neg)


def weighted_ce_sum(instances) -> float:
    """Sum of w_i * cross_entropy(y_i, s_i) over (weight, y, score) tuples."""
    total = 0.0
    for w, y, s in instances:
        if w < 0:
            raise ValueError(f"negative weight {w}")
        total += w * cross_entropy(y, s)
    return total
