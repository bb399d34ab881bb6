"""Empirical AUROC, DeLong comparisons and operating-point metrics.

AUROC is the Mann-Whitney estimate with ties counted as one half.  The
DeLong variance uses the structural components

    v10_i = mean_j psi(X_i, Y_j)   (one per positive)
    v01_j = mean_i psi(X_i, Y_j)   (one per negative)

computed from midranks in O(N log N).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

from .errors import DegenerateLabels, TooFewPerClass

Z975 = float(norm.ppf(0.975))  # 1.959964
CORRELATED = "correlated"
UNCORRELATED = "uncorrelated"

SIGNIFICANT = "significant"
MARGINAL = "marginal"


@dataclass(frozen=True)
class RocComparison:
    auc_a: float
    auc_b: float
    diff: float
    variance: float
    z: float
    p_value: float
    ci95: tuple
    mode: str

    def to_json(self):
        return {"auc_a": self.auc_a, "auc_b": self.auc_b, "diff": self.diff,
                "variance": self.variance, "z": self.z, "p_value": self.p_value,
                "ci95": list(self.ci95), "mode": self.mode}


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    target_sensitivity: float
    achieved_sensitivity: float


@dataclass(frozen=True)
class ConfusionSummary:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def sensitivity(self):
        """``None`` when the subgroup has no positives."""
        d = self.tp + self.fn
        return self.tp / d if d else None

    @property
    def specificity(self):
        d = self.tn + self.fp
        return self.tn / d if d else None

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


def _split(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    pos = labels == 1
    if not pos.any() or pos.all():
        raise DegenerateLabels("need at least one positive and one negative")
    return scores[pos], scores[~pos]


def structural_components(scores, labels):
    """DeLong placement values ``(v10, v01)`` for positives and negatives."""
    x, y = _split(scores, labels)
    m, n = len(x), len(y)
    r_all = rankdata(np.concatenate([x, y]))
    r_x = rankdata(x)
    r_y = rankdata(y)
    v10 = (r_all[:m] - r_x) / n
    v01 = 1.0 - (r_all[m:] - r_y) / m
    return v10, v01


def auroc(scores, labels):
    """Probability a random positive outranks a random negative (ties 1/2)."""
    v10, _ = structural_components(scores, labels)
    return float(v10.mean())


def _result(auc_a, auc_b, variance, mode):
    diff = auc_a - auc_b
    variance = max(float(variance), 0.0)
    if variance < 1e-15:
        if diff == 0.0:
            z, p = 0.0, 1.0
        else:
            z, p = math.copysign(math.inf, diff), 0.0
    else:
        z = diff / math.sqrt(variance)
        p = float(2.0 * norm.sf(abs(z)))
    half = Z975 * math.sqrt(variance)
    return RocComparison(auc_a=auc_a, auc_b=auc_b, diff=diff, variance=variance, z=z,
                         p_value=min(p, 1.0), ci95=(diff - half, diff + half), mode=mode)


def _check_counts(labels):
    m = int(np.sum(labels == 1))
    n = len(labels) - m
    if m == 0 or n == 0:
        raise DegenerateLabels("need at least one positive and one negative")
    if m < 2 or n < 2:
        raise TooFewPerClass(f"need >= 2 per class, have {m} positives / {n} negatives")


def delong_correlated(scores_a, scores_b, labels):
    """Paired DeLong test for two models scored on the same subjects."""
    labels = np.asarray(labels)
    _check_counts(labels)
    a10, a01 = structural_components(scores_a, labels)
    b10, b01 = structural_components(scores_b, labels)
    s10 = np.cov(np.vstack([a10, b10]), ddof=1)
    s01 = np.cov(np.vstack([a01, b01]), ddof=1)
    m, n = len(a10), len(a01)
    variance = ((s10[0, 0] + s10[1, 1] - 2 * s10[0, 1]) / m
                + (s01[0, 0] + s01[1, 1] - 2 * s01[0, 1]) / n)
    return _result(float(a10.mean()), float(b10.mean()), variance, CORRELATED)


def auc_variance(scores, labels):
    """DeLong variance of a single empirical AUROC."""
    labels = np.asarray(labels)
    _check_counts(labels)
    v10, v01 = structural_components(scores, labels)
    return float(v10.mean()), float(np.var(v10, ddof=1) / len(v10) + np.var(v01, ddof=1) / len(v01))


def delong_uncorrelated(scores_a, labels_a, scores_b, labels_b):
    """DeLong test for AUROCs estimated on two independent samples."""
    auc_a, var_a = auc_variance(scores_a, labels_a)
    auc_b, var_b = auc_variance(scores_b, labels_b)
    return _result(auc_a, auc_b, var_a + var_b, UNCORRELATED)


def operating_threshold(scores, labels, target_sens=0.95):
    """Largest observed score ``t`` whose rule ``score >= t`` reaches the target.

    Because sensitivity only grows as the cut drops, the answer is the k-th
    largest positive score with ``k = ceil(target * m)``.
    """
    if not 0.0 < target_sens <= 1.0:
        raise ValueError("target sensitivity must lie in (0, 1]")
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = np.sort(scores[labels == 1])[::-1]
    if len(pos) == 0:
        raise DegenerateLabels("no positives to set a sensitivity threshold")
    m = len(pos)
    k = min(m, max(1, math.ceil(target_sens * m - 1e-9)))
    t = float(pos[k - 1])
    achieved = float(np.sum(pos >= t)) / m
    return OperatingPoint(threshold=t, target_sensitivity=target_sens, achieved_sensitivity=achieved)


def confusion_at(scores, labels, op):
    threshold = op.threshold if isinstance(op, OperatingPoint) else float(op)
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    called = scores >= threshold
    pos = labels == 1
    return ConfusionSummary(
        tp=int(np.sum(called & pos)),
        fp=int(np.sum(called & ~pos)),
        tn=int(np.sum(~called & ~pos)),
        fn=int(np.sum(~called & pos)),
    )


def significance_band(p):
    if p < 0.05:
        return SIGNIFICANT
    if p <= 0.1:
        return MARGINAL
    return None
