import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from riskaudit.errors import DegenerateLabels, TooFewPerClass
from riskaudit.roc import (
    MARGINAL,
    SIGNIFICANT,
    auroc,
    confusion_at,
    delong_correlated,
    delong_uncorrelated,
    operating_threshold,
    significance_band,
    structural_components,
)
from riskaudit.synth import brute_force_auc

# Six subjects, three of each class; components worked out by hand.
HAND_Y = np.array([1, 1, 1, 0, 0, 0])
HAND_A = np.array([0.9, 0.6, 0.4, 0.7, 0.4, 0.2])
HAND_B = np.array([0.8, 0.3, 0.5, 0.1, 0.6, 0.2])


def test_hand_components():
    v10, v01 = structural_components(HAND_A, HAND_Y)
    np.testing.assert_allclose(v10, [1.0, 2 / 3, 1 / 2], atol=1e-12)
    np.testing.assert_allclose(v01, [1 / 3, 5 / 6, 1.0], atol=1e-12)
    assert auroc(HAND_A, HAND_Y) == pytest.approx(13 / 18, abs=1e-12)


def test_hand_correlated_delong():
    res = delong_correlated(HAND_A, HAND_B, HAND_Y)
    assert res.auc_a == pytest.approx(13 / 18, abs=1e-12)
    assert res.auc_b == pytest.approx(14 / 18, abs=1e-12)
    # var(d10)/3 + var(d01)/3 with d10 = [0, 0, -1/6], d01 = [-2/3, 1/2, 0]
    assert res.variance == pytest.approx(19 / 162, abs=1e-12)
    z = (-1 / 18) / math.sqrt(19 / 162)
    assert res.z == pytest.approx(z, abs=1e-12)
    assert res.p_value == pytest.approx(2 * norm.sf(abs(z)), abs=1e-12)


def test_hand_uncorrelated_variance():
    res = delong_uncorrelated(HAND_A, HAND_Y, HAND_A, HAND_Y)
    # single-AUC variance (7/108 + 13/108) / 3 = 5/81, doubled
    assert res.variance == pytest.approx(10 / 81, abs=1e-12)
    assert res.diff == 0.0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=40))
def test_auroc_matches_pair_count(pairs):
    scores = np.array([s / 6 for s, _ in pairs])
    labels = np.array([int(y) for _, y in pairs])
    if labels.min() == labels.max():
        with pytest.raises(DegenerateLabels):
            auroc(scores, labels)
        return
    assert auroc(scores, labels) == pytest.approx(brute_force_auc(scores, labels), abs=1e-12)


def test_auroc_invariant_to_monotone_transform(rng):
    s = rng.random(300)
    y = (rng.random(300) < s).astype(int)
    assert auroc(np.exp(3 * s), y) == pytest.approx(auroc(s, y), abs=1e-15)


def test_self_comparison_is_null(rng):
    s = rng.random(50)
    y = np.r_[np.ones(20), np.zeros(30)]
    res = delong_correlated(s, s, y)
    assert (res.diff, res.z, res.p_value) == (0.0, 0.0, 1.0)
    assert res.ci95 == (0.0, 0.0)


def test_correlated_is_antisymmetric(rng):
    a, b = rng.random(80), rng.random(80)
    y = (rng.random(80) < 0.4).astype(int)
    ab, ba = delong_correlated(a, b, y), delong_correlated(b, a, y)
    assert ab.diff == pytest.approx(-ba.diff, abs=1e-15)
    assert ab.p_value == pytest.approx(ba.p_value, abs=1e-12)


def test_too_few_per_class():
    with pytest.raises(TooFewPerClass):
        delong_correlated([0.1, 0.2, 0.3], [0.3, 0.2, 0.1], [1, 0, 0])
    with pytest.raises(DegenerateLabels):
        delong_uncorrelated([0.1, 0.2], [0, 0], [0.1, 0.2, 0.3], [1, 0, 1])


def test_operating_threshold_brute_force(rng):
    for _ in range(50):
        n = int(rng.integers(5, 60))
        s = np.round(rng.random(n), 1)
        y = (rng.random(n) < 0.5).astype(int)
        if y.sum() == 0:
            continue
        target = float(rng.choice([0.5, 0.8, 0.9, 0.95, 1.0]))
        op = operating_threshold(s, y, target)
        # largest candidate threshold whose sensitivity reaches the target
        best = max(t for t in np.unique(s) if np.mean(s[y == 1] >= t) >= target - 1e-12)
        assert op.threshold == best
        assert op.achieved_sensitivity >= target - 1e-12


def test_confusion_counts():
    s = np.array([0.9, 0.8, 0.3, 0.7, 0.2, 0.1])
    y = np.array([1, 1, 1, 0, 0, 0])
    cs = confusion_at(s, y, 0.5)
    assert (cs.tp, cs.fp, cs.tn, cs.fn) == (2, 1, 2, 1)
    assert cs.sensitivity == pytest.approx(2 / 3)
    assert confusion_at(s[3:], y[3:], 0.5).sensitivity is None


def test_band_is_total(rng):
    ps = np.r_[rng.random(10_000), 0.05, 0.1, 0.0, 1.0]
    for p in ps:
        band = significance_band(p)
        expected = SIGNIFICANT if p < 0.05 else MARGINAL if p <= 0.1 else None
        assert band == expected


def test_flipping_labels_complements_auroc(rng):
    s = np.round(rng.random(200), 1)
    y = (rng.random(200) < 0.3).astype(int)
    assert auroc(s, 1 - y) == pytest.approx(1 - auroc(s, y), abs=1e-12)


def test_threshold_then_confusion_meets_target(rng):
    s, y = rng.random(500), (rng.random(500) < 0.2).astype(int)
    for target in (0.8, 0.9, 0.95):
        assert confusion_at(s, y, operating_threshold(s, y, target)).sensitivity >= target
