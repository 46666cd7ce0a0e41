from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fradiag import winding as W
from fradiag.data import Connection, FaultLabel, FaultType, FrequencyGrid, FRASweep, Winding
from fradiag.errors import DomainError
from fradiag.metrics import (
    ConfusionMatrix,
    accuracy,
    cc,
    cc_ed_map,
    confusion,
    ed,
    macro_f1,
    mean_curve,
    per_class_f1,
)


def brute_force(preds, truths, C):
    """Accuracy and macro F1 straight from the (pred, truth) pairs."""
    acc = sum(p == t for p, t in zip(preds, truths)) / len(preds)
    f1s = []
    for c in range(C):
        tp = sum(p == c and t == c for p, t in zip(preds, truths))
        fp = sum(p == c and t != c for p, t in zip(preds, truths))
        fn = sum(p != c and t == c for p, t in zip(preds, truths))
        f1s.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return acc, sum(f1s) / C


def test_metrics_match_brute_force_on_random_instances():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        C = int(rng.integers(2, 7))
        n = int(rng.integers(1, 60))
        truths, preds = rng.integers(0, C, n), rng.integers(0, C, n)
        cm = confusion(preds, truths, C)
        acc, f1 = brute_force(preds.tolist(), truths.tolist(), C)
        assert accuracy(cm) == acc
        assert abs(macro_f1(cm) - f1) <= 1e-12


def test_confusion_examples():
    cm = confusion([0, 1, 2], [0, 1, 2], 3)
    assert np.array_equal(cm.counts, np.eye(3, dtype=int)) and np.trace(cm.counts) == 3
    assert confusion([0, 1, 1, 1], [0, 0, 1, 1], 2).counts.tolist() == [[1, 1], [0, 2]]
    with pytest.raises(DomainError):
        confusion([0, 3], [0, 1], 3)
    with pytest.raises(DomainError):
        confusion([0], [0, 1], 3)


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=80))
def test_confusion_row_sums_are_truth_counts(pairs):
    preds, truths = zip(*pairs)
    cm = confusion(preds, truths, 5)
    assert cm.counts.sum(axis=1).tolist() == np.bincount(truths, minlength=5).tolist()
    assert cm.total == len(pairs)
    assert np.all(cm.tp() + cm.fp() + cm.fn() + cm.tn() == cm.total)


def test_accuracy_examples():
    binary = ConfusionMatrix(np.array([[90, 2], [3, 5]]))  # class 0 positive: TP 90, FN 2, FP 3, TN 5
    assert accuracy(binary) == pytest.approx(0.95)
    assert accuracy(ConfusionMatrix(np.eye(4, dtype=int))) == 1.0
    assert accuracy(ConfusionMatrix(np.array([[1, 1], [0, 2]]))) == 0.75
    with pytest.raises(DomainError):
        accuracy(ConfusionMatrix(np.zeros((2, 2), dtype=int)))


def test_macro_f1_examples():
    assert macro_f1(ConfusionMatrix(np.eye(3, dtype=int))) == 1.0
    cm = ConfusionMatrix(np.array([[2, 0], [1, 1]]))
    assert np.allclose(per_class_f1(cm), [0.8, 2 / 3])
    assert macro_f1(cm) == pytest.approx(0.7333333333333333, abs=1e-9)
    with pytest.raises(DomainError):
        macro_f1(ConfusionMatrix(np.zeros((3, 3), dtype=int)))


def test_absent_class_scores_zero_and_counts_in_denominator():
    cm = ConfusionMatrix(np.array([[3, 0, 0], [0, 1, 0], [0, 0, 0]]))
    assert per_class_f1(cm).tolist() == [1.0, 1.0, 0.0]
    assert macro_f1(cm) == pytest.approx(2 / 3)


@given(st.permutations(range(4)), st.integers(0, 2**31))
def test_macro_f1_is_invariant_to_class_order(perm, seed):
    rng = np.random.default_rng(seed)
    counts = rng.integers(0, 10, (4, 4))
    counts[0, 0] += 1
    perm = np.asarray(perm)
    a, b = ConfusionMatrix(counts), ConfusionMatrix(counts[np.ix_(perm, perm)])
    assert np.allclose(per_class_f1(b), per_class_f1(a)[perm])
    assert macro_f1(a) == pytest.approx(macro_f1(b), abs=1e-12)


def direct_cc(X, Y):
    n = len(X)
    mx, my = sum(X) / n, sum(Y) / n
    num = sum((x - mx) * (y - my) for x, y in zip(X, Y))
    return num / (sum((x - mx) ** 2 for x in X) ** 0.5 * sum((y - my) ** 2 for y in Y) ** 0.5)


def direct_ed(X, Y):
    return sum((x - y) ** 2 for x, y in zip(X, Y)) ** 0.5


vectors = st.integers(2, 40).flatmap(
    lambda n: st.tuples(
        arrays(np.float64, n, elements=st.floats(-100, 100)),
        arrays(np.float64, n, elements=st.floats(-100, 100)),
    )
)


@given(vectors)
def test_cc_and_ed_agree_with_direct_formulas(pair):
    X, Y = pair
    assert abs(ed(X, Y) - direct_ed(X.tolist(), Y.tolist())) <= 1e-9
    assert ed(X, Y) == ed(Y, X) and ed(X, X) == 0.0
    if np.ptp(X) > 1e-3 and np.ptp(Y) > 1e-3:
        r = cc(X, Y)
        assert abs(r - direct_cc(X.tolist(), Y.tolist())) <= 1e-9
        assert -1.0 <= r <= 1.0 and r == pytest.approx(cc(Y, X), abs=1e-12)
        assert cc(X, X) == pytest.approx(1.0, abs=1e-12)
        assert cc(X, 7.0 - X) == pytest.approx(-1.0, abs=1e-12)


@given(vectors, st.floats(0.01, 100), st.floats(-1e3, 1e3))
def test_cc_is_invariant_under_positive_affine_maps(pair, a, b):
    X, Y = pair
    if np.ptp(X) > 1e-3 and np.ptp(Y) > 1e-3:
        assert cc(a * X + b, Y) == pytest.approx(cc(X, Y), abs=1e-9)


def test_cc_and_ed_examples():
    # deviations [-1.5, -0.5, 0.5, 1.5] and [-1.75, 0.25, 1.25, 0.25]: 3.5 / sqrt(5 * 4.75)
    assert cc([1, 2, 3, 4], [2, 4, 5, 4]) == pytest.approx(3.5 / np.sqrt(23.75), abs=1e-9)
    assert ed([0, 0], [3, 4]) == 5.0
    with pytest.raises(DomainError):
        cc([1, 1, 1], [1, 2, 3])
    with pytest.raises(DomainError):
        cc([1], [2])
    with pytest.raises(DomainError):
        ed([1, 2], [1, 2, 3])


def test_ed_polarization_identity_and_triangle_inequality():
    rng = np.random.default_rng(5)
    for _ in range(200):
        X, Y, Z = rng.normal(0, 30, (3, 50))
        zero = np.zeros(50)
        assert ed(X, Y) ** 2 == pytest.approx(ed(X, zero) ** 2 + ed(Y, zero) ** 2 - 2 * X @ Y, abs=1e-9, rel=1e-12)
        assert ed(X, Z) <= ed(X, Y) + ed(Y, Z) + 1e-12


def test_mean_curve():
    grid = FrequencyGrid()
    a = FRASweep(np.linspace(-100, -10, 2000), grid)
    b = FRASweep(np.linspace(-80, -20, 2000), grid)
    assert np.array_equal(mean_curve([a, a]).values, a.values)
    m = mean_curve([a, b])
    assert m.values.size == 2000
    assert np.allclose(m.values, (a.values + b.values) / 2)
    with pytest.raises(DomainError):
        mean_curve([])
    other = FRASweep(np.linspace(-100, -10, 2000), FrequencyGrid(f_min=1e3, f_max=1e6))
    with pytest.raises(DomainError):
        mean_curve([a, other])


def test_cc_ed_map_on_noise_free_fb_degrees():
    labels = [FaultLabel(FaultType.NORMAL)] * 2 + [
        FaultLabel(FaultType.FB, d, p) for d in (1, 2, 3, 4) for p in range(0, 7, 2)
    ]
    ds = W.simulate_dataset(
        Winding.DISC10, Connection.CIW, labels, list(range(len(labels))), jitter_sigma=0.0, noise_db=0.0
    )
    stats = cc_ed_map(ds, select=lambda lab: lab.fault_type is FaultType.FB)
    assert len(stats) == len(labels) - 2
    assert np.all((stats.cc >= -1) & (stats.cc <= 1)) and np.all(stats.ed >= 0)
    means = [stats.ed[stats.keys == d].mean() for d in (1, 2, 3, 4)]
    assert all(x < y for x, y in zip(means, means[1:]))
    # clusters overlap across start positions, but at any one position ED rises with degree
    assert np.all(np.diff(stats.ed.reshape(4, 4), axis=0) > 0)
    assert sorted(stats.mean_curves) == [1, 2, 3, 4]
    self_map = cc_ed_map(ds, select=lambda lab: lab.fault_type is FaultType.NORMAL)
    assert np.allclose(self_map.cc, 1.0) and np.allclose(self_map.ed, 0.0, atol=1e-9)


def test_cc_ed_map_rejects_foreign_reference():
    ds = W.simulate_dataset(Winding.DISC10, Connection.EE, [FaultLabel(FaultType.NORMAL)], [1])
    ref = FRASweep(np.linspace(-100, -10, 2000), FrequencyGrid(f_min=1e3, f_max=1e6))
    with pytest.raises(DomainError):
        cc_ed_map(ds, ref)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_confusion_csv_round_trip(seed):
    rng = np.random.default_rng(seed)
    cm = ConfusionMatrix(rng.integers(0, 50, (4, 4)))
    back, classes = ConfusionMatrix.from_csv(cm.to_csv(["Normal", "AD", "DSV", "FB"]))
    assert np.array_equal(back.counts, cm.counts) and classes == ["Normal", "AD", "DSV", "FB"]
