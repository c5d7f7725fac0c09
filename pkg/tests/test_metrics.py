import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import normalized_mutual_info_score

from hgmda.metrics import ConfusionTally, ari, kmeans_embeddings, macro_f1, micro_f1, nmi


def confusion_oracle(y, p, m):
    """Per-class TP/FP/FN from a full confusion matrix."""
    cm = np.zeros((m, m), dtype=int)
    for a, b in zip(y, p):
        cm[a, b] += 1
    tp = np.diag(cm)
    return tp, cm.sum(axis=0) - tp, cm.sum(axis=1) - tp


def f1_oracle(tp, fp, fn):
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def pair_counting_ari(a, b):
    """Adjusted Rand index from O(n^2) pair agreement counts."""
    n = len(a)
    same_a = same_b = both = 0
    for i, j in itertools.combinations(range(n), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        same_a += sa
        same_b += sb
        both += sa and sb
    total = n * (n - 1) / 2
    expected = same_a * same_b / total
    maximum = (same_a + same_b) / 2
    if maximum == expected:
        return 1.0
    return (both - expected) / (maximum - expected)


def test_perfect_predictions():
    y = np.array([0, 1, 2, 2, 1])
    t = ConfusionTally.from_predictions(y, y, 3)
    assert macro_f1(t) == 1.0 and micro_f1(t) == 1.0


def test_binary_hand_example():
    t = ConfusionTally(np.array([1, 2]), np.array([1, 1]), np.array([1, 1]))
    assert macro_f1(t) == pytest.approx(7 / 12)


def test_tally_consistency_and_errors():
    r = np.random.default_rng(0)
    y, p = r.integers(0, 4, 50), r.integers(0, 4, 50)
    t = ConfusionTally.from_predictions(y, p, 4)
    assert t.tp.sum() == (y == p).sum() and (t.tp + t.fn).sum() == 50
    with pytest.raises(ValueError):
        ConfusionTally.from_predictions([], [])
    with pytest.raises(ValueError):
        ConfusionTally.from_predictions([0, 1], [0])
    with pytest.raises(ValueError):
        nmi([], [])


def test_classification_metrics_match_oracles():
    r = np.random.default_rng(1)
    for _ in range(100):
        n, m = int(r.integers(1, 1000)), int(r.integers(2, 8))
        y, p = r.integers(0, m, n), r.integers(0, m, n)
        t = ConfusionTally.from_predictions(y, p, m)
        tp, fp, fn = confusion_oracle(y, p, m)
        np.testing.assert_array_equal(t.tp, tp)
        np.testing.assert_array_equal(t.fp, fp)
        np.testing.assert_array_equal(t.fn, fn)
        assert macro_f1(t) == pytest.approx(np.mean([f1_oracle(*v) for v in zip(tp, fp, fn)]), abs=1e-12)
        assert micro_f1(t) == pytest.approx((y == p).mean(), abs=1e-12)


def test_clustering_metrics_match_oracles():
    r = np.random.default_rng(2)
    for _ in range(100):
        n = int(r.integers(2, 120))
        a, b = r.integers(0, r.integers(1, 6), n), r.integers(0, r.integers(1, 6), n)
        assert ari(a, b) == pytest.approx(pair_counting_ari(a, b), abs=1e-12)
        assert nmi(a, b) == pytest.approx(normalized_mutual_info_score(a, b), abs=1e-12)


def test_clustering_special_cases():
    a = np.array([0, 0, 1, 1, 2])
    assert nmi(a, a) == pytest.approx(1.0) and ari(a, a) == pytest.approx(1.0)
    assert ari(np.zeros(5), a) == pytest.approx(0.0)
    relabeled = np.array([2, 2, 0, 0, 1])
    assert nmi(a, relabeled) == pytest.approx(1.0) and ari(a, relabeled) == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=2, max_size=60))
def test_clustering_metrics_are_symmetric(pairs):
    a, b = np.array(pairs).T
    assert nmi(a, b) == pytest.approx(nmi(b, a), abs=1e-12)
    assert ari(a, b) == pytest.approx(ari(b, a), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=80))
def test_f1_bounds(pairs):
    y, p = np.array(pairs).T
    t = ConfusionTally.from_predictions(y, p, 5)
    for v in (macro_f1(t), micro_f1(t)):
        assert 0.0 <= v <= 1.0
    assert (micro_f1(t) == 1.0) == bool((y == p).all())


def test_kmeans_recovers_separated_clouds():
    r = np.random.default_rng(0)
    x = np.vstack([r.normal(size=(30, 2)), r.normal(size=(30, 2)) + 20])
    truth = np.repeat([0, 1], 30)
    assign, inertia = kmeans_embeddings(x, 2, seed=3)
    assert ari(truth, assign) == 1.0 and inertia > 0
    again, _ = kmeans_embeddings(x, 2, seed=3)
    np.testing.assert_array_equal(assign, again)


def test_kmeans_edge_cases():
    assign, inertia = kmeans_embeddings(np.ones((5, 3)), 2)
    assert inertia == 0 and len(set(assign.tolist())) == 1
    with pytest.raises(ValueError):
        kmeans_embeddings(np.zeros((3, 2)), 4)
    with pytest.raises(ValueError):
        kmeans_embeddings(np.zeros((3, 2)), 1)
