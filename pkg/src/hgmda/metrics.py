"""Classification and clustering metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import ClusterError, kmeans2


@dataclass
class ConfusionTally:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    @property
    def num_classes(self) -> int:
        return len(self.tp)

    @classmethod
    def from_predictions(cls, y_true, y_pred, num_classes: int | None = None) -> "ConfusionTally":
        y_true, y_pred = np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)
        if y_true.shape != y_pred.shape:
            raise ValueError(f"label/prediction shapes differ: {y_true.shape} vs {y_pred.shape}")
        if y_true.size == 0:
            raise ValueError("no predictions to score")
        m = num_classes or int(max(y_true.max(), y_pred.max())) + 1
        hit = y_true == y_pred
        tp = np.bincount(y_true[hit], minlength=m)
        fp = np.bincount(y_pred[~hit], minlength=m)
        fn = np.bincount(y_true[~hit], minlength=m)
        return cls(tp, fp, fn)


def _f1(tp, fp, fn) -> float:
    if tp == 0:
        return 0.0
    p, r = tp / (tp + fp), tp / (tp + fn)
    return 2 * p * r / (p + r)


def macro_f1(tally: ConfusionTally) -> float:
    """Mean per-class F1; a class with ``P + R = 0`` scores 0."""
    return float(np.mean([_f1(*v) for v in zip(tally.tp, tally.fp, tally.fn)]))


def micro_f1(tally: ConfusionTally) -> float:
    """F1 of pooled counts, with precision over TP+FP and recall over TP+FN."""
    return _f1(tally.tp.sum(), tally.fp.sum(), tally.fn.sum())


def _contingency(a, b) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"partitions differ in length: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("empty partitions")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(a, b) -> float:
    """Normalised mutual information, arithmetic-mean normalisation."""
    table = _contingency(a, b)
    n = table.sum()
    ha, hb = _entropy(table.sum(axis=1), n), _entropy(table.sum(axis=0), n)
    if ha == 0 and hb == 0:
        return 1.0
    nz = table > 0
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))
    mi = float((table[nz] / n * np.log(table[nz] * n / outer[nz])).sum())
    return max(0.0, mi / ((ha + hb) / 2))


def ari(a, b) -> float:
    """Adjusted Rand index."""
    table = _contingency(a, b)
    n = int(table.sum())
    comb = lambda x: x * (x - 1) // 2
    index = int(comb(table).sum())
    sa, sb = int(comb(table.sum(axis=1)).sum()), int(comb(table.sum(axis=0)).sum())
    total = comb(n)
    if total == 0:
        return 1.0
    expected = sa * sb / total
    maximum = (sa + sb) / 2
    if maximum == expected:
        return 1.0
    return (index - expected) / (maximum - expected)


def kmeans_embeddings(x, k: int, restarts: int = 10, seed: int = 0, iters: int = 100) -> tuple[np.ndarray, float]:
    """Best-inertia k-means over ``restarts`` k-means++ initialisations.

    Returns (assignment, inertia).
    """
    x = np.asarray(x, dtype=np.float64)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > len(x):
        raise ValueError(f"k={k} exceeds the {len(x)} points")
    rng = np.random.default_rng(seed)
    best, best_inertia = None, np.inf
    for _ in range(restarts):
        if np.ptp(x, axis=0).max() == 0:
            return np.zeros(len(x), dtype=np.int64), 0.0
        try:
            centers, labels = kmeans2(x, k, iter=iters, minit="++", seed=rng, missing="raise")
        except ClusterError:
            continue
        inertia = float(((x - centers[labels]) ** 2).sum())
        if inertia < best_inertia:
            best, best_inertia = labels.astype(np.int64), inertia
    if best is None:
        raise ValueError("k-means left a cluster empty on every restart")
    return best, best_inertia
