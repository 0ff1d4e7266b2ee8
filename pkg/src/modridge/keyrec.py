"""Per-shot key classification and per-group dictionary recovery.

The per-shot classifier scores each candidate key by the circular distance of
the shot's ridge residual from zero and picks the closest. It never looks at
labels, which is what lets permutation nulls reuse one set of predictions.
"""
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._rng import stream
from .core import circular_distance, residual_table, ridge_distance, ridge_residual
from .ridge_metrics import wilson_interval
from .validation import check_bits, check_bits_labels

__all__ = [
    "RidgeKeyClassifier",
    "KeyAccuracy",
    "DictionaryRecovery",
    "classify_shot",
    "per_shot_accuracy",
    "dictionary_recovery",
]


def classify_shot(u, v, keys, n, tie_rng):
    """Closest-ridge key for one outcome; ties resolved uniformly via ``tie_rng``."""
    if not keys:
        raise ValueError("no candidate keys")
    dist = [ridge_distance(ridge_residual(k, u, v, n), n) for k in keys]
    best = min(dist)
    ties = [k for k, d in zip(keys, dist) if d == best]
    return ties[int(tie_rng.random() * len(ties))]


class RidgeKeyClassifier(ClassifierMixin, BaseEstimator):
    """Label-free ridge-distance classifier over bit matrices.

    Parameters
    ----------
    n : int
        Register width; ``X`` has ``2n`` columns.
    keys : sequence of int, optional
        Candidate keys in tie-break order. Defaults to the labels seen in
        :meth:`fit`, in order of first appearance.
    random_state : int
        Seed of the tie-break stream. Row ``i`` of ``X`` always consumes the
        ``i``-th uniform of the stream ``(random_state, "classify")``.
    """

    def __init__(self, n=4, keys=None, random_state=0):
        self.n = n
        self.keys = keys
        self.random_state = random_state

    def fit(self, X, y=None):
        if y is not None:
            X, y = check_bits_labels(X, y, 2 * self.n)
        else:
            X = check_bits(X, 2 * self.n)
        if self.keys is not None:
            classes = np.asarray(self.keys, dtype=np.int64)
        elif y is not None:
            _, first = np.unique(y, return_index=True)
            classes = y[np.sort(first)]
        else:
            raise ValueError("either keys or y is required")
        self.classes_ = classes
        dist = circular_distance(residual_table(classes, self.n), self.n)  # (K, M)
        self.tie_mask_ = (dist == dist.min(axis=0)).T  # (M, K)
        self.tie_count_ = self.tie_mask_.sum(axis=1)
        return self

    def _outcomes(self, X):
        X = check_bits(X, 2 * self.n).astype(np.int64)
        return X @ (np.int64(1) << np.arange(2 * self.n, dtype=np.int64))

    def predict(self, X):
        check_is_fitted(self)
        outcomes = self._outcomes(X)
        draws = stream(self.random_state, "classify").random(outcomes.shape[0])
        pick = (draws * self.tie_count_[outcomes]).astype(np.int64)
        cum = np.cumsum(self.tie_mask_, axis=1)[outcomes]
        return self.classes_[(cum > pick[:, None]).argmax(axis=1)]

    def predict_proba(self, X):
        """Uniform mass over the tie set of each row."""
        check_is_fitted(self)
        outcomes = self._outcomes(X)
        mask = self.tie_mask_[outcomes]
        return mask / mask.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class KeyAccuracy:
    correct: int
    total: int
    accuracy: float
    ci: tuple
    chance: float


def per_shot_accuracy(dataset, seed=0):
    clf = RidgeKeyClassifier(dataset.spec.n, dataset.spec.keys, seed).fit(dataset.bits)
    pred = clf.predict(dataset.bits)
    correct = int((pred == dataset.labels).sum())
    total = len(dataset)
    return KeyAccuracy(correct, total, correct / total, wilson_interval(correct, total), 1 / len(dataset.spec.keys))


@dataclass(frozen=True)
class DictionaryRecovery:
    predictions: dict  # true key -> predicted key
    accuracy: float
    hit_counts: dict  # true key -> hits under each candidate key, spec order


def dictionary_recovery(dataset):
    """Recover one key per true-key group by maximising total ridge hits.

    Ties go to the smaller mean circular ridge distance, then the smaller key.
    """
    spec = dataset.spec
    keys = np.asarray(spec.keys, dtype=np.int64)
    dist = circular_distance(residual_table(keys, spec.n), spec.n)  # (K, M)
    predictions, hit_counts = {}, {}
    for key, sl in dataset.group_slices():
        if sl.stop == sl.start:
            raise ValueError(f"key group {key} is empty")
        d = dist[:, dataset.outcomes[sl]]
        hits = (d == 0).sum(axis=1)
        mean_dist = d.mean(axis=1)
        best = np.lexsort((keys, mean_dist, -hits))[0]
        predictions[key] = int(keys[best])
        hit_counts[key] = hits.tolist()
    accuracy = sum(predictions[k] == k for k in spec.keys) / len(spec.keys)
    return DictionaryRecovery(predictions, accuracy, hit_counts)


