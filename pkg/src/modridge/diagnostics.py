"""Uniformity checks, representation ablation and calibration error.

The ablation compares three per-shot key classifiers that see progressively
richer views of a shot:

* :class:`MarginalsNaiveBayes` - independent Bernoulli bits per class;
* :class:`PairwiseMaxEnt` - softmax-linear over bits and all bit-pair products;
* :class:`FullBitstringModel` - a categorical over every outcome per class.

All three follow the scikit-learn classifier protocol (``fit``,
``predict_proba``, ``predict``, ``get_params``) on 0/1 bit matrices.
"""
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._rng import stream
from .core import Dataset, pack_bits
from .validation import check_bits, check_bits_labels

__all__ = [
    "UniformityReport",
    "AblationResult",
    "MarginalsNaiveBayes",
    "PairwiseMaxEnt",
    "FullBitstringModel",
    "ABLATION_MODELS",
    "uniformity",
    "stratified_split",
    "train_ablation_model",
    "expected_calibration_error",
    "reliability_bins",
    "ece",
    "ablation",
]


def _pair_tag(i, j, n):
    a_i, a_j = i < n, j < n
    if a_i and a_j:
        return "within-A"
    if not a_i and not a_j:
        return "within-B"
    return "cross"


@dataclass(frozen=True)
class UniformityReport:
    marginals: list
    max_marginal_deviation: float
    pairs: list  # (i, j, cov, tag), 1-based positions, sorted by |cov| descending
    covariance: np.ndarray

    def tag_counts(self):
        counts = {"within-A": 0, "within-B": 0, "cross": 0}
        for *_, tag in self.pairs:
            counts[tag] += 1
        return counts

    def as_dict(self, top=None):
        pairs = self.pairs if top is None else self.pairs[:top]
        return {
            "marginals": list(self.marginals),
            "max_marginal_deviation": self.max_marginal_deviation,
            "pairs": [{"i": i, "j": j, "cov": c, "tag": t} for i, j, c, t in pairs],
            "tag_counts": self.tag_counts(),
        }


def uniformity(dataset):
    """Pooled single-bit marginals and all pairwise covariances."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    X = dataset.bits.astype(float)
    p = X.mean(axis=0)
    cov = (X.T @ X) / X.shape[0] - np.outer(p, p)
    n = dataset.spec.n
    pairs = [
        (i + 1, j + 1, float(cov[i, j]), _pair_tag(i, j, n))
        for i, j in combinations(range(X.shape[1]), 2)
    ]
    pairs.sort(key=lambda t: -abs(t[2]))
    return UniformityReport(p.tolist(), float(np.abs(p - 0.5).max()), pairs, cov)


def stratified_split(dataset, seed=0):
    """Shuffle each key group (stream ``(seed, "split", i)``) and halve it.

    The first ``size // 2`` shots of a group go to train, the rest to test.
    """
    train_idx, test_idx = [], []
    for i, (_, sl) in enumerate(dataset.group_slices()):
        idx = np.arange(sl.start, sl.stop)
        idx = stream(seed, "split", i).permutation(idx)
        half = idx.size // 2
        train_idx.append(idx[:half])
        test_idx.append(idx[half:])
    train_idx, test_idx = np.concatenate(train_idx), np.concatenate(test_idx)
    spec = dataset.spec
    train = Dataset(spec, dataset.labels[train_idx], dataset.bits[train_idx]) if train_idx.size else None
    test = Dataset(spec, dataset.labels[test_idx], dataset.bits[test_idx])
    return train, test


# --- models --------------------------------------------------------------------

def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_classes(y):
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("training data must contain at least two classes")
    return classes, np.searchsorted(classes, y)


class _ProbaClassifier(ClassifierMixin, BaseEstimator):
    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


class MarginalsNaiveBayes(_ProbaClassifier):
    """Independent-Bernoulli class-conditional model with additive smoothing."""

    def __init__(self, alpha=1.0):
        self.alpha = alpha

    def fit(self, X, y):
        X, y = check_bits_labels(X, y)
        self.classes_, yi = _check_classes(y)
        counts = np.bincount(yi, minlength=self.classes_.size)
        ones = np.zeros((self.classes_.size, X.shape[1]))
        np.add.at(ones, yi, X)
        self.theta_ = (ones + self.alpha) / (counts[:, None] + 2 * self.alpha)
        self.class_log_prior_ = np.log(counts / counts.sum())
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self)
        X = check_bits(X, self.n_features_in_).astype(float)
        log_lik = X @ np.log(self.theta_).T + (1 - X) @ np.log1p(-self.theta_).T
        return _softmax(log_lik + self.class_log_prior_)


def pairwise_features(X):
    """Bits followed by all products ``x_i * x_j`` (``i < j``)."""
    X = np.asarray(X, dtype=float)
    i, j = np.triu_indices(X.shape[1], k=1)
    return np.hstack([X, X[:, i] * X[:, j]])


class PairwiseMaxEnt(_ProbaClassifier):
    """Multiclass maximum-entropy model on bit and bit-pair features.

    Trained by full-batch gradient descent from zero weights, so the fitted
    parameters depend only on the data and the hyperparameters. The intercept
    column is not penalised.
    """

    def __init__(self, l2=1e-3, learning_rate=0.1, n_iter=500):
        self.l2 = l2
        self.learning_rate = learning_rate
        self.n_iter = n_iter

    @staticmethod
    def design(X):
        phi = pairwise_features(X)
        return np.hstack([np.ones((phi.shape[0], 1)), phi])

    def loss_and_grad(self, W, Phi, Y):
        """Mean cross-entropy plus ``l2/2 * ||W[:, 1:]||^2`` and its gradient."""
        P = _softmax(Phi @ W.T)
        N = Phi.shape[0]
        nll = -np.sum(Y * np.log(np.clip(P, 1e-300, None))) / N
        penalised = W.copy()
        penalised[:, 0] = 0.0
        loss = nll + 0.5 * self.l2 * np.sum(penalised**2)
        grad = (P - Y).T @ Phi / N + self.l2 * penalised
        return loss, grad

    def fit(self, X, y):
        X, y = check_bits_labels(X, y)
        self.classes_, yi = _check_classes(y)
        Phi = self.design(X)
        Y = np.eye(self.classes_.size)[yi]
        W = np.zeros((self.classes_.size, Phi.shape[1]))
        for _ in range(self.n_iter):
            _, grad = self.loss_and_grad(W, Phi, Y)
            W -= self.learning_rate * grad
        self.coef_ = W
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self)
        X = check_bits(X, self.n_features_in_)
        return _softmax(self.design(X) @ self.coef_.T)


class FullBitstringModel(_ProbaClassifier):
    """Smoothed categorical over all ``2**bit_count`` outcomes per class."""

    def __init__(self, alpha=1.0):
        self.alpha = alpha

    def fit(self, X, y):
        X, y = check_bits_labels(X, y)
        if X.shape[1] > 20:
            raise ValueError("full-bitstring model limited to 20 bits")
        self.classes_, yi = _check_classes(y)
        n_out = 1 << X.shape[1]
        outcomes = pack_bits(X)
        counts = np.zeros((self.classes_.size, n_out))
        np.add.at(counts, (yi, outcomes), 1.0)
        smoothed = counts + self.alpha
        self.log_prob_ = np.log(smoothed / smoothed.sum(axis=1, keepdims=True))
        class_counts = np.bincount(yi, minlength=self.classes_.size)
        self.class_log_prior_ = np.log(class_counts / class_counts.sum())
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self)
        X = check_bits(X, self.n_features_in_)
        return _softmax(self.log_prob_[:, pack_bits(X)].T + self.class_log_prior_)


ABLATION_MODELS = {
    "marginals_only": MarginalsNaiveBayes,
    "pairwise": PairwiseMaxEnt,
    "full_bitstring": FullBitstringModel,
}


def train_ablation_model(train, variant):
    if variant not in ABLATION_MODELS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {list(ABLATION_MODELS)}")
    return ABLATION_MODELS[variant]().fit(train.bits, train.labels)


# --- calibration -----------------------------------------------------------------

def _bin_index(confidence, bins):
    # right-closed equal-width bins; confidence 0 falls in the first bin
    return np.clip(np.ceil(confidence * bins).astype(np.int64) - 1, 0, bins - 1)


def reliability_bins(confidence, correct, bins=10):
    """Per-bin (center, accuracy, mean confidence, count) for nonempty bins."""
    confidence = np.asarray(confidence, dtype=float)
    correct = np.asarray(correct, dtype=float)
    if confidence.size == 0:
        raise ValueError("no predictions")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    idx = _bin_index(confidence, bins)
    count = np.bincount(idx, minlength=bins)
    acc = np.bincount(idx, weights=correct, minlength=bins)
    conf = np.bincount(idx, weights=confidence, minlength=bins)
    out = []
    for b in np.flatnonzero(count):
        out.append(
            {
                "center": (b + 0.5) / bins,
                "accuracy": acc[b] / count[b],
                "confidence": conf[b] / count[b],
                "count": int(count[b]),
            }
        )
    return out


def expected_calibration_error(confidence, correct, bins=10):
    rows = reliability_bins(confidence, correct, bins)
    total = sum(r["count"] for r in rows)
    return float(sum(r["count"] / total * abs(r["accuracy"] - r["confidence"]) for r in rows))


def ece(proba, y_true, classes=None, bins=10):
    """Top-label ECE of a probability matrix against true labels.

    ``classes`` maps columns to labels; without it ``y_true`` holds column
    indices.
    """
    proba = np.asarray(proba, dtype=float)
    if proba.size == 0:
        raise ValueError("no predictions")
    top = proba.argmax(axis=1)
    pred = top if classes is None else np.asarray(classes)[top]
    return expected_calibration_error(proba.max(axis=1), pred == np.asarray(y_true), bins)


@dataclass(frozen=True)
class AblationResult:
    models: dict  # variant -> {"accuracy", "ece", "bins"}
    n_train: int
    n_test: int

    def as_dict(self):
        return {"n_train": self.n_train, "n_test": self.n_test, "models": self.models}


def ablation(dataset, seed=0, bins=10):
    train, test = stratified_split(dataset, seed)
    if train is None:
        raise ValueError("training split is empty")
    models = {}
    for variant in ABLATION_MODELS:
        model = train_ablation_model(train, variant)
        proba = model.predict_proba(test.bits)
        top = proba.argmax(axis=1)
        correct = model.classes_[top] == test.labels
        conf = proba.max(axis=1)
        models[variant] = {
            "accuracy": float(correct.mean()),
            "ece": expected_calibration_error(conf, correct, bins),
            "bins": reliability_bins(conf, correct, bins),
        }
    return AblationResult(models, len(train), len(test))
