import math

import numpy as np
import pytest
from sklearn.base import clone

from modridge.core import Dataset, ExperimentSpec
from modridge.diagnostics import (
    ABLATION_MODELS,
    FullBitstringModel,
    MarginalsNaiveBayes,
    PairwiseMaxEnt,
    ablation,
    ece,
    expected_calibration_error,
    reliability_bins,
    stratified_split,
    uniformity,
)


def test_null_marginals_near_half(null_dataset):
    rep = uniformity(null_dataset)
    assert rep.max_marginal_deviation <= 0.02
    assert len(rep.pairs) == 28


def test_duplicated_bit_covariance():
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, (4000, 8), dtype=np.uint8)
    bits[:, 5] = bits[:, 4]  # D6 = D5
    ds = Dataset(ExperimentSpec(keys=(1,), shots_per_key=4000), np.ones(4000, int), bits)
    rep = uniformity(ds)
    i, j, cov, tag = rep.pairs[0]
    p = bits[:, 4].mean()
    assert (i, j, tag) == (5, 6, "within-B")
    assert cov == pytest.approx(p * (1 - p), abs=1e-12)


def test_pair_tags_and_symmetry(calibrated_dataset):
    rep = uniformity(calibrated_dataset)
    assert rep.tag_counts() == {"within-A": 6, "within-B": 6, "cross": 16}
    np.testing.assert_allclose(rep.covariance, rep.covariance.T, atol=1e-15)
    assert np.allclose(np.diag(rep.covariance), np.array(rep.marginals) * (1 - np.array(rep.marginals)))


def test_split_halves_each_group(calibrated_dataset):
    train, test = stratified_split(calibrated_dataset, seed=1)
    assert train.group_sizes.tolist() == [512] * 8
    assert test.group_sizes.tolist() == [512] * 8
    again, _ = stratified_split(calibrated_dataset, seed=1)
    assert again == train
    other, _ = stratified_split(calibrated_dataset, seed=2)
    assert other != train


def test_split_odd_group():
    spec = ExperimentSpec(keys=(1, 3), shots_per_key=3)
    ds = Dataset.from_outcomes(spec, [1, 1, 1, 3, 3, 3], [0, 1, 2, 3, 4, 5])
    train, test = stratified_split(ds, seed=0)
    assert train.group_sizes.tolist() == [1, 1]
    assert test.group_sizes.tolist() == [2, 2]


def test_pairwise_separates_pair_pattern():
    # label depends only on whether D1 == D2: invisible to marginals, linear in pair features
    rng = np.random.default_rng(3)
    X = rng.integers(0, 2, (600, 8))
    y = (X[:, 0] == X[:, 1]).astype(int)
    pair = PairwiseMaxEnt(n_iter=2000, learning_rate=0.5).fit(X, y)
    assert (pair.predict(X) == y).mean() == 1.0
    nb = MarginalsNaiveBayes().fit(X, y)
    assert (nb.predict(X) == y).mean() < 0.65


@pytest.mark.parametrize("name", list(ABLATION_MODELS))
def test_model_probabilities(name, calibrated_dataset):
    model = ABLATION_MODELS[name]().fit(calibrated_dataset.bits[::4], calibrated_dataset.labels[::4])
    proba = model.predict_proba(calibrated_dataset.bits[:300])
    assert proba.shape == (300, 8)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
    assert (proba > 0).all()
    assert set(model.predict(calibrated_dataset.bits[:50])) <= set(calibrated_dataset.spec.keys)
    twin = clone(model).fit(calibrated_dataset.bits[::4], calibrated_dataset.labels[::4])
    np.testing.assert_array_equal(twin.predict_proba(calibrated_dataset.bits[:300]), proba)


@pytest.mark.parametrize("name", list(ABLATION_MODELS))
def test_model_needs_two_classes(name):
    with pytest.raises(ValueError):
        ABLATION_MODELS[name]().fit(np.zeros((4, 8)), [1, 1, 1, 1])


def test_pairwise_gradient_matches_finite_difference():
    rng = np.random.default_rng(0)
    X = rng.integers(0, 2, (40, 8))
    model = PairwiseMaxEnt(l2=0.05)
    Phi = model.design(X)
    Y = np.eye(3)[rng.integers(0, 3, 40)]
    W = rng.normal(0, 0.3, (3, Phi.shape[1]))
    _, grad = model.loss_and_grad(W, Phi, Y)
    eps = 1e-6
    for idx in [(0, 0), (1, 3), (2, 20), (0, Phi.shape[1] - 1)]:
        Wp, Wm = W.copy(), W.copy()
        Wp[idx] += eps
        Wm[idx] -= eps
        fd = (model.loss_and_grad(Wp, Phi, Y)[0] - model.loss_and_grad(Wm, Phi, Y)[0]) / (2 * eps)
        assert grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-9)


def test_naive_bayes_smoothing():
    X = np.array([[1, 0], [1, 0], [0, 0]])
    nb = MarginalsNaiveBayes().fit(X, [0, 0, 1])
    np.testing.assert_allclose(nb.theta_, [[3 / 4, 1 / 4], [1 / 3, 1 / 3]])


def test_full_model_unseen_outcome():
    X = np.array([[0, 0], [0, 1], [1, 1]])
    full = FullBitstringModel().fit(X, [0, 0, 1])
    # class 0: counts (1,0,1,0)+1 over 6; class 1: (0,0,0,1)+1 over 5
    np.testing.assert_allclose(np.exp(full.log_prob_[0]), [2 / 6, 1 / 6, 2 / 6, 1 / 6])
    np.testing.assert_allclose(full.predict_proba([[1, 0]]).sum(), 1.0)


def test_ece_known_cases():
    assert expected_calibration_error(np.ones(10), np.ones(10)) == 0.0
    assert expected_calibration_error(np.ones(10), np.arange(10) % 2) == pytest.approx(0.5)
    # two bins: (0.3, 2 of 4 right) and (0.9, 1 of 4 right)
    conf = [0.3] * 4 + [0.9] * 4
    correct = [1, 1, 0, 0, 1, 0, 0, 0]
    assert expected_calibration_error(conf, correct) == pytest.approx(0.5 * 0.2 + 0.5 * 0.65)


def test_ece_calibrated_predictor_small():
    rng = np.random.default_rng(0)
    conf = rng.uniform(0.125, 1.0, 100_000)
    correct = rng.random(conf.size) < conf
    assert expected_calibration_error(conf, correct) < 0.02


def test_ece_bins_are_right_closed():
    rows = reliability_bins([0.1, 0.10000001, 0.0], [1, 1, 1])
    assert [r["count"] for r in rows] == [2, 1]
    assert rows[0]["center"] == pytest.approx(0.05)


def test_ece_from_proba():
    proba = np.array([[0.9, 0.1], [0.2, 0.8]])
    assert ece(proba, [0, 1]) == pytest.approx(0.15)
    assert ece(proba, ["a", "a"], classes=["a", "b"]) == pytest.approx(0.5 * 0.1 + 0.5 * 0.8)
    with pytest.raises(ValueError):
        ece(np.zeros((0, 2)), [])
    with pytest.raises(ValueError):
        expected_calibration_error([], [])


def test_null_ablation_at_chance(null_dataset):
    res = ablation(null_dataset, seed=4)
    sigma = math.sqrt(0.125 * 0.875 / res.n_test)
    assert res.n_train == res.n_test == 4096
    for name, m in res.models.items():
        assert abs(m["accuracy"] - 0.125) < 3 * sigma, name
        assert sum(b["count"] for b in m["bins"]) == res.n_test


def test_ablation_deterministic(calibrated_dataset):
    assert ablation(calibrated_dataset, seed=1).as_dict() == ablation(calibrated_dataset, seed=1).as_dict()
