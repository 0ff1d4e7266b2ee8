import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modridge.core import ExperimentSpec
from modridge.ridge_metrics import (
    bootstrap_contrast_ci,
    heatmap,
    ridge_hit_probability,
    ridge_stats,
    wilson_interval,
    write_heatmaps,
)
from modridge.simulate import NoiseModel, sample_dataset


@pytest.fixture(scope="module")
def noiseless():
    return sample_dataset(ExperimentSpec(shots_per_key=64), NoiseModel(1.0, 0.0), seed=0)


def test_all_on_ridge(noiseless):
    stats = ridge_hit_probability(noiseless)
    assert stats.p_hit == 1.0 and stats.contrast == 16.0


def test_null_hit_band(null_dataset):
    stats = ridge_hit_probability(null_dataset)
    assert 0.0625 - 0.008 <= stats.p_hit <= 0.0625 + 0.008


def test_contrast_definition(calibrated_dataset):
    stats = ridge_hit_probability(calibrated_dataset)
    assert stats.contrast == stats.p_hit / 2**-4
    for key, (h, c, p) in stats.per_key.items():
        assert p == h / c
        assert stats.key_contrast(key) == p / 2**-4
    assert sum(h for h, _, _ in stats.per_key.values()) == stats.pooled_hits


def test_wilson_reference_anchor():
    lo, hi = wilson_interval(round(0.1830 * 8192), 8192, 1.959964)
    assert abs(lo - 0.1748) <= 5e-4 and abs(hi - 0.1915) <= 5e-4


def test_wilson_known_value():
    # textbook case: 8/10 successes
    lo, hi = wilson_interval(8, 10)
    assert (lo, hi) == pytest.approx((0.4902, 0.9433), abs=1e-4)


def test_wilson_boundaries():
    assert wilson_interval(0, 10)[0] == 0.0
    assert wilson_interval(10, 10)[1] == 1.0
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


@given(st.integers(1, 5000), st.data())
def test_wilson_contains_estimate(trials, data):
    s = data.draw(st.integers(0, trials))
    lo, hi = wilson_interval(s, trials)
    assert 0 <= lo <= s / trials <= hi <= 1


@given(st.floats(0.01, 0.99), st.integers(10, 2000))
def test_wilson_width_shrinks(p, trials):
    # same proportion, 4x the trials
    s = round(p * trials)
    lo1, hi1 = wilson_interval(s, trials)
    lo2, hi2 = wilson_interval(4 * s, 4 * trials)
    assert hi2 - lo2 < hi1 - lo1


def test_bootstrap_degenerate(noiseless):
    assert bootstrap_contrast_ci(noiseless, B=200, seed=1) == (16.0, 16.0)


def test_bootstrap_width_and_containment(calibrated_dataset):
    stats = ridge_stats(calibrated_dataset, B=2000, seed=11)
    lo, hi = stats.contrast_ci
    assert lo <= stats.contrast <= hi
    # binomial sd of contrast ~ 16 * sqrt(p(1-p)/N) ~ 0.068
    assert 0.2 <= hi - lo <= 0.4
    assert stats.wilson_ci[0] <= stats.p_hit <= stats.wilson_ci[1]


def test_bootstrap_deterministic_and_thread_invariant(calibrated_dataset):
    a = bootstrap_contrast_ci(calibrated_dataset, B=300, seed=4)
    b = bootstrap_contrast_ci(calibrated_dataset, B=300, seed=4, n_jobs=3)
    assert a == b


def test_bootstrap_requires_replicates(calibrated_dataset):
    with pytest.raises(ValueError):
        bootstrap_contrast_ci(calibrated_dataset, B=50)


def test_heatmap_noiseless_diagonal(noiseless):
    hm = heatmap(noiseless, 1)
    off = hm.grid.copy()
    np.fill_diagonal(off, 0)
    assert off.sum() == 0
    assert hm.grid.sum() == 64


def test_heatmap_conservation(calibrated_dataset):
    for key, sl in calibrated_dataset.group_slices():
        assert heatmap(calibrated_dataset, key).grid.sum() == sl.stop - sl.start


def test_heatmap_even_key_overlay(noiseless):
    assert {v for _, v in heatmap(noiseless, 8).overlay} == {0, 8}
    with pytest.raises(ValueError):
        heatmap(noiseless, 9)


def test_write_heatmaps(tmp_path, noiseless):
    paths = write_heatmaps(noiseless, tmp_path)
    assert len(paths) == 3 * 8
    rows = (tmp_path / "key_3.csv").read_text().splitlines()
    assert len(rows) == 16 and all(len(r.split(",")) == 16 for r in rows)
    assert (tmp_path / "key_3.pgm").read_text().startswith("P2\n")
    assert (tmp_path / "key_3_ridge.csv").read_text().splitlines()[2] == "1,3"
