"""Synthetic key-labelled shots with an exactly known joint distribution.

The generative model has three stages applied in order:

1. ridge/uniform mixture: with probability ``lam`` draw ``u`` uniformly and
   set ``v = k*u mod 2**n``, otherwise draw ``(u, v)`` uniformly;
2. independent symmetric bit flips with probability ``q``;
3. optional per-bit bias. A bias ``b`` in ``(-0.5, 0.5)`` moves a fair bit's
   one-probability to ``0.5 + b``: for ``b > 0`` a zero is raised to one with
   probability ``2b``; for ``b < 0`` a one is lowered to zero with probability
   ``2|b|``.

Every stage is a linear channel on the outcome table, so :func:`exact_distribution`
is closed form and serves as the oracle for the estimators.
"""
from dataclasses import dataclass

import numpy as np

from ._rng import stream
from .core import Dataset, ExperimentSpec, outcome_bits, residual_table

__all__ = [
    "NoiseModel",
    "ExactJoint",
    "InfeasibleTargetError",
    "exact_distribution",
    "sample_dataset",
    "calibrate_lambda",
    "pooled_hit_probability",
]


class InfeasibleTargetError(ValueError):
    """No mixture weight in [0, 1] reaches the requested hit probability."""


@dataclass(frozen=True)
class NoiseModel:
    lam: float = 1.0
    q: float = 0.0
    bias: tuple = None

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if not 0.0 <= self.q <= 0.5:
            raise ValueError(f"q must be in [0, 0.5], got {self.q}")
        if self.bias is not None:
            bias = tuple(float(b) for b in self.bias)
            if any(not -0.5 < b < 0.5 for b in bias):
                raise ValueError(f"bias offsets must lie in (-0.5, 0.5), got {bias}")
            object.__setattr__(self, "bias", bias)

    def as_dict(self):
        return {"lam": self.lam, "q": self.q, "bias": list(self.bias) if self.bias else None}


@dataclass(frozen=True)
class ExactJoint:
    """Per-key outcome distributions, ``probs[i, u + 2**n * v]`` for ``spec.keys[i]``."""

    spec: ExperimentSpec
    noise: NoiseModel
    probs: np.ndarray

    def joint_table(self):
        """Key/outcome joint with equal key weights (rows sum to ``1/|K|``)."""
        return self.probs / len(self.spec.keys)

    def hit_probabilities(self):
        hits = residual_table(self.spec.keys, self.spec.n) == 0
        return (self.probs * hits).sum(axis=1)

    def pooled_hit_probability(self):
        return float(self.hit_probabilities().mean())


def _apply_bit_channel(probs, bit_count, bit, matrix):
    # probs: (K, 2, ..., 2); outcome bit j is axis 1 + (bit_count - 1 - j)
    axis = 1 + (bit_count - 1 - bit)
    moved = np.moveaxis(probs, axis, -1) @ matrix.T
    return np.moveaxis(moved, -1, axis)


def _bias_matrix(b):
    # rows: output bit, columns: input bit
    if b >= 0:
        return np.array([[1.0 - 2 * b, 0.0], [2 * b, 1.0]])
    return np.array([[1.0, -2 * b], [0.0, 1.0 + 2 * b]])


def exact_distribution(spec, noise):
    m = spec.modulus
    nk = len(spec.keys)
    ridge = (residual_table(spec.keys, spec.n) == 0).astype(float) / m
    probs = noise.lam * ridge + (1.0 - noise.lam) / spec.n_outcomes
    bit_count = spec.bit_count
    probs = probs.reshape((nk,) + (2,) * bit_count)
    if noise.q > 0:
        flip = np.array([[1.0 - noise.q, noise.q], [noise.q, 1.0 - noise.q]])
        for j in range(bit_count):
            probs = _apply_bit_channel(probs, bit_count, j, flip)
    if noise.bias is not None:
        if len(noise.bias) != bit_count:
            raise ValueError(f"bias needs {bit_count} entries, got {len(noise.bias)}")
        for j, b in enumerate(noise.bias):
            if b != 0:
                probs = _apply_bit_channel(probs, bit_count, j, _bias_matrix(b))
    probs = np.ascontiguousarray(probs.reshape(nk, spec.n_outcomes))
    return ExactJoint(spec, noise, probs)


def pooled_hit_probability(spec, noise):
    return exact_distribution(spec, noise).pooled_hit_probability()


def sample_dataset(spec, noise, seed):
    """Draw ``spec.shots_per_key`` i.i.d. shots per key by inverse CDF.

    Key group ``i`` uses the stream ``(seed, "simulate", i)`` so groups can be
    generated in any order.
    """
    joint = exact_distribution(spec, noise)
    labels, outcomes = [], []
    for i, key in enumerate(spec.keys):
        cdf = np.cumsum(joint.probs[i])
        draws = stream(seed, "simulate", i).random(spec.shots_per_key)
        idx = np.searchsorted(cdf, draws * cdf[-1], side="right")
        outcomes.append(np.minimum(idx, spec.n_outcomes - 1))
        labels.append(np.full(spec.shots_per_key, key, dtype=np.int64))
    outcomes = np.concatenate(outcomes)
    return Dataset(spec, np.concatenate(labels), outcome_bits(outcomes, spec.bit_count))


def calibrate_lambda(target_p_hit, q=0.0, spec=None, bias=None, tol=1e-13):
    """Find the mixture weight whose exact pooled hit probability is ``target_p_hit``.

    Bisection on ``lam``; the hit probability is nondecreasing in ``lam``.
    """
    spec = spec or ExperimentSpec()

    def p_hit(lam):
        return pooled_hit_probability(spec, NoiseModel(lam, q, bias))

    lo, hi = 0.0, 1.0
    floor, ceiling = p_hit(lo), p_hit(hi)
    if target_p_hit <= floor + 1e-15 or target_p_hit > ceiling + 1e-15:
        raise InfeasibleTargetError(
            f"target p_hit {target_p_hit} outside the reachable range ({floor:.6g}, {ceiling:.6g}]"
        )
    if target_p_hit >= ceiling:
        return 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if p_hit(mid) < target_p_hit:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
