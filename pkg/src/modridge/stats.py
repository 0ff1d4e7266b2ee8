"""Label-shuffle permutation tests and the bootstrap reliability frontier."""
from dataclasses import dataclass, field

import numpy as np

from ._parallel import map_replicates
from ._rng import stream
from .infolattice import compute_g, mobius_invert, positive_mass
from .keyrec import RidgeKeyClassifier

__all__ = [
    "PermutationResult",
    "ReliabilityPoint",
    "DEFAULT_N_PERM",
    "DEFAULT_BUDGETS",
    "permutation_p_value",
    "permutation_test",
    "order_summary",
    "reliability_sweep",
]

DEFAULT_N_PERM = {"accuracy": 500, "cps": 200}
DEFAULT_BUDGETS = (128, 256, 512, 768, 1024)

# relative slack under which a null value counts as a tie with the observed one
_TIE_RTOL = 1e-12


def permutation_p_value(observed, null_values):
    """Add-one p-value ``(1 + #{null >= observed}) / (1 + n_perm)``."""
    null_values = np.asarray(null_values, dtype=float)
    slack = _TIE_RTOL * max(1.0, abs(observed))
    exceed = int(np.count_nonzero(null_values >= observed - slack))
    return (1 + exceed) / (1 + null_values.size)


@dataclass(frozen=True)
class PermutationResult:
    statistic: str
    observed: float
    null_values: list
    n_perm: int
    p_value: float

    def as_dict(self):
        return {
            "statistic": self.statistic,
            "observed": self.observed,
            "n_perm": self.n_perm,
            "p_value": self.p_value,
            "null_values": list(self.null_values),
        }


def _table(key_index, outcomes, n_keys, n_outcomes):
    flat = np.bincount(key_index * n_outcomes + outcomes, minlength=n_keys * n_outcomes)
    return flat.reshape(n_keys, n_outcomes).astype(float)


def _cps_from_table(table, k_max, order):
    return positive_mass(mobius_invert(compute_g(table, k_max)))[order].M_plus


def permutation_test(dataset, statistic="accuracy", n_perm=None, seed=0, k_max=3, n_jobs=1):
    """Label-shuffle permutation test for ``"accuracy"`` or ``"cps"``.

    Permutation ``j`` shuffles all labels globally with the stream
    ``(seed, "permutation", statistic, j)``. The ridge classifier is label
    free, so its predictions (tie draws from ``(seed, "classify")``) are
    computed once; CPS is recomputed from scratch for every shuffle.
    """
    if statistic not in DEFAULT_N_PERM:
        raise ValueError(f"unknown statistic {statistic!r}; expected one of {sorted(DEFAULT_N_PERM)}")
    n_perm = DEFAULT_N_PERM[statistic] if n_perm is None else int(n_perm)
    if n_perm < 1:
        raise ValueError("n_perm must be at least 1")
    spec = dataset.spec
    key_index = np.asarray(dataset.key_index)

    if statistic == "accuracy":
        lut = np.zeros(spec.modulus, dtype=np.int64)
        lut[list(spec.keys)] = np.arange(len(spec.keys))
        pred = RidgeKeyClassifier(spec.n, spec.keys, seed).fit(dataset.bits).predict(dataset.bits)
        pred_index = lut[pred]

        def stat(labels_index):
            return float(np.mean(pred_index == labels_index))
    else:
        order = min(3, k_max)
        nk, nm = len(spec.keys), spec.n_outcomes

        def stat(labels_index):
            return _cps_from_table(_table(labels_index, dataset.outcomes, nk, nm), k_max, order)

    observed = stat(key_index)

    def null(j):
        return stat(stream(seed, "permutation", statistic, j).permutation(key_index))

    null_values = map_replicates(null, n_perm, n_jobs).tolist()
    return PermutationResult(statistic, observed, null_values, n_perm, permutation_p_value(observed, null_values))


@dataclass(frozen=True)
class ReliabilityPoint:
    shots_per_key: int
    mean: dict
    sd: dict
    cv: dict
    k_star: int
    replicates: int = 0
    samples: list = field(default=None, repr=False)

    def as_dict(self):
        def clean(d):
            return {str(k): (None if not np.isfinite(x) else x) for k, x in d.items()}

        return {
            "shots_per_key": self.shots_per_key,
            "replicates": self.replicates,
            "mean": clean(self.mean),
            "sd": clean(self.sd),
            "cv": clean(self.cv),
            "k_star": self.k_star,
        }


def order_summary(samples, shots_per_key=0):
    """Reduce a ``(replicates, k_max)`` array of ``M_k^+`` draws to a point.

    ``CV_k = sd / mean`` with the sample standard deviation; ``k_star`` is
    the largest order with ``CV_k <= 1`` and a positive mean (0 if none).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise ValueError("samples must be (replicates, orders)")
    ddof = 1 if samples.shape[0] > 1 else 0
    mean, sd, cv = {}, {}, {}
    k_star = 0
    for j in range(samples.shape[1]):
        k = j + 1
        mu = float(samples[:, j].mean())
        s = float(samples[:, j].std(ddof=ddof))
        mean[k], sd[k] = mu, s
        cv[k] = s / mu if mu > 0 else float("inf")
        if mu > 0 and cv[k] <= 1.0:
            k_star = k
    return ReliabilityPoint(shots_per_key, mean, sd, cv, k_star, samples.shape[0], samples.tolist())


def reliability_sweep(dataset, budgets=DEFAULT_BUDGETS, B=100, k_max=3, seed=0, n_jobs=1):
    """Bootstrap ``M_k^+`` at several shots-per-key budgets.

    Each replicate draws ``s`` shots per key with replacement from that key's
    group (stream ``(seed, "reliability", s, b)``) and recomputes the
    truncated lattice.
    """
    if B < 50:
        raise ValueError("B must be at least 50")
    spec = dataset.spec
    sizes = dataset.group_sizes
    for s in budgets:
        if s < 1 or s > sizes.min():
            raise ValueError(f"budget {s} exceeds the smallest key group ({int(sizes.min())})")
    nk, nm = len(spec.keys), spec.n_outcomes
    groups = [np.asarray(dataset.outcomes[sl]) for _, sl in dataset.group_slices()]

    points = []
    for s in budgets:
        key_index = np.repeat(np.arange(nk), s)

        def replicate(b, s=s, key_index=key_index):
            rng = stream(seed, "reliability", s, b)
            outcomes = np.concatenate([g[rng.integers(0, g.size, s)] for g in groups])
            mass = positive_mass(mobius_invert(compute_g(_table(key_index, outcomes, nk, nm), k_max)))
            return [mass[k].M_plus for k in range(1, k_max + 1)]

        points.append(order_summary(map_replicates(replicate, B, n_jobs), s))
    return points
