"""Ridge-hit probability, ridge contrast, their intervals, and (u, v) heatmaps."""
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._parallel import map_replicates
from ._rng import stream

__all__ = [
    "RidgeStats",
    "Heatmap",
    "Z95",
    "shot_hits",
    "ridge_hit_probability",
    "wilson_interval",
    "bootstrap_contrast_ci",
    "ridge_stats",
    "heatmap",
    "write_heatmaps",
]

Z95 = 1.959964


@dataclass(frozen=True)
class RidgeStats:
    pooled_hits: int
    total: int
    p_hit: float
    contrast: float
    per_key: dict
    modulus: int
    wilson_ci: tuple = None
    contrast_ci: tuple = None

    def key_contrast(self, key):
        return self.per_key[key][2] * self.modulus

    def as_dict(self):
        return {
            "pooled_hits": self.pooled_hits,
            "total": self.total,
            "p_hit": self.p_hit,
            "contrast": self.contrast,
            "per_key": {
                str(k): {"hits": h, "count": c, "p_hit": p, "contrast": p * self.modulus}
                for k, (h, c, p) in self.per_key.items()
            },
            "p_hit_ci": list(self.wilson_ci) if self.wilson_ci else None,
            "contrast_ci": list(self.contrast_ci) if self.contrast_ci else None,
        }


def shot_hits(dataset):
    """Boolean array: does each shot lie on the ridge of its own key label?"""
    m = dataset.spec.modulus
    return (dataset.v - dataset.labels * dataset.u) % m == 0


def ridge_hit_probability(dataset):
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    hits = shot_hits(dataset)
    m = dataset.spec.modulus
    per_key = {}
    for key, sl in dataset.group_slices():
        h, c = int(hits[sl].sum()), sl.stop - sl.start
        per_key[key] = (h, c, h / c)
    total = len(dataset)
    pooled = int(hits.sum())
    p_hit = pooled / total
    return RidgeStats(pooled, total, p_hit, p_hit * m, per_key, m)


def wilson_interval(successes, trials, z=Z95):
    """Wilson score interval for a binomial proportion, clipped to [0, 1]."""
    if trials < 1:
        raise ValueError("wilson_interval needs at least one trial")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes={successes} outside [0, {trials}]")
    if z <= 0:
        raise ValueError("z must be positive")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    lo, hi = max(0.0, center - half), min(1.0, center + half)
    # guard the analytic containment against rounding at the boundaries
    return (min(lo, p), max(hi, p))


def bootstrap_contrast_ci(dataset, B=2000, seed=0, n_jobs=1):
    """Percentile bootstrap (2.5%, 97.5%) of ridge contrast.

    Shots are resampled with replacement inside each key group, so every
    replicate keeps the original group sizes. Replicate ``b`` uses the stream
    ``(seed, "contrast-bootstrap", b)``.
    """
    if B < 100:
        raise ValueError("B must be at least 100")
    hits = shot_hits(dataset).astype(np.int64)
    slices = list(dataset.group_slices())
    total = len(dataset)
    m = dataset.spec.modulus

    def replicate(b):
        rng = stream(seed, "contrast-bootstrap", b)
        n_hit = 0
        for _, sl in slices:
            size = sl.stop - sl.start
            n_hit += int(hits[sl][rng.integers(0, size, size)].sum())
        return m * n_hit / total

    contrasts = map_replicates(replicate, B, n_jobs)
    lo, hi = np.percentile(contrasts, [2.5, 97.5])
    return (float(lo), float(hi))


def ridge_stats(dataset, B=2000, seed=0, z=Z95, n_jobs=1):
    """Point estimates plus the Wilson interval on p_hit and bootstrap CI on contrast."""
    stats = ridge_hit_probability(dataset)
    return replace(
        stats,
        wilson_ci=wilson_interval(stats.pooled_hits, stats.total, z),
        contrast_ci=bootstrap_contrast_ci(dataset, B, seed, n_jobs),
    )


@dataclass(frozen=True)
class Heatmap:
    key: int
    grid: np.ndarray  # counts indexed [v][u]
    overlay: list = field(default_factory=list)

    def to_csv(self):
        return "\n".join(",".join(str(int(c)) for c in row) for row in self.grid) + "\n"

    def to_pgm(self):
        """Plain-text graymap (P2), darker = more counts, row 0 is v = 0."""
        top = int(self.grid.max()) or 1
        rows = [" ".join(str(255 - (255 * int(c)) // top) for c in row) for row in self.grid]
        h, w = self.grid.shape
        return f"P2\n# key {self.key}\n{w} {h}\n255\n" + "\n".join(rows) + "\n"

    def overlay_text(self):
        return "u,v\n" + "".join(f"{u},{v}\n" for u, v in self.overlay)


def heatmap(dataset, key):
    spec = dataset.spec
    if key not in spec.keys:
        raise ValueError(f"key {key} not in spec")
    m = spec.modulus
    mask = dataset.labels == key
    grid = np.bincount(dataset.outcomes[mask], minlength=m * m).reshape(m, m)
    overlay = [(u, (key * u) % m) for u in range(m)]
    return Heatmap(key, grid, overlay)


def write_heatmaps(dataset, directory):
    """Write ``key_<k>.csv``, ``key_<k>.pgm`` and ``key_<k>_ridge.csv`` per key."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for key in dataset.spec.keys:
        hm = heatmap(dataset, key)
        for suffix, text in ((".csv", hm.to_csv()), (".pgm", hm.to_pgm()), ("_ridge.csv", hm.overlay_text())):
            path = directory / f"key_{key}{suffix}"
            path.write_text(text)
            paths.append(path)
    return paths
