"""Mutual information over detector-bit subsets and its Möbius decomposition.

For every subset ``S`` of measured bits up to order ``k_max`` we estimate
``g(S) = I(K; D_S)`` (plug-in, in bits) and invert the subset-lattice zeta
transform ``g(S) = sum_{T <= S} f(T)`` to get the irreducible terms ``f``.
Positive parts of ``f`` summed by order give the positive mass ``M_k^+``; the
order-3 mass is the targeted synergy score (CPS).

Subsets are bitmasks over outcome positions: bit ``i-1`` set means ``D_i`` is
in the subset, so projecting an outcome index onto ``S`` is ``outcome & mask``.
All estimators work on a ``(|K|, 4**n)`` key/outcome weight table, which is a
count table for sampled data and an exact probability table for oracles.
"""
from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np
from sklearn.base import BaseEstimator

from .core import Dataset
from .simulate import ExactJoint
from .validation import check_bits_labels

__all__ = [
    "BitSubset",
    "LatticeFunction",
    "OrderMass",
    "IncompleteLatticeError",
    "joint_table",
    "plugin_mi",
    "compute_g",
    "mobius_invert",
    "zeta_transform",
    "positive_mass",
    "cps",
    "key_slice",
    "lattice_masks",
    "MobiusSynergy",
]


class IncompleteLatticeError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class BitSubset:
    mask: int

    @classmethod
    def of(cls, *positions):
        """Build from 1-based bit positions, e.g. ``BitSubset.of(1, 5)``."""
        mask = 0
        for p in positions:
            if p < 1:
                raise ValueError("bit positions are 1-based")
            mask |= 1 << (p - 1)
        return cls(mask)

    @property
    def order(self):
        return bin(self.mask).count("1")

    @property
    def positions(self):
        return tuple(i + 1 for i in range(self.mask.bit_length()) if self.mask >> i & 1)

    def tag(self, n):
        return register_tag(self.mask, n)


def _mask(subset):
    return subset.mask if isinstance(subset, BitSubset) else int(subset)


def register_tag(mask, n):
    """``"within"`` if the subset sits inside one register, else ``"cross"``."""
    a = (1 << n) - 1
    b = a << n
    return "within" if (mask & a == 0 or mask & b == 0) else "cross"


def lattice_masks(bit_count, k_max):
    """Nonempty masks of order <= ``k_max``, sorted by (order, mask)."""
    masks = []
    for k in range(1, k_max + 1):
        masks.extend(sorted(sum(1 << i for i in c) for c in combinations(range(bit_count), k)))
    return masks


class LatticeFunction:
    """Real values on all nonempty bit subsets up to order ``k_max``.

    The empty set is implicitly 0.
    """

    def __init__(self, bit_count, k_max, values):
        if not 0 <= k_max <= bit_count:
            raise ValueError(f"k_max must be in [0, {bit_count}], got {k_max}")
        self.bit_count = bit_count
        self.k_max = k_max
        self.values = {int(m): float(x) for m, x in dict(values).items()}

    def __getitem__(self, subset):
        mask = _mask(subset)
        if mask == 0:
            return 0.0
        return self.values[mask]

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, LatticeFunction):
            return NotImplemented
        return (self.bit_count, self.k_max, self.values) == (other.bit_count, other.k_max, other.values)

    def __repr__(self):
        return f"LatticeFunction(bit_count={self.bit_count}, k_max={self.k_max}, entries={len(self)})"

    @property
    def expected_size(self):
        return sum(comb(self.bit_count, k) for k in range(1, self.k_max + 1))

    def is_complete(self):
        return len(self.values) == self.expected_size and all(
            m in self.values for m in lattice_masks(self.bit_count, self.k_max)
        )

    def masks(self):
        return lattice_masks(self.bit_count, self.k_max)

    def order_values(self, k):
        return {m: x for m, x in self.values.items() if bin(m).count("1") == k}

    def to_dense(self):
        dense = np.zeros(1 << self.bit_count)
        for m, x in self.values.items():
            dense[m] = x
        return dense

    @classmethod
    def from_dense(cls, dense, bit_count, k_max):
        return cls(bit_count, k_max, {m: dense[m] for m in lattice_masks(bit_count, k_max)})

    def rows(self, n):
        """``(mask, order, value, tag)`` rows in lattice order."""
        return [
            {"mask": m, "order": bin(m).count("1"), "value": self.values[m], "tag": register_tag(m, n)}
            for m in self.masks()
        ]


# --- plug-in mutual information ---------------------------------------------

def joint_table(data):
    """Key/outcome weight table, shape ``(|K|, 4**n)``."""
    if isinstance(data, Dataset):
        k = len(data.spec.keys)
        m = data.spec.n_outcomes
        flat = np.bincount(data.key_index * m + data.outcomes, minlength=k * m)
        return flat.reshape(k, m).astype(float)
    if isinstance(data, ExactJoint):
        return data.joint_table()
    table = np.asarray(data, dtype=float)
    if table.ndim != 2:
        raise ValueError("joint table must be 2-D (keys x outcomes)")
    if (table < 0).any():
        raise ValueError("joint table has negative weights")
    return table


def _bit_count(table):
    m = table.shape[1]
    bits = m.bit_length() - 1
    if 1 << bits != m:
        raise ValueError(f"outcome axis length {m} is not a power of two")
    return bits


def _mi_table(table, mask, outcomes, total):
    k, m = table.shape
    patterns = outcomes & mask
    idx = (np.arange(k)[:, None] * m + patterns[None, :]).ravel()
    proj = np.bincount(idx, weights=table.ravel(), minlength=k * m) / total
    proj = proj.reshape(k, m)
    pk = proj.sum(axis=1, keepdims=True)
    px = proj.sum(axis=0, keepdims=True)
    nz = proj > 0
    mi = float(np.sum(proj[nz] * np.log2(proj[nz] / (pk * px)[nz])))
    return max(mi, 0.0)


def plugin_mi(data, subset):
    """Plug-in ``I(K; D_S)`` in bits, with ``0 log 0 = 0``."""
    table = joint_table(data)
    mask = _mask(subset)
    if mask == 0:
        raise ValueError("subset must be nonempty")
    if mask >> _bit_count(table):
        raise ValueError("subset refers to bits beyond the register width")
    total = table.sum()
    if total <= 0:
        raise ValueError("empty dataset")
    return _mi_table(table, mask, np.arange(table.shape[1]), total)


def compute_g(data, k_max=3):
    table = joint_table(data)
    bit_count = _bit_count(table)
    if not 1 <= k_max <= bit_count:
        raise ValueError(f"k_max must be in [1, {bit_count}], got {k_max}")
    total = table.sum()
    if total <= 0:
        raise ValueError("empty dataset")
    outcomes = np.arange(table.shape[1])
    # keys with no weight do not change the joint; dropping them saves work
    table = table[table.sum(axis=1) > 0]
    values = {m: _mi_table(table, m, outcomes, total) for m in lattice_masks(bit_count, k_max)}
    return LatticeFunction(bit_count, k_max, values)


# --- subset-lattice transforms ----------------------------------------------

def _subset_sum(dense, bit_count, sign):
    # in-place sum over subsets, one bit dimension at a time
    out = dense.copy()
    for j in range(bit_count):
        view = out.reshape(-1, 2, 1 << j)
        view[:, 1, :] += sign * view[:, 0, :]
    return out


def _require_complete(fn):
    if not fn.is_complete():
        raise IncompleteLatticeError(
            f"lattice has {len(fn)} of {fn.expected_size} entries up to order {fn.k_max}"
        )


def mobius_invert(g):
    """``f(T) = sum_{S <= T} (-1)^{|T|-|S|} g(S)`` for every stored ``T``.

    Uses the fast subset-sum recursion on a dense table with zeros above
    ``k_max``. Entries of order <= ``k_max`` only ever read their own subsets,
    so truncation leaves them exact.
    """
    _require_complete(g)
    dense = _subset_sum(g.to_dense(), g.bit_count, -1.0)
    return LatticeFunction.from_dense(dense, g.bit_count, g.k_max)


def zeta_transform(f):
    """Inverse of :func:`mobius_invert`: ``g(S) = sum_{T <= S} f(T)``."""
    _require_complete(f)
    dense = _subset_sum(f.to_dense(), f.bit_count, 1.0)
    return LatticeFunction.from_dense(dense, f.bit_count, f.k_max)


# --- positive mass ------------------------------------------------------------

@dataclass(frozen=True)
class OrderMass:
    order: int
    M_plus: float
    M_plus_within: float
    M_plus_cross: float

    @property
    def cross_fraction(self):
        return self.M_plus_cross / self.M_plus if self.M_plus > 0 else float("nan")

    def as_dict(self):
        frac = self.cross_fraction
        return {
            "order": self.order,
            "M_plus": self.M_plus,
            "M_plus_within": self.M_plus_within,
            "M_plus_cross": self.M_plus_cross,
            "cross_fraction": None if np.isnan(frac) else frac,
        }


def positive_mass(f, n=None):
    """Per-order positive mass of ``f``, split within/cross register.

    ``n`` is the register width; defaults to half of ``f.bit_count``.
    """
    _require_complete(f)
    n = f.bit_count // 2 if n is None else n
    out = {}
    for k in range(1, f.k_max + 1):
        within = cross = 0.0
        for m, x in f.order_values(k).items():
            if x > 0:
                if register_tag(m, n) == "within":
                    within += x
                else:
                    cross += x
        out[k] = OrderMass(k, within + cross, within, cross)
    return out


def cps(data, k_max=3, order=3):
    """Targeted positive synergy: the order-``order`` positive mass of ``f``."""
    if order > k_max:
        raise ValueError("order must not exceed k_max")
    table = joint_table(data)
    f = mobius_invert(compute_g(table, k_max))
    return positive_mass(f)[order].M_plus


def key_slice(dataset, keys):
    """Restrict a dataset to a subset of its keys (spec order preserved)."""
    wanted = set(int(k) for k in keys)
    kept = [k for k in dataset.spec.keys if k in wanted]
    if not kept:
        raise ValueError(f"no overlap between {sorted(wanted)} and spec keys {dataset.spec.keys}")
    missing = wanted - set(kept)
    if missing:
        raise ValueError(f"keys {sorted(missing)} not in spec")
    sel = np.isin(dataset.labels, kept)
    return Dataset(dataset.spec.with_keys(kept), dataset.labels[sel], dataset.bits[sel])


class MobiusSynergy(BaseEstimator):
    """Estimator wrapper: ``fit(X, y)`` computes ``g``, ``f`` and positive mass.

    Parameters
    ----------
    n : int
        Register width (``X`` has ``2n`` bit columns).
    k_max : int
        Truncation order of the lattice.

    Attributes
    ----------
    g_, f_ : LatticeFunction
    mass_ : dict[int, OrderMass]
    cps_ : float
        Positive mass at order ``min(3, k_max)``.
    """

    def __init__(self, n=4, k_max=3):
        self.n = n
        self.k_max = k_max

    def fit(self, X, y):
        X, y = check_bits_labels(X, y, 2 * self.n)
        classes, key_index = np.unique(y, return_inverse=True)
        m = 1 << (2 * self.n)
        outcomes = X.astype(np.int64) @ (np.int64(1) << np.arange(2 * self.n, dtype=np.int64))
        table = np.bincount(key_index * m + outcomes, minlength=len(classes) * m).reshape(len(classes), m)
        self.classes_ = classes
        self.g_ = compute_g(table.astype(float), self.k_max)
        self.f_ = mobius_invert(self.g_)
        self.mass_ = positive_mass(self.f_, self.n)
        self.cps_ = self.mass_[min(3, self.k_max)].M_plus
        return self

    def transform(self, X=None):
        """The Möbius table as an array aligned with :func:`lattice_masks`."""
        return np.array([self.f_[m] for m in self.f_.masks()])
