"""Bit conventions, register decoding, modular ridge arithmetic and shot files.

Bit order everywhere is ``D_1 .. D_2n`` left to right: register ``a`` first
(``D_1..D_n``), then register ``b``. Each register is little-endian, so
``D_1`` is the least significant bit of ``u`` and ``D_{n+1}`` the least
significant bit of ``v``. A whole shot therefore packs into the outcome index
``u + 2**n * v`` whose bit ``j`` is ``D_{j+1}``; subset masks use the same
positions.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

__all__ = [
    "DEFAULT_KEYS",
    "ExperimentSpec",
    "Shot",
    "DecodedShot",
    "Dataset",
    "MalformedShotError",
    "DatasetFormatError",
    "decode_registers",
    "encode_registers",
    "ridge_residual",
    "ridge_hit",
    "ridge_distance",
    "load_dataset",
    "save_dataset",
]

DEFAULT_KEYS = (1, 3, 5, 7, 2, 4, 8, 12)
MAX_WIDTH = 8


class MalformedShotError(ValueError):
    """A shot whose bit vector does not match the register width."""


class DatasetFormatError(ValueError):
    """Unparseable or inconsistent shot file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class ExperimentSpec:
    n: int = 4
    keys: tuple = DEFAULT_KEYS
    shots_per_key: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "keys", tuple(int(k) for k in self.keys))
        if not 1 <= self.n <= MAX_WIDTH:
            raise ValueError(f"register width n must be in [1, {MAX_WIDTH}], got {self.n}")
        if not self.keys:
            raise ValueError("key list is empty")
        if len(set(self.keys)) != len(self.keys):
            raise ValueError(f"duplicate keys in {self.keys}")
        bad = [k for k in self.keys if not 0 <= k < self.modulus]
        if bad:
            raise ValueError(f"keys {bad} outside [0, {self.modulus})")
        if self.shots_per_key < 1:
            raise ValueError("shots_per_key must be positive")

    @property
    def modulus(self):
        return 1 << self.n

    @property
    def bit_count(self):
        return 2 * self.n

    @property
    def n_outcomes(self):
        return 1 << (2 * self.n)

    @property
    def total_shots(self):
        return len(self.keys) * self.shots_per_key

    def with_keys(self, keys):
        return ExperimentSpec(self.n, tuple(keys), self.shots_per_key)

    def as_dict(self):
        return {"n": self.n, "keys": list(self.keys), "shots_per_key": self.shots_per_key}


@dataclass(frozen=True)
class Shot:
    key: int
    bits: tuple

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if any(b not in (0, 1) for b in self.bits):
            raise MalformedShotError(f"non-binary bit in {self.bits}")


class DecodedShot(NamedTuple):
    u: int
    v: int


def decode_registers(shot, n):
    """Decode a shot into its register integers ``(u, v)``."""
    bits = shot.bits if isinstance(shot, Shot) else tuple(shot)
    if len(bits) != 2 * n:
        raise MalformedShotError(f"expected {2 * n} bits, got {len(bits)}")
    u = sum(b << i for i, b in enumerate(bits[:n]))
    v = sum(b << i for i, b in enumerate(bits[n:]))
    return DecodedShot(u, v)


def encode_registers(u, v, n):
    """Inverse of :func:`decode_registers`: pack ``(u, v)`` into ``2n`` bits."""
    m = 1 << n
    if not (0 <= u < m and 0 <= v < m):
        raise ValueError(f"(u, v) = ({u}, {v}) outside [0, {m})")
    return tuple((u >> i) & 1 for i in range(n)) + tuple((v >> i) & 1 for i in range(n))


def _check_register(x, n, name):
    if not 0 <= x < (1 << n):
        raise ValueError(f"{name}={x} outside [0, {1 << n})")


def ridge_residual(k, u, v, n):
    """``(v - k*u) mod 2**n``; zero exactly on the key-``k`` ridge."""
    _check_register(u, n, "u")
    _check_register(v, n, "v")
    return (v - k * u) % (1 << n)


def ridge_hit(k, u, v, n):
    return ridge_residual(k, u, v, n) == 0


def ridge_distance(r, n):
    """Circular distance of a residual from zero on ``Z_{2^n}``."""
    m = 1 << n
    if not 0 <= r < m:
        raise ValueError(f"residual {r} outside [0, {m})")
    return min(r, m - r)


def residual_table(keys, n):
    """Residual of every outcome index under every key, shape ``(len(keys), 4**n)``."""
    m = 1 << n
    outcomes = np.arange(m * m, dtype=np.int64)
    u, v = outcomes & (m - 1), outcomes >> n
    return (v[None, :] - np.asarray(keys, dtype=np.int64)[:, None] * u[None, :]) % m


def circular_distance(residuals, n):
    m = 1 << n
    residuals = np.asarray(residuals)
    return np.minimum(residuals, m - residuals)


def outcome_bits(outcomes, bit_count):
    """Unpack outcome indices into a ``(len, bit_count)`` uint8 bit array."""
    outcomes = np.asarray(outcomes, dtype=np.int64)
    return ((outcomes[:, None] >> np.arange(bit_count)) & 1).astype(np.uint8)


def pack_bits(bits):
    """Pack a ``(N, 2n)`` bit array into outcome indices ``u + 2**n * v``."""
    bits = np.asarray(bits, dtype=np.int64)
    return bits @ (np.int64(1) << np.arange(bits.shape[1], dtype=np.int64))


class Dataset:
    """Key-labelled shots stored grouped by key, in ``spec.keys`` order.

    Parameters
    ----------
    spec : ExperimentSpec
    labels : array-like of int, shape (N,)
        True key of every shot.
    bits : array-like of {0, 1}, shape (N, 2n)

    Shots are stably reordered so that each key group is contiguous; within a
    group the input order is kept.
    """

    def __init__(self, spec, labels, bits):
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        bits = np.asarray(bits)
        if bits.ndim != 2 or bits.shape[0] != labels.shape[0]:
            raise MalformedShotError(
                f"bits must be (N, {spec.bit_count}) with N = {labels.shape[0]}, got {bits.shape}"
            )
        if bits.shape[1] != spec.bit_count:
            raise MalformedShotError(f"expected {spec.bit_count} bits per shot, got {bits.shape[1]}")
        if bits.size and not np.isin(bits, (0, 1)).all():
            raise MalformedShotError("bits must be 0/1")
        lookup = {k: i for i, k in enumerate(spec.keys)}
        try:
            key_index = np.fromiter((lookup[int(k)] for k in labels), dtype=np.int64, count=labels.size)
        except KeyError as exc:
            raise ValueError(f"key {exc.args[0]} not in spec") from None
        counts = np.bincount(key_index, minlength=len(spec.keys))
        empty = [spec.keys[i] for i in np.flatnonzero(counts == 0)]
        if empty:
            raise ValueError(f"key groups {empty} have no shots")
        order = np.argsort(key_index, kind="stable")
        self.spec = spec
        self.labels = labels[order]
        self.bits = bits[order].astype(np.uint8)
        self.key_index = key_index[order]
        self.group_sizes = counts
        self.outcomes = pack_bits(self.bits)
        for arr in (self.labels, self.bits, self.key_index, self.group_sizes, self.outcomes):
            arr.flags.writeable = False

    @classmethod
    def from_shots(cls, spec, shots):
        shots = list(shots)
        labels = [s.key for s in shots]
        bits = np.array([s.bits for s in shots], dtype=np.uint8).reshape(len(shots), -1)
        if not shots:
            bits = np.zeros((0, spec.bit_count), dtype=np.uint8)
        return cls(spec, labels, bits)

    @classmethod
    def from_outcomes(cls, spec, labels, outcomes):
        return cls(spec, labels, outcome_bits(outcomes, spec.bit_count))

    def __len__(self):
        return self.labels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.spec == other.spec
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.bits, other.bits)
        )

    def __repr__(self):
        return f"Dataset(n={self.spec.n}, keys={self.spec.keys}, shots={len(self)})"

    @property
    def shots(self):
        return [Shot(int(k), tuple(b)) for k, b in zip(self.labels, self.bits)]

    @property
    def u(self):
        return self.outcomes & (self.spec.modulus - 1)

    @property
    def v(self):
        return self.outcomes >> self.spec.n

    def group_slices(self):
        """Yield ``(key, slice)`` for each key group in spec order."""
        start = 0
        for key, size in zip(self.spec.keys, self.group_sizes):
            yield key, slice(start, start + int(size))
            start += int(size)

    def relabel(self, labels):
        """Same bits, new labels (used by permutation nulls)."""
        return Dataset(self.spec, labels, self.bits)


# --- shot files -------------------------------------------------------------

def load_dataset(path, spec=None):
    """Read a ``key,bitstring`` shot file.

    Blank lines and lines starting with ``#`` are skipped, as is an optional
    ``key,bits`` header.
    """
    spec = spec or ExperimentSpec()
    labels, rows = [], []
    keyset = set(spec.keys)
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.replace(" ", "").lower() == "key,bits":
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise DatasetFormatError(f"expected 'key,bitstring', got {raw!r}", lineno)
        key_txt, bit_txt = parts[0].strip(), parts[1].strip()
        try:
            key = int(key_txt)
        except ValueError:
            raise DatasetFormatError(f"bad key label {key_txt!r}", lineno) from None
        if key not in keyset:
            raise DatasetFormatError(f"key {key} not in spec", lineno)
        if len(bit_txt) != spec.bit_count:
            raise DatasetFormatError(
                f"bitstring has {len(bit_txt)} characters, expected {spec.bit_count}", lineno
            )
        if set(bit_txt) - {"0", "1"}:
            raise DatasetFormatError(f"non-binary character in {bit_txt!r}", lineno)
        labels.append(key)
        rows.append([ord(c) - 48 for c in bit_txt])
    if not labels:
        raise DatasetFormatError("no shots")
    try:
        return Dataset(spec, labels, np.array(rows, dtype=np.uint8))
    except ValueError as exc:
        raise DatasetFormatError(str(exc)) from None


def save_dataset(dataset, path):
    lines = ["key,bits"]
    for key, row in zip(dataset.labels, dataset.bits):
        lines.append(f"{key},{''.join('1' if b else '0' for b in row)}")
    Path(path).write_text("\n".join(lines) + "\n")
