"""Deterministic random streams.

Every stochastic routine in the package draws from a stream addressed by a
64-bit seed plus a path of labels, e.g. ``stream(seed, "simulate", 3)`` for the
fourth key group. The path is folded into a :class:`numpy.random.SeedSequence`
spawn key and fed to the counter-based Philox bit generator, so a given
address always yields the same numbers no matter how work is scheduled.
"""
import zlib

import numpy as np

__all__ = ["stream", "derive_seed", "label_code"]


def label_code(label):
    """Map a path label (int or str) to a non-negative 32-bit integer."""
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"stream labels must be non-negative, got {label}")
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def _seed_sequence(seed, path):
    if seed is None or int(seed) < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.SeedSequence(int(seed), spawn_key=tuple(label_code(p) for p in path))


def stream(seed, *path):
    """Return a Philox-backed Generator for ``(seed, *path)``."""
    return np.random.Generator(np.random.Philox(_seed_sequence(seed, path)))


def derive_seed(seed, *path):
    """Derive a plain 63-bit integer seed for a sub-stage."""
    state = _seed_sequence(seed, path).generate_state(1, dtype=np.uint64)[0]
    return int(state >> np.uint64(1))
