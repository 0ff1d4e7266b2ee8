"""Input checks for the estimator classes (bit matrices in, key labels out)."""
import numpy as np
from sklearn.utils.validation import check_array, check_X_y

from .core import Dataset

__all__ = ["check_bits", "check_bits_labels", "as_xy"]


def check_bits(X, bit_count=None):
    """Validate a 2-D 0/1 matrix and return it as uint8."""
    X = check_array(X, dtype=None, ensure_2d=True)
    if bit_count is not None and X.shape[1] != bit_count:
        raise ValueError(f"X has {X.shape[1]} bit columns, expected {bit_count}")
    if not np.isin(X, (0, 1)).all():
        raise ValueError("X must contain only 0/1 values")
    return X.astype(np.uint8)


def check_bits_labels(X, y, bit_count=None):
    X, y = check_X_y(X, y, dtype=None)
    X = check_bits(X, bit_count)
    return X, np.asarray(y, dtype=np.int64)


def as_xy(data, y=None):
    """Accept either a :class:`Dataset` or an ``(X, y)`` pair."""
    if isinstance(data, Dataset):
        return data.bits, data.labels
    return data, y
