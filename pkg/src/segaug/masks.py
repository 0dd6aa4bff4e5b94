from __future__ import annotations

import numpy as np

from .autodiff import DomainError, get_default_dtype


def one_hot(labels: np.ndarray, n_labels: int, dtype=None) -> np.ndarray:
    """Label map(s) ``(..., H, W)`` with values in [0, n_labels] -> ``(..., n_labels+1, H, W)``."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > n_labels):
        raise DomainError(f"labels must lie in [0, {n_labels}]")
    eye = np.eye(n_labels + 1, dtype=dtype or get_default_dtype())
    out = eye[labels.astype(np.int64)]
    return np.moveaxis(out, -1, -3)


def is_one_hot(mask: np.ndarray, axis: int = -3) -> bool:
    m = np.asarray(mask)
    return bool(np.isin(m, (0, 1)).all() and np.all(m.sum(axis=axis) == 1))
