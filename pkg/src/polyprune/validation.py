"""Small input-validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np


def check_features(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d feature array, got shape {X.shape}")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError(f"empty feature array of shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("features contain NaN or infinity")
    return X


def check_features_labels(X, y):
    X = check_features(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != X.shape[0]:
        raise ValueError(
            f"{X.shape[0]} feature rows but {y.shape[0]} labels"
        )
    if not np.isfinite(y).all():
        raise ValueError("labels contain NaN or infinity")
    return X, y


def check_binary_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0.0 or 1.0")
    return y


def check_counts(counts, n_neurons: int) -> np.ndarray:
    counts = np.asarray(counts)
    if counts.shape != (n_neurons,):
        raise ValueError(
            f"counts have shape {counts.shape}, expected ({n_neurons},)"
        )
    if not np.issubdtype(counts.dtype, np.integer):
        raise ValueError("counts must be integers")
    if (counts < 0).any():
        raise ValueError("counts must be non-negative")
    if counts.sum() <= 0:
        raise ValueError("counts must select at least one neuron")
    return counts.astype(np.int64)
