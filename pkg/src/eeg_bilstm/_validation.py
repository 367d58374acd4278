"""Input checks shared by the estimators and the training entry points."""

import numpy as np

from .errors import DataError, InsufficientData


def check_sequences(X, n_features=None):
    """Coerce to a finite float64 array shaped (n_samples, time, features)."""
    if isinstance(X, (list, tuple)) and X and hasattr(X[0], "flat") and hasattr(X[0], "values"):
        X = [fs.flat() for fs in X]
    try:
        X = np.asarray(X, dtype=np.float64)
    except ValueError:
        raise DataError("sequences must share one (time, features) shape") from None
    if X.ndim == 2:
        X = X[:, np.newaxis, :]
    if X.ndim != 3:
        raise DataError(f"expected (n_samples, time, features), got shape {X.shape}")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise DataError(f"empty input of shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError("input contains NaN or infinity")
    if n_features is not None and X.shape[2] != n_features:
        raise DataError(f"expected {n_features} features per step, got {X.shape[2]}")
    return X


def check_class_counts(y, min_classes=2, min_per_class=2):
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < min_classes:
        raise InsufficientData(f"need at least {min_classes} classes, got {len(classes)}")
    if counts.min() < min_per_class:
        raise InsufficientData(
            f"need at least {min_per_class} samples per class; class "
            f"{classes[np.argmin(counts)]!r} has {counts.min()}")
    return classes, counts


def stratified_split(y, train_fraction, rng):
    """Per-class seeded split; returns (train_idx, val_idx), each shuffled.

    Each class keeps at least one sample on either side when it has two or more.
    """
    y = np.asarray(y)
    rng = np.random.default_rng(rng)
    train, val = [], []
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        n_tr = int(round(train_fraction * len(idx)))
        if len(idx) >= 2:
            n_tr = min(max(n_tr, 1), len(idx) - 1)
        train.append(idx[:n_tr])
        val.append(idx[n_tr:])
    train = rng.permutation(np.concatenate(train))
    val = rng.permutation(np.concatenate(val))
    return train, val
