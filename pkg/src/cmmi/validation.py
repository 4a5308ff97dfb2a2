"""Input checks shared by the estimators."""

import numpy as np


def check_samples(X, min_samples=1, allow_batch=True):
    """Validate snapshot data laid out as ``(..., n_samples, n_features)``.

    scikit-learn's ``check_array`` rejects complex input, hence this helper.
    """
    X = np.asarray(X)
    if X.dtype.kind not in "biufc":
        raise TypeError(f"samples must be numeric, got dtype {X.dtype}")
    X = X.astype(complex, copy=False)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim < 2 or (X.ndim > 2 and not allow_batch):
        raise ValueError(f"expected a 2-D array of snapshots, got shape {X.shape}")
    if X.shape[-1] < 1:
        raise ValueError("samples have zero features")
    if X.shape[-2] < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {X.shape[-2]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("samples contain NaN or infinity")
    return X


def check_rank(r, n_features, n_samples=None):
    r = int(r)
    if not 1 <= r < n_features:
        raise ValueError(f"rank must satisfy 1 <= r < {n_features}, got {r}")
    if n_samples is not None and n_samples <= r:
        raise ValueError(f"need more samples than the rank: L={n_samples}, r={r}")
    return r


def sample_covariance(X):
    """``(1 / L) sum_k y_k y_k^H`` over the rows of ``X``."""
    X = np.asarray(X)
    R = X.swapaxes(-1, -2) @ X.conj() / X.shape[-2]
    R = 0.5 * (R + R.conj().swapaxes(-1, -2))
    return R
