"""Rank detection for the interference covariance with an AIC rule."""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .numerics import hermitian_evd
from .validation import check_samples, sample_covariance

EIG_FLOOR = 1e-12
PENALTIES = ("full", "printed")


@dataclass(frozen=True)
class AicScore:
    k: int
    score: float
    sigma2_hat: float
    log_lik: float


def tail_noise_estimate(eigenvalues, k):
    """Mean of the eigenvalues after the ``k`` largest.

    ``eigenvalues`` must be sorted descending along the last axis.
    """
    w = np.asarray(eigenvalues, dtype=float)
    n = w.shape[-1]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < {n}, got {k}")
    return w[..., k:].mean(axis=-1)


def floor_eigenvalues(eigenvalues, rel_floor=EIG_FLOOR):
    """Clip eigenvalues below at ``rel_floor`` times the largest one."""
    w = np.asarray(eigenvalues, dtype=float)
    top = np.max(w, axis=-1, keepdims=True)
    return np.maximum(w, rel_floor * top)


def aic_penalty(k, n, penalty="full"):
    """Bias-correction term ``2 K`` for rank hypothesis ``k`` in dimension ``n``.

    ``"printed"`` counts ``K = k + 1`` parameters (the eigenvalues and the
    noise power); ``"full"`` also counts the eigenvectors,
    ``K = k (2 n - k)`` real parameters for complex data.
    """
    if penalty == "printed":
        return 2.0 * (k + 1)
    if penalty == "full":
        return 2.0 * k * (2 * n - k)
    raise ValueError(f"penalty must be one of {PENALTIES}, got {penalty!r}")


def _aic_terms(w, k, n_obs, penalty="full"):
    n = w.shape[-1]
    sigma2 = w[..., k:].mean(axis=-1)
    log_lik = -n_obs * (np.log(w[..., :k]).sum(axis=-1) + (n - k) * np.log(sigma2))
    return -2.0 * log_lik + aic_penalty(k, n, penalty), sigma2, log_lik


def aic_score(eigenvalues, k, n_obs, penalty="full"):
    """AIC of the rank-``k`` model for a descending, strictly positive spectrum.

    ``AIC(k) = 2 N ln(prod_{i<=k} l_i * s2^(n-k)) + 2 K``, evaluated in the
    log domain, where ``s2`` is the mean of the trailing ``n - k``
    eigenvalues, ``N`` the number of snapshots behind the spectrum and
    ``K`` the parameter count chosen by ``penalty`` (see :func:`aic_penalty`).
    """
    w = np.asarray(eigenvalues, dtype=float)
    n = w.shape[-1]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < {n}, got {k}")
    if np.any(w <= 0):
        raise ValueError("eigenvalues must be strictly positive; floor them first")
    score, sigma2, log_lik = _aic_terms(w, k, n_obs, penalty)
    return AicScore(k=k, score=float(score), sigma2_hat=float(sigma2), log_lik=float(log_lik))


def aic_curve(eigenvalues, n_obs, k_max=None, penalty="full"):
    """AIC scores for ``k = 1 .. k_max`` along the last axis of ``eigenvalues``."""
    w = floor_eigenvalues(eigenvalues)
    n = w.shape[-1]
    k_max = n - 2 if k_max is None else k_max
    if not 1 <= k_max <= n - 1:
        raise ValueError(f"k_max must lie in [1, {n - 1}], got {k_max}")
    return np.stack([_aic_terms(w, k, n_obs, penalty)[0] for k in range(1, k_max + 1)], axis=-1)


def detect_rank(samples, k_max=None, penalty="full"):
    """Interference rank minimizing AIC over ``k = 1 .. n_b - 2``.

    ``samples`` holds one snapshot per row, shape ``(..., L, n_b)``.  Ties
    resolve toward the smaller rank.
    """
    Y = check_samples(samples, min_samples=2)
    w = hermitian_evd(sample_covariance(Y)).eigenvalues
    return rank_from_spectrum(w, Y.shape[-2], k_max, penalty)


def rank_from_spectrum(eigenvalues, n_obs, k_max=None, penalty="full"):
    scores = aic_curve(eigenvalues, n_obs, k_max, penalty)
    rank = np.argmin(scores, axis=-1) + 1
    return int(rank) if np.ndim(rank) == 0 else rank


class AICRankDetector(BaseEstimator):
    """Estimate the interference rank from first-slot snapshots.

    Parameters
    ----------
    k_max : int, optional
        Largest rank hypothesis.  Defaults to ``n_features - 2`` so the noise
        estimate always averages at least two eigenvalues.
    penalty : {"full", "printed"}
        Parameter count in the bias-correction term, see :func:`aic_penalty`.

    Attributes
    ----------
    rank_ : int
    scores_ : ndarray of shape (k_max,)
        AIC score of hypotheses ``1 .. k_max``.
    eigenvalues_ : ndarray of shape (n_features,)
    """

    def __init__(self, k_max=None, penalty="full"):
        self.k_max = k_max
        self.penalty = penalty

    def fit(self, X, y=None):
        X = check_samples(X, min_samples=2, allow_batch=False)
        self.eigenvalues_ = hermitian_evd(sample_covariance(X)).eigenvalues
        self.scores_ = aic_curve(self.eigenvalues_, X.shape[0], self.k_max, self.penalty)
        self.rank_ = int(np.argmin(self.scores_)) + 1
        self.n_features_in_ = X.shape[1]
        return self
