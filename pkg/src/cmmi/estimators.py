"""Estimators of the interference covariance from first-slot snapshots.

Four estimators share one input layout, snapshots as rows of an
``(..., L, n_b)`` array:

* ``scm``          sample covariance, optionally minus known noise power
* ``evd_truncate`` rank-r truncation of the sample covariance
* ``pca_evd``      rank-r truncation with the tail-mean noise power removed
* ``jd``           joint diagonalization of the cumulative sample covariances

Each has a functional form returning :class:`CovarianceEstimate` and a
scikit-learn style estimator class with ``fit(X)``.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from sklearn.base import BaseEstimator

from .numerics import (
    _post_multiply_adjoint,
    _rotate_inplace,
    givens_from_stats,
    hermitian_evd,
    hermitian_part,
    off_diagonal_energy,
)
from .rank import AICRankDetector, tail_noise_estimate
from .validation import check_rank, check_samples, sample_covariance

METHODS = ("SCM", "EVD", "PCA-EVD", "JD")


@dataclass
class CovarianceEstimate:
    """An estimated covariance tagged with how it was produced.

    For batched input every array field carries the same leading batch
    dimensions as the samples.
    """

    matrix: np.ndarray
    method: str
    rank_used: int
    noise_var_hat: object = np.nan
    converged: object = True
    n_sweeps: object = 0
    rotation: object = None
    basis: object = None


def _low_rank(U, coeffs):
    return hermitian_part((U * coeffs[..., None, :]) @ U.conj().swapaxes(-1, -2))


def scm(samples, noise_var=None, rank=None):
    """Sample covariance ``(1/L) sum y y^H``.

    ``noise_var`` selects what is removed before the estimate is returned:
    ``None`` keeps the plain sample covariance, a number subtracts that
    known noise power, and ``"tail"`` subtracts the mean of the trailing
    ``n - rank`` eigenvalues.  After a subtraction negative eigenvalues are
    clipped so the estimate stays positive semidefinite.
    """
    Y = check_samples(samples)
    L, n = Y.shape[-2:]
    R = sample_covariance(Y)
    evd = hermitian_evd(R)
    sigma2 = np.nan
    if isinstance(noise_var, str):
        if noise_var != "tail":
            raise ValueError(f"noise_var must be a number, None or 'tail', got {noise_var!r}")
        if rank is None:
            raise ValueError("tail noise estimate needs the rank")
        sigma2 = tail_noise_estimate(evd.eigenvalues, check_rank(rank, n))
    elif noise_var is not None:
        sigma2 = float(noise_var)
    if noise_var is not None:
        shift = np.asarray(sigma2)[..., None]
        R = _low_rank(evd.eigenvectors, np.maximum(evd.eigenvalues - shift, 0.0))
    rank_used = min(L, n)
    return CovarianceEstimate(R, "SCM", rank_used, sigma2, basis=evd.eigenvectors[..., :rank_used])


def evd_truncate(samples, r):
    """Keep the ``r`` leading eigenpairs of the sample covariance as they are."""
    Y = check_samples(samples)
    r = check_rank(r, Y.shape[-1])
    evd = hermitian_evd(sample_covariance(Y))
    R = _low_rank(evd.eigenvectors[..., :r], evd.eigenvalues[..., :r])
    return CovarianceEstimate(R, "EVD", r, 0.0, basis=evd.eigenvectors[..., :r])


def pca_evd_cov(R, r):
    """Rank-``r`` reconstruction of ``R`` with the tail-mean noise removed.

    Returns the reconstruction, the noise estimate and the kept eigenvectors.
    """
    r = check_rank(r, np.shape(R)[-1])
    evd = hermitian_evd(R)
    sigma2 = tail_noise_estimate(evd.eigenvalues, r)
    coeffs = np.maximum(evd.eigenvalues[..., :r] - np.asarray(sigma2)[..., None], 0.0)
    U = evd.eigenvectors[..., :r]
    return _low_rank(U, coeffs), sigma2, U


def pca_evd(samples, r):
    """PCA-EVD estimate from snapshots.

    The sample covariance is eigendecomposed, the noise power is taken as
    the mean of the ``n_b - r`` smallest eigenvalues, and the ``r`` leading
    eigenpairs are kept with that noise power subtracted (negative
    coefficients clipped to zero).
    """
    Y = check_samples(samples)
    R, sigma2, U = pca_evd_cov(sample_covariance(Y), r)
    return CovarianceEstimate(R, "PCA-EVD", int(r), sigma2, basis=U)


def cumulative_scms(samples, r, noise_var_hat):
    """Running sample covariances ``R_k`` for ``k = r+1 .. L``, noise removed.

    ``R_k`` averages the first ``k`` snapshots and subtracts
    ``noise_var_hat * I``.  Output shape is ``(..., L - r, n_b, n_b)``.
    """
    Y = check_samples(samples)
    L, n = Y.shape[-2:]
    r = check_rank(r, n, L)
    outer = Y[..., :, :, None] * Y[..., :, None, :].conj()
    running = np.cumsum(outer, axis=-3)[..., r:, :, :]
    k = np.arange(r + 1, L + 1, dtype=float)
    Rk = running / k[:, None, None]
    sigma2 = np.asarray(noise_var_hat, dtype=float)[..., None, None, None]
    return hermitian_part(Rk - sigma2 * np.eye(n))


@dataclass
class JointDiagonalization:
    """Outcome of :func:`joint_diagonalize`.

    ``rotation`` is the unitary ``T`` with ``T^H R_k T`` as diagonal as the
    sweeps could make it; ``rotated`` holds those products.
    """

    rotation: np.ndarray
    rotated: np.ndarray
    converged: np.ndarray
    n_sweeps: np.ndarray
    off_history: list


def joint_diagonalize(mats, max_sweeps=50, rtol=1e-10):
    """Approximately diagonalize a family of Hermitian matrices with one unitary.

    Cyclic sweeps over all pairs ``i < j``.  At each pair the rotation
    maximizes the summed squared diagonal gap ``sum_k |r'_ii - r'_jj|^2``
    over the current rotated matrices, which equivalently minimizes their
    summed off-diagonal energy.  Sweeping stops once that energy drops by
    less than ``rtol`` relative in a sweep, or after ``max_sweeps``.

    Parameters
    ----------
    mats : array_like, shape (..., K, n, n)
        Batches of ``K`` Hermitian matrices each.
    """
    mats = hermitian_part(mats)
    if mats.ndim < 3:
        raise ValueError(f"expected (..., K, n, n), got shape {mats.shape}")
    batch_shape = mats.shape[:-3]
    K, n = mats.shape[-3], mats.shape[-1]
    R = mats.reshape((-1, K, n, n)).copy()
    B = R.shape[0]
    T = np.broadcast_to(np.eye(n, dtype=complex), (B, n, n)).copy()
    pairs = list(combinations(range(n), 2))

    off = off_diagonal_energy(R).sum(axis=-1)
    history = [off.copy()]
    converged = off == 0.0
    active = ~converged
    sweeps = np.zeros(B, dtype=int)
    for _ in range(max_sweeps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        sub_R, sub_T = R[idx], T[idx]
        for i, j in pairs:
            g = np.stack(
                [
                    sub_R[..., i, i].real - sub_R[..., j, j].real,
                    2.0 * sub_R[..., i, j].real,
                    2.0 * sub_R[..., i, j].imag,
                ],
                axis=-1,
            )
            acc = np.einsum("bki,bkl->bil", g, g) / K
            c, s = givens_from_stats(acc)
            _rotate_inplace(sub_R, i, j, c[:, None], s[:, None])
            _post_multiply_adjoint(sub_T, i, j, c, s)
        R[idx], T[idx] = sub_R, sub_T
        sweeps[idx] += 1
        new_off = off_diagonal_energy(sub_R).sum(axis=-1)
        done = (off[idx] - new_off) <= rtol * off[idx]
        off[idx] = new_off
        converged[idx[done]] = True
        active[idx[done]] = False
        history.append(off.copy())

    return JointDiagonalization(
        rotation=T.reshape(batch_shape + (n, n)),
        rotated=R.reshape(batch_shape + (K, n, n)),
        converged=converged.reshape(batch_shape),
        n_sweeps=sweeps.reshape(batch_shape),
        off_history=[h.reshape(batch_shape) for h in history],
    )


def jd_from_sequence(mats, r, max_sweeps=50, rtol=1e-10):
    """JD estimate from an already built sequence ``R_{r+1} .. R_L``.

    After joint diagonalization the diagonal of ``T^H R_L T`` is sorted
    descending, its ``r`` leading entries (clipped at zero) form the
    diagonal ``Lambda``, and the estimate is ``T Lambda T^H``.
    """
    mats = np.asarray(mats)
    r = check_rank(r, mats.shape[-1])
    res = joint_diagonalize(mats, max_sweeps=max_sweeps, rtol=rtol)
    d = np.diagonal(res.rotated[..., -1, :, :], axis1=-2, axis2=-1).real
    order = np.argsort(-d, axis=-1, kind="stable")
    d = np.take_along_axis(d, order, axis=-1)
    T = np.take_along_axis(res.rotation, order[..., None, :], axis=-1)
    lam = np.maximum(d[..., :r], 0.0)
    R = _low_rank(T[..., :r], lam)
    return R, T, res


def jd(samples, r, max_sweeps=50, rtol=1e-10):
    """Joint-diagonalization estimate of the interference covariance.

    The noise power comes from the tail of the full sample covariance, the
    cumulative covariances ``R_{r+1} .. R_L`` are jointly diagonalized, and
    the ``r`` largest diagonal entries of the rotated ``R_L`` are kept.
    """
    Y = check_samples(samples)
    L, n = Y.shape[-2:]
    r = check_rank(r, n, L)
    w = hermitian_evd(sample_covariance(Y)).eigenvalues
    sigma2 = tail_noise_estimate(w, r)
    mats = cumulative_scms(Y, r, sigma2)
    R, T, res = jd_from_sequence(mats, r, max_sweeps=max_sweeps, rtol=rtol)
    return CovarianceEstimate(
        R,
        "JD",
        r,
        sigma2,
        converged=res.converged,
        n_sweeps=res.n_sweeps,
        rotation=T,
        basis=T[..., :r],
    )


class _CovarianceEstimator(BaseEstimator):
    """Shared ``fit`` plumbing; subclasses implement ``_estimate``."""

    def fit(self, X, y=None):
        X = check_samples(X, allow_batch=False)
        est = self._estimate(X)
        self.covariance_ = est.matrix
        self.rank_ = int(est.rank_used)
        self.noise_variance_ = float(est.noise_var_hat)
        self.n_features_in_ = X.shape[1]
        return est

    def _rank(self, X):
        if self.n_components is not None:
            return self.n_components
        r = AICRankDetector().fit(X).rank_
        return min(r, X.shape[0] - 1) if self.requires_fewer_than_samples else r

    requires_fewer_than_samples = False


class SampleCovariance(_CovarianceEstimator):
    """Sample covariance, optionally with the noise power removed.

    Parameters
    ----------
    noise_variance : float or "tail", optional
        A number subtracts ``noise_variance * I``; ``"tail"`` subtracts the
        trailing-eigenvalue noise estimate for rank ``n_components``.  The
        result is projected onto the PSD cone in both cases.
    n_components : int, optional
        Rank for the tail estimate; AIC-selected when omitted.
    """

    def __init__(self, noise_variance=None, n_components=None):
        self.noise_variance = noise_variance
        self.n_components = n_components

    def fit(self, X, y=None):
        super().fit(X)
        return self

    def _estimate(self, X):
        rank = self._rank(X) if isinstance(self.noise_variance, str) else None
        return scm(X, self.noise_variance, rank)


class TruncatedEVD(_CovarianceEstimator):
    """Rank-``n_components`` truncation of the sample covariance.

    ``n_components=None`` picks the rank with :class:`AICRankDetector`.
    """

    def __init__(self, n_components=None):
        self.n_components = n_components

    def fit(self, X, y=None):
        super().fit(X)
        return self

    def _estimate(self, X):
        return evd_truncate(X, self._rank(X))


class PCAEVD(_CovarianceEstimator):
    """Noise-debiased rank-``n_components`` eigen-reconstruction."""

    def __init__(self, n_components=None):
        self.n_components = n_components

    def fit(self, X, y=None):
        super().fit(X)
        return self

    def _estimate(self, X):
        return pca_evd(X, self._rank(X))


class JointDiagonalizationCovariance(_CovarianceEstimator):
    """Covariance estimate from joint diagonalization of cumulative SCMs.

    Attributes
    ----------
    rotation_ : ndarray of shape (n_features, n_features)
        Unitary ``T``, columns ordered by decreasing rotated diagonal.
    converged_ : bool
    n_sweeps_ : int
    """

    requires_fewer_than_samples = True

    def __init__(self, n_components=None, max_sweeps=50, tol=1e-10):
        self.n_components = n_components
        self.max_sweeps = max_sweeps
        self.tol = tol

    def fit(self, X, y=None):
        est = super().fit(X)
        self.rotation_ = est.rotation
        self.converged_ = bool(est.converged)
        self.n_sweeps_ = int(est.n_sweeps)
        return self

    def _estimate(self, X):
        return jd(X, self._rank(X), max_sweeps=self.max_sweeps, rtol=self.tol)
