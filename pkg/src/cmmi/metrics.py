"""Receive beamforming against the estimated interference, and scoring."""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .numerics import hermitian_evd, sample_complex_gaussian
from .system import constellation, mallory_noise_cov


@dataclass(frozen=True)
class Beamformer:
    """Unit-norm receive combiner; ``degraded`` marks the fallback branch."""

    u: np.ndarray
    degraded: bool = False

    def __post_init__(self):
        norm = np.linalg.norm(self.u)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"beamformer must be unit norm, got {norm}")


def interference_basis(estimate):
    """Orthonormal basis of the estimate's principal subspace.

    Uses ``estimate.basis`` when the estimator recorded one, otherwise the
    ``rank_used`` leading eigenvectors of the matrix.
    """
    basis = getattr(estimate, "basis", None)
    if basis is not None:
        return np.asarray(basis)
    U = hermitian_evd(estimate.matrix).eigenvectors
    return U[..., : int(estimate.rank_used)]


def zfc_rbf(estimate, h_eff, rtol=1e-10):
    """Zero-forcing-constrained receive beamformer.

    Projects the desired channel ``h_eff`` onto the orthogonal complement of
    the estimated interference subspace and normalizes.  If almost nothing
    survives the projection (the desired channel lies in the interference
    subspace, or the subspace fills the whole space) the eigenvector of the
    estimate with the smallest eigenvalue is returned with ``degraded=True``.
    """
    h = np.asarray(h_eff, dtype=complex)
    E = interference_basis(estimate)
    u = h - E @ (E.conj().T @ h)
    norm = np.linalg.norm(u)
    if norm > rtol * np.linalg.norm(h):
        return Beamformer(u / norm)
    if E.shape[-1] == E.shape[-2]:
        # a full basis is the descending eigenvector set
        v = E[:, -1]
    else:
        v = hermitian_evd(estimate.matrix).eigenvectors[:, -1]
    return Beamformer(v / np.linalg.norm(v), degraded=True)


def sjnr(u, h_eff, cfg, true_cov):
    """Post-combining SJNR, scored against the true interference covariance.

    ``beta P |u^H h|^2 / u^H (R_JJ + sigma_B^2 I) u``.
    """
    u = u.u if isinstance(u, Beamformer) else np.asarray(u)
    signal = cfg.beta * cfg.power * abs(np.vdot(u, h_eff)) ** 2
    denom = np.real(np.vdot(u, true_cov @ u)) + cfg.noise_bob * np.real(np.vdot(u, u))
    return signal / denom


def nmse(estimate, truth):
    """``||estimate - truth||_F^2 / ||truth||_F^2``, per matrix."""
    truth = np.asarray(truth)
    den = np.sum(np.abs(truth) ** 2, axis=(-2, -1))
    if np.any(den == 0):
        raise ValueError("NMSE undefined for a zero reference matrix")
    return np.sum(np.abs(np.asarray(estimate) - truth) ** 2, axis=(-2, -1)) / den


def discrete_input_mi(points, rng, n_draws=2000, noise=None):
    """Mutual information (bits) of equiprobable points in unit complex AWGN.

    ``points`` has shape ``(K, d)``: ``K`` hypotheses observed through
    ``y = x_k + z`` with ``z ~ CN(0, I_d)``.  The expectation over the
    transmitted point and the noise is a Monte Carlo average over
    ``n_draws`` draws, the hypotheses visited cyclically.  Pre-drawn unit
    noise of shape ``(n_draws, d)`` can be passed as ``noise``.
    """
    X = np.atleast_2d(np.asarray(points, dtype=complex))
    K, d = X.shape
    if noise is None:
        noise = sample_complex_gaussian((n_draws, d), 1.0, rng)
    noise = np.asarray(noise)
    n_draws = noise.shape[0]
    k = np.arange(n_draws) % K
    # |x_k - x_j + z|^2 - |z|^2 = |x_k - x_j|^2 + 2 Re(z^H x_k) - 2 Re(z^H x_j)
    gram = X @ X.conj().T
    sq = np.real(np.diag(gram))
    dist = sq[:, None] + sq[None, :] - 2.0 * np.real(gram)
    proj = np.real(noise.conj() @ X.T)
    expo = -(dist[k] + 2.0 * (proj[np.arange(n_draws), k][:, None] - proj))
    lse = logsumexp(expo, axis=-1) / np.log(2.0)
    return float(np.log2(K) - lse.mean())


def sm_points(cfg, channel):
    """Noise-free observations of every (antenna, symbol) pair.

    ``channel`` is the effective ``(d, n_t)`` matrix seen by the receiver.
    Returns shape ``(n_t * M, d)``, antenna-major.
    """
    s = constellation(cfg.mod_order)
    cols = np.asarray(channel).T
    return np.sqrt(cfg.beta * cfg.power) * (cols[:, None, :] * s[None, :, None]).reshape(-1, cols.shape[1])


def bob_mi(cfg, ch, u, true_cov, rng, n_draws=2000, noise=None):
    """Bob's MI through the scalar channel ``u^H y_b``.

    AN is invisible to Bob, and the residual jamming plus noise is Gaussian
    with variance ``u^H (R_JJ + sigma_B^2 I) u``.
    """
    u = u.u if isinstance(u, Beamformer) else np.asarray(u)
    var = np.real(np.vdot(u, true_cov @ u)) + cfg.noise_bob
    eff = (u.conj() @ ch.HS)[None, :] / np.sqrt(var)
    return discrete_input_mi(sm_points(cfg, eff), rng, n_draws, noise)


def mallory_mi(cfg, ch, rng, n_draws=2000, noise=None):
    """Mallory's MI after whitening by its AN + self-interference + noise."""
    evd = hermitian_evd(mallory_noise_cov(cfg, ch))
    W = (evd.eigenvectors / np.sqrt(evd.eigenvalues)) @ evd.eigenvectors.conj().T
    return discrete_input_mi(sm_points(cfg, W @ ch.GS), rng, n_draws, noise)


def secrecy_rate(cfg, ch, u, true_cov, rng, n_draws=2000, i_mallory=None):
    """``max(0, I_Bob - I_Mallory)`` in bits per channel use."""
    if i_mallory is None:
        i_mallory = mallory_mi(cfg, ch, rng, n_draws)
    return max(0.0, bob_mi(cfg, ch, u, true_cov, rng, n_draws) - i_mallory)


@dataclass(frozen=True)
class FlopCounts:
    scm: int
    pca_evd: int
    jd: int

    def as_dict(self):
        return {"SCM": self.scm, "PCA-EVD": self.pca_evd, "JD": self.jd}


def flop_counts(K, Nr, r, Nb):
    """Closed-form FLOP counts of the SCM, PCA-EVD and JD estimators.

    ``K`` snapshots of dimension ``Nr`` with rank ``r``; ``Nb`` sets the
    number of Givens pairs.  Exact integer arithmetic.
    """
    K, Nr, r, Nb = (int(v) for v in (K, Nr, r, Nb))
    if min(K, Nr, r, Nb) < 1:
        raise ValueError("all arguments must be positive")
    if r >= Nr:
        raise ValueError(f"rank {r} must be below dimension {Nr}")
    c_scm = 6 * K * Nr**2
    c_pca = 126 * Nr**3 + (8 * K + 6 * r - 2) * Nr**2
    # (Nb-1)^2 (126*2^3 + 24(K-r)) is always even
    pairs_term = (Nb - 1) ** 2 * (126 * 2**3 + 24 * (K - r)) // 2
    c_jd = (158 + 8 * K - 8 * r) * Nr**3 + pairs_term + (8 * r + 4 * K - 8) * Nr**2
    return FlopCounts(c_scm, c_pca, c_jd)
