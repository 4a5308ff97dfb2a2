"""Dense complex linear algebra used by the estimators and the system model.

Every routine accepts stacks of matrices with arbitrary leading batch
dimensions, in the same way :mod:`numpy.linalg` does.  Iterative routines
track convergence per matrix and only touch the members of a stack that are
still active, so the result for one matrix never depends on what else was
in the batch.
"""

from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple

import numpy as np

HERMITIAN_ATOL = 1e-12


class ConvergenceError(RuntimeError):
    """Raised when an iterative eigensolver exhausts its sweep budget."""


class EigenDecomposition(NamedTuple):
    """Eigenvalues sorted descending and the matching unitary eigenvectors.

    ``eigenvectors[..., :, k]`` pairs with ``eigenvalues[..., k]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        U = self.eigenvectors
        return (U * self.eigenvalues[..., None, :]) @ U.conj().swapaxes(-1, -2)


@dataclass(frozen=True)
class GivensRotation:
    """Plane rotation acting on coordinates ``i < j``.

    As a full matrix it is the identity except for the block
    ``[[c, s], [-conj(s), c]]`` at rows/columns ``(i, j)``.
    """

    i: int
    j: int
    c: float
    s: complex

    def __post_init__(self):
        if not 0 <= self.i < self.j:
            raise ValueError(f"need 0 <= i < j, got i={self.i}, j={self.j}")
        if abs(self.c**2 + abs(self.s) ** 2 - 1.0) > 1e-12:
            raise ValueError("rotation is not unitary: c^2 + |s|^2 != 1")

    def matrix(self, n):
        if self.j >= n:
            raise IndexError(f"rotation index {self.j} out of range for dim {n}")
        N = np.eye(n, dtype=complex)
        N[self.i, self.i] = self.c
        N[self.j, self.j] = self.c
        N[self.i, self.j] = self.s
        N[self.j, self.i] = -np.conj(self.s)
        return N


def hermitian_part(A):
    """Return ``(A + A^H) / 2`` with an exactly real diagonal."""
    A = np.asarray(A, dtype=complex)
    H = 0.5 * (A + A.conj().swapaxes(-1, -2))
    idx = np.arange(H.shape[-1])
    H[..., idx, idx] = H[..., idx, idx].real
    return H


def check_hermitian(A, atol=HERMITIAN_ATOL, name="A"):
    A = np.asarray(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    dev = np.max(np.abs(A - A.conj().swapaxes(-1, -2)), initial=0.0)
    if dev > atol * max(1.0, np.max(np.abs(A), initial=0.0)):
        raise ValueError(f"{name} is not Hermitian (max deviation {dev:.3e})")
    return hermitian_part(A)


def off_diagonal_energy(A):
    """Squared Frobenius norm of the off-diagonal part, per matrix."""
    A = np.asarray(A)
    n = A.shape[-1]
    mask = ~np.eye(n, dtype=bool)
    return np.sum(np.abs(A) ** 2 * mask, axis=(-2, -1))


def rotate_rows_cols(A, i, j, c, s):
    """Return ``N A N^H`` for a stack of matrices and per-matrix ``(c, s)``.

    ``c`` and ``s`` broadcast against the batch shape ``A.shape[:-2]``.
    """
    A = np.array(A, dtype=complex, copy=True)
    _rotate_inplace(A, i, j, np.asarray(c, dtype=float), np.asarray(s, dtype=complex))
    return A


def _rotate_inplace(A, i, j, c, s):
    c = c[..., None]
    s = s[..., None]
    ri, rj = A[..., i, :].copy(), A[..., j, :].copy()
    A[..., i, :] = c * ri + s * rj
    A[..., j, :] = c * rj - s.conj() * ri
    ci, cj = A[..., :, i].copy(), A[..., :, j].copy()
    A[..., :, i] = c * ci + s.conj() * cj
    A[..., :, j] = c * cj - s * ci


def apply_givens(A, rot):
    """Return ``N A N^H`` where ``N`` is the full-size form of ``rot``."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[-1]
    if rot.j >= n:
        raise IndexError(f"rotation ({rot.i}, {rot.j}) out of range for dim {n}")
    return rotate_rows_cols(A, rot.i, rot.j, rot.c, rot.s)


def _post_multiply_adjoint(V, i, j, c, s):
    # V <- V N^H, column operation only
    c = c[..., None]
    s = s[..., None]
    vi, vj = V[..., :, i].copy(), V[..., :, j].copy()
    V[..., :, i] = c * vi + s.conj() * vj
    V[..., :, j] = c * vj - s * vi


def _jacobi_angles(aii, ajj, aij):
    """Rotation ``(c, s)`` that zeroes entry ``(i, j)`` of a Hermitian matrix."""
    rho = np.abs(aij)
    # below this the entry is numerically zero; dividing by it would overflow
    nz = rho > 1e-150
    phase = np.where(nz, aij / np.where(nz, rho, 1.0), 1.0)
    d = aii - ajj
    root = np.sqrt(d * d + 4.0 * rho * rho)
    denom = np.where(d >= 0, d + root, d - root)
    t = np.where(nz, 2.0 * rho / np.where(nz, denom, 1.0), 0.0)
    c = 1.0 / np.sqrt(1.0 + t * t)
    return c, t * c * phase


def _jacobi_sweep(A, V, pairs):
    for i, j in pairs:
        c, s = _jacobi_angles(A[:, i, i].real, A[:, j, j].real, A[:, i, j])
        _rotate_inplace(A, i, j, c, s)
        A[:, i, j] = 0.0
        A[:, j, i] = 0.0
        _post_multiply_adjoint(V, i, j, c, s)


def _normalize_phase(U, tol=1e-12):
    # first component with magnitude above tol made real positive, per column
    mag = np.abs(U)
    first = np.argmax(mag > tol, axis=-2)
    lead = np.take_along_axis(U, first[..., None, :], axis=-2)
    lead_mag = np.abs(lead)
    phase = np.where(lead_mag > 0, lead.conj() / np.where(lead_mag > 0, lead_mag, 1.0), 1.0)
    return U * phase


def hermitian_evd(A, tol=1e-24, max_sweeps=100):
    """Eigendecomposition of Hermitian matrices by cyclic Jacobi sweeps.

    Parameters
    ----------
    A : array_like, shape (..., n, n)
        Hermitian matrix or stack of Hermitian matrices.
    tol : float
        A matrix is converged once its off-diagonal energy falls below
        ``tol * ||A||_F^2``.
    max_sweeps : int
        Sweep budget; exceeding it raises :class:`ConvergenceError`.

    Returns
    -------
    EigenDecomposition
        Eigenvalues sorted descending, eigenvectors with the first
        significant component of each column made real positive.
    """
    A = check_hermitian(A)
    batch_shape = A.shape[:-2]
    n = A.shape[-1]
    work = A.reshape((-1, n, n)).copy()
    V = np.broadcast_to(np.eye(n, dtype=complex), work.shape).copy()
    pairs = list(combinations(range(n), 2))

    scale = np.sum(np.abs(work) ** 2, axis=(-2, -1))
    active = off_diagonal_energy(work) > tol * scale
    for _ in range(max_sweeps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        sub_A, sub_V = work[idx], V[idx]
        _jacobi_sweep(sub_A, sub_V, pairs)
        work[idx], V[idx] = sub_A, sub_V
        active[idx] = off_diagonal_energy(sub_A) > tol * scale[idx]
    if active.any():
        resid = off_diagonal_energy(work[active]).max()
        raise ConvergenceError(
            f"Jacobi eigensolver did not converge in {max_sweeps} sweeps; "
            f"residual off-diagonal energy {resid:.3e}"
        )

    w = np.diagonal(work, axis1=-2, axis2=-1).real
    order = np.argsort(-w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    V = np.take_along_axis(V, order[:, None, :], axis=-1)
    V = _normalize_phase(V)
    return EigenDecomposition(w.reshape(batch_shape + (n,)), V.reshape(batch_shape + (n, n)))


def top_eigenvector_symmetric(G, tol=1e-24, max_sweeps=100):
    """Unit eigenvector of the largest eigenvalue of real symmetric ``G``.

    Real cyclic Jacobi, batched like :func:`hermitian_evd` but without the
    complex bookkeeping; meant for the small accumulators of the joint
    diagonalizer.
    """
    G = np.asarray(G, dtype=float)
    G = 0.5 * (G + G.swapaxes(-1, -2))
    batch_shape, n = G.shape[:-2], G.shape[-1]
    A = G.reshape((-1, n, n)).copy()
    V = np.broadcast_to(np.eye(n), A.shape).copy()
    pairs = list(combinations(range(n), 2))
    mask = ~np.eye(n, dtype=bool)
    scale = np.sum(A * A, axis=(-2, -1))
    active = np.sum((A * A) * mask, axis=(-2, -1)) > tol * scale
    for _ in range(max_sweeps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        a, v = A[idx], V[idx]
        for i, j in pairs:
            c, s = _jacobi_angles(a[:, i, i], a[:, j, j], a[:, i, j])
            c, s = c[:, None], s.real[:, None]
            ri, rj = a[:, i, :].copy(), a[:, j, :].copy()
            a[:, i, :], a[:, j, :] = c * ri + s * rj, c * rj - s * ri
            ci, cj = a[:, :, i].copy(), a[:, :, j].copy()
            a[:, :, i], a[:, :, j] = c * ci + s * cj, c * cj - s * ci
            a[:, i, j] = a[:, j, i] = 0.0
            vi, vj = v[:, :, i].copy(), v[:, :, j].copy()
            v[:, :, i], v[:, :, j] = c * vi + s * vj, c * vj - s * vi
        A[idx], V[idx] = a, v
        active[idx] = np.sum((a * a) * mask, axis=(-2, -1)) > tol * scale[idx]
    if active.any():
        raise ConvergenceError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")
    w = np.diagonal(A, axis1=-2, axis2=-1)
    top = np.argmax(w, axis=-1)
    vec = np.take_along_axis(V, top[:, None, None], axis=-1)[..., 0]
    return vec.reshape(batch_shape + (n,))


def givens_from_stats(G):
    """Rotation parameters maximizing ``v(c, s)^T G v(c, s)``.

    ``G`` is the real symmetric 2x2 or 3x3 accumulator of the pair
    statistics ``g = [r_ii - r_jj, 2 Re r_ij, 2 Im r_ij]`` (the 2x2 form
    omits the imaginary component).  The optimal ``v = [x, y(, z)]`` is the
    dominant unit eigenvector, oriented so ``x >= 0``; then
    ``c = sqrt((x + 1) / 2)`` and ``s = (y + i z) / sqrt(2 (x + 1))``.

    Returns
    -------
    c : ndarray of float
    s : ndarray of complex
    """
    G = np.asarray(G, dtype=float)
    if G.shape[-1] not in (2, 3) or G.shape[-2] != G.shape[-1]:
        raise ValueError(f"accumulator must be 2x2 or 3x3, got {G.shape[-2:]}")
    v = top_eigenvector_symmetric(G)
    return _rotation_from_direction(v)


def _rotation_from_direction(v):
    v = np.where(v[..., :1] < 0, -v, v)
    x, y = v[..., 0], v[..., 1]
    z = v[..., 2] if v.shape[-1] == 3 else np.zeros_like(x)
    xp1 = x + 1.0
    degenerate = xp1 < 1e-15
    safe = np.where(degenerate, 1.0, xp1)
    c = np.where(degenerate, 0.0, np.sqrt(0.5 * safe))
    s = np.where(degenerate, 1.0 + 0j, (y + 1j * z) / np.sqrt(2.0 * safe))
    # renormalize away rounding so that c^2 + |s|^2 == 1 to machine precision
    norm = np.sqrt(c * c + np.abs(s) ** 2)
    return c / norm, s / norm


def null_space_projector(A, rtol=1e-12, return_rank=False):
    """Orthogonal projector onto the null space of ``A``.

    Builds an orthonormal basis of the row space by modified Gram-Schmidt
    with re-orthogonalization; a row whose residual falls at or below
    ``rtol`` times the largest row norm counts as dependent, so a
    rank-deficient ``A`` projects onto its actual null space.

    Returns
    -------
    Q : ndarray, shape (n, n)
        Hermitian idempotent with ``A @ Q ~= 0``.
    rank : int
        Effective row rank, only when ``return_rank`` is true.
    """
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    if A.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {A.shape}")
    n = A.shape[-1]
    rows = A.conj()
    scale = max(float(np.max(np.linalg.norm(rows, axis=1), initial=0.0)), 0.0)
    basis = []
    for v in rows:
        for _ in range(2):
            for q in basis:
                v = v - q * np.vdot(q, v)
        norm = np.linalg.norm(v)
        if scale > 0 and norm > rtol * scale:
            basis.append(v / norm)
    W = np.array(basis).T if basis else np.zeros((n, 0), dtype=complex)
    Q = hermitian_part(np.eye(n) - W @ W.conj().T)
    return (Q, len(basis)) if return_rank else Q


def orthonormal_columns(X):
    """Orthonormal basis for the column span of a full-column-rank ``X``.

    Modified Gram-Schmidt with one re-orthogonalization pass.
    """
    X = np.array(X, dtype=complex, copy=True)
    m, k = X.shape
    Q = np.zeros((m, k), dtype=complex)
    for col in range(k):
        v = X[:, col]
        for _ in range(2):
            v = v - Q[:, :col] @ (Q[:, :col].conj().T @ v)
        norm = np.linalg.norm(v)
        if norm <= 1e-12 * max(1.0, np.linalg.norm(X[:, col])):
            raise np.linalg.LinAlgError("columns are linearly dependent")
        Q[:, col] = v / norm
    return Q


def sample_complex_gaussian(size, variance, rng):
    """Circularly symmetric complex Gaussian draws, ``CN(0, variance)``.

    Real and imaginary parts are independent with variance ``variance / 2``.
    """
    if variance < 0:
        raise ValueError(f"variance must be nonnegative, got {variance}")
    if np.isscalar(size):
        size = (int(size),)
    z = rng.standard_normal(tuple(size) + (2,))
    return np.sqrt(variance / 2.0) * (z[..., 0] + 1j * z[..., 1])
