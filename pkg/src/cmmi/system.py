"""Secure spatial-modulation link with a full-duplex jamming eavesdropper.

Alice activates one of ``n_t`` antennas per channel use and sends an M-ary
symbol on it, plus artificial noise (AN) confined to the null space of Bob's
channel.  Mallory listens with ``n_m`` antennas and jams Bob with
``n_jam`` precoded Gaussian streams.  In the first slot only Mallory
transmits and Bob collects interference-plus-noise snapshots; in the second
slot both transmit.
"""

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .numerics import (
    hermitian_evd,
    hermitian_part,
    null_space_projector,
    orthonormal_columns,
    sample_complex_gaussian,
)


@dataclass(frozen=True)
class SystemConfig:
    """Scenario scalars.

    Powers are in watts, variances in the same power units.  ``n_t`` is
    derived from ``n_x`` as the largest power of two not above it.
    """

    n_x: int = 16
    n_b: int = 8
    n_m: int = 6
    n_jam: int = 3
    beta: float = 0.9
    power: float = 10.0
    jam_power: float = 1.0
    an_var: float = 1.0
    jam_var: float = 1.0
    noise_bob: float = 1.0
    noise_mallory: float = 1.0
    mod_order: int = 4
    n_samples: int = 8

    def __post_init__(self):
        for name in ("n_x", "n_b", "n_m", "n_jam", "n_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_jam >= self.n_m:
            raise ValueError(f"n_jam ({self.n_jam}) must be < n_m ({self.n_m})")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        for name in ("power", "jam_power", "an_var", "jam_var", "noise_bob", "noise_mallory"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        m = self.mod_order
        if m < 2 or m & (m - 1):
            raise ValueError(f"mod_order must be a power of two >= 2, got {m}")

    @property
    def n_t(self):
        return 1 << (int(self.n_x).bit_length() - 1)

    def replace(self, **changes):
        return replace(self, **changes)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class ChannelSet:
    """One channel realization plus the precoders derived from it.

    ``G`` is stored as ``n_m x n_x`` so that ``G @ S`` is Mallory's
    effective channel from the activated antennas, mirroring ``H @ S``.
    """

    H: np.ndarray
    G: np.ndarray
    F: np.ndarray
    M: np.ndarray
    S: np.ndarray
    T_an: np.ndarray
    P_j: np.ndarray
    HS: np.ndarray = field(init=False, repr=False)
    GS: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.HS = self.H @ self.S
        self.GS = self.G @ self.S

    @property
    def jam_channel(self):
        """Effective jamming channel at Bob, ``F P_J``."""
        return self.F @ self.P_j


def constellation(mod_order):
    """Unit average energy M-PSK table; Gray-mapped QPSK for ``M = 4``."""
    if mod_order == 4:
        return np.array([1 + 1j, -1 + 1j, 1 - 1j, -1 - 1j]) / np.sqrt(2.0)
    k = np.arange(mod_order)
    gray = k ^ (k >> 1)
    return np.exp(2j * np.pi * gray / mod_order)


def selection_matrix(n_x, n_t):
    """Real ``n_x x n_t`` matrix activating the first ``n_t`` antennas."""
    S = np.zeros((n_x, n_t))
    S[np.arange(n_t), np.arange(n_t)] = 1.0
    return S


def random_semi_unitary(rows, cols, rng):
    X = sample_complex_gaussian((rows, cols), 1.0, rng)
    return orthonormal_columns(X)


def draw_channels(cfg, rng, jam_precoder="random", max_redraws=10):
    """Draw one realization of ``H, G, F, M`` and build ``S, T_AN, P_J``.

    ``T_AN`` is the null-space projector of ``H S`` scaled to unit total
    power per unit-variance AN entry, i.e. ``an_var * tr(T T^H) = 1``.
    ``jam_precoder="nullspace"`` picks ``P_J`` inside the left null space of
    ``G S`` when that space is large enough and otherwise falls back to a
    random semi-unitary matrix, which is the default.
    """
    n_t = cfg.n_t
    S = selection_matrix(cfg.n_x, n_t)
    need = min(cfg.n_b, n_t)
    for _ in range(max_redraws):
        H = sample_complex_gaussian((cfg.n_b, cfg.n_x), 1.0, rng)
        G = sample_complex_gaussian((cfg.n_m, cfg.n_x), 1.0, rng)
        F = sample_complex_gaussian((cfg.n_b, cfg.n_m), 1.0, rng)
        M = sample_complex_gaussian((cfg.n_m, cfg.n_m), 1.0, rng)
        Q, rank = null_space_projector(H @ S, return_rank=True)
        if rank == need:
            break
    else:
        raise np.linalg.LinAlgError("could not draw a full-rank channel H S")

    null_dim = n_t - rank
    if null_dim > 0 and cfg.an_var > 0:
        T_an = Q / np.sqrt(null_dim * cfg.an_var)
    else:
        T_an = np.zeros((n_t, n_t), dtype=complex)

    P_j = None
    if jam_precoder == "nullspace":
        Qm, rank_m = null_space_projector((G @ S).conj().T, return_rank=True)
        if cfg.n_m - rank_m >= cfg.n_jam:
            P_j = hermitian_evd(Qm).eigenvectors[:, : cfg.n_jam]
    elif jam_precoder != "random":
        raise ValueError(f"unknown jam_precoder {jam_precoder!r}")
    if P_j is None:
        P_j = random_semi_unitary(cfg.n_m, cfg.n_jam, rng)
    return ChannelSet(H=H, G=G, F=F, M=M, S=S, T_an=T_an, P_j=P_j)


@dataclass(frozen=True)
class TransmitSymbol:
    """Zero-based active antenna and constellation indices."""

    antenna: int
    symbol: int

    def check(self, cfg):
        if not 0 <= self.antenna < cfg.n_t:
            raise ValueError(f"antenna index {self.antenna} outside [0, {cfg.n_t})")
        if not 0 <= self.symbol < cfg.mod_order:
            raise ValueError(f"symbol index {self.symbol} outside [0, {cfg.mod_order})")


def random_symbol(cfg, rng):
    return TransmitSymbol(int(rng.integers(cfg.n_t)), int(rng.integers(cfg.mod_order)))


def _symbol_vector(cfg, sym):
    sym.check(cfg)
    x = np.zeros(cfg.n_t, dtype=complex)
    x[sym.antenna] = constellation(cfg.mod_order)[sym.symbol]
    return x


def alice_signal(cfg, ch, sym, rng, an=None):
    """Alice's transmit vector: data on one antenna plus projected AN."""
    if an is None:
        an = sample_complex_gaussian(cfg.n_t, cfg.an_var, rng)
    data = np.sqrt(cfg.beta * cfg.power) * _symbol_vector(cfg, sym)
    return data + np.sqrt((1.0 - cfg.beta) * cfg.power) * (ch.T_an @ an)


def mallory_signal(cfg, ch, rng, streams=None):
    """Mallory's jamming vector ``sqrt(P_M) P_J n_m``."""
    if streams is None:
        streams = sample_complex_gaussian(cfg.n_jam, cfg.jam_var, rng)
    return np.sqrt(cfg.jam_power) * (ch.P_j @ streams)


def jamming_only_samples(cfg, ch, rng, n=None):
    """First-slot snapshots at Bob, one per row: jamming plus thermal noise.

    Returns an array of shape ``(n, n_b)``; ``n`` defaults to
    ``cfg.n_samples``.
    """
    n = cfg.n_samples if n is None else int(n)
    streams = sample_complex_gaussian((n, cfg.n_jam), cfg.jam_var, rng)
    noise = sample_complex_gaussian((n, cfg.n_b), cfg.noise_bob, rng)
    return np.sqrt(cfg.jam_power) * streams @ ch.jam_channel.T + noise


def jamming_only_sample(cfg, ch, rng):
    return jamming_only_samples(cfg, ch, rng, 1)[0]


def receive_bob(cfg, ch, sym, rng):
    """Second-slot observation at Bob."""
    an = sample_complex_gaussian(cfg.n_t, cfg.an_var, rng)
    streams = sample_complex_gaussian(cfg.n_jam, cfg.jam_var, rng)
    x_a = alice_signal(cfg, ch, sym, rng, an=an)
    x_m = mallory_signal(cfg, ch, rng, streams=streams)
    noise = sample_complex_gaussian(cfg.n_b, cfg.noise_bob, rng)
    return ch.HS @ x_a + ch.F @ x_m + noise


def receive_mallory(cfg, ch, sym, rng):
    """Second-slot observation at Mallory, including self-interference."""
    an = sample_complex_gaussian(cfg.n_t, cfg.an_var, rng)
    streams = sample_complex_gaussian(cfg.n_jam, cfg.jam_var, rng)
    x_a = alice_signal(cfg, ch, sym, rng, an=an)
    x_m = mallory_signal(cfg, ch, rng, streams=streams)
    noise = sample_complex_gaussian(cfg.n_m, cfg.noise_mallory, rng)
    return ch.GS @ x_a + ch.M @ x_m + noise


def population_interference_cov(cfg, ch):
    """Exact jamming covariance at Bob, ``P_M sigma_m^2 F P_J P_J^H F^H``."""
    A = ch.jam_channel
    return hermitian_part(cfg.jam_power * cfg.jam_var * (A @ A.conj().T))


def population_received_cov(cfg, ch):
    """First-slot covariance ``R_JJ + sigma_B^2 I``."""
    return population_interference_cov(cfg, ch) + cfg.noise_bob * np.eye(cfg.n_b)


def mallory_noise_cov(cfg, ch):
    """Covariance of everything at Mallory except the data term."""
    GT = ch.GS @ ch.T_an
    MP = ch.M @ ch.P_j
    C = ((1.0 - cfg.beta) * cfg.power * cfg.an_var) * (GT @ GT.conj().T)
    C = C + (cfg.jam_power * cfg.jam_var) * (MP @ MP.conj().T)
    return hermitian_part(C + cfg.noise_mallory * np.eye(cfg.n_m))


def sinr(cfg):
    """Per-antenna SINR ``beta P / (P_M sigma_m^2 n_jam + sigma_B^2)``."""
    return cfg.beta * cfg.power / (cfg.jam_power * cfg.jam_var * cfg.n_jam + cfg.noise_bob)


def sinr_to_jamming_power(cfg, target_sinr_db):
    """Jamming power that puts :func:`sinr` at ``target_sinr_db``."""
    if not np.isfinite(target_sinr_db):
        raise ValueError(f"target SINR must be finite, got {target_sinr_db}")
    if cfg.jam_var <= 0:
        raise ValueError("jamming power has no effect when jam_var is zero")
    target = 10.0 ** (target_sinr_db / 10.0)
    signal = cfg.beta * cfg.power
    slack = signal / target - cfg.noise_bob
    if slack < -1e-12 * max(signal / target, cfg.noise_bob):
        ceiling = 10.0 * np.log10(signal / cfg.noise_bob) if cfg.noise_bob > 0 else np.inf
        raise ValueError(
            f"SINR {target_sinr_db} dB unreachable: noise alone caps it at {ceiling:.4g} dB"
        )
    return max(slack, 0.0) / (cfg.jam_var * cfg.n_jam)


def jnr(cfg):
    """First-slot jamming-to-noise ratio per antenna, ``P_M sigma_m^2 n_jam / sigma_B^2``."""
    return cfg.jam_power * cfg.jam_var * cfg.n_jam / cfg.noise_bob


def jnr_to_jamming_power(cfg, target_jnr_db):
    """Jamming power that puts :func:`jnr` at ``target_jnr_db``."""
    if not np.isfinite(target_jnr_db):
        raise ValueError(f"target JNR must be finite, got {target_jnr_db}")
    if cfg.jam_var <= 0:
        raise ValueError("jamming power has no effect when jam_var is zero")
    return 10.0 ** (target_jnr_db / 10.0) * cfg.noise_bob / (cfg.jam_var * cfg.n_jam)
