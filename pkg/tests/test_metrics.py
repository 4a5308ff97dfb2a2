import numpy as np
import pytest

from cmmi.estimators import CovarianceEstimate
from cmmi.metrics import (
    Beamformer,
    discrete_input_mi,
    flop_counts,
    mallory_mi,
    nmse,
    secrecy_rate,
    sjnr,
    sm_points,
    zfc_rbf,
)
from cmmi.numerics import hermitian_evd
from cmmi.system import SystemConfig, draw_channels, population_interference_cov


@pytest.fixture
def scenario(rng):
    cfg = SystemConfig(jam_power=2.0)
    ch = draw_channels(cfg, rng)
    return cfg, ch, population_interference_cov(cfg, ch)


def ideal(R, r=3):
    return CovarianceEstimate(R, "ideal", r, 0.0)


class TestBeamformer:
    def test_exact_nulling(self, scenario):
        cfg, ch, R = scenario
        u = zfc_rbf(ideal(R), ch.HS[:, 0])
        assert not u.degraded
        lam = hermitian_evd(R).eigenvalues[0]
        assert np.real(np.vdot(u.u, R @ u.u)) / lam <= 1e-10

    def test_matched_without_interference(self, rng):
        h = rng.normal(size=4) + 1j * rng.normal(size=4)
        cfg = SystemConfig()
        est = CovarianceEstimate(np.zeros((4, 4)), "ideal", 0, 0.0, basis=np.zeros((4, 0)))
        u = zfc_rbf(est, h)
        value = sjnr(u, h, cfg, np.zeros((4, 4)))
        assert value == pytest.approx(cfg.beta * cfg.power * np.linalg.norm(h) ** 2 / cfg.noise_bob)

    def test_fallback_when_subspace_full(self, rng):
        R = np.diag([3.0, 2.0, 1.0]).astype(complex)
        est = CovarianceEstimate(R, "SCM", 3, 0.0, basis=np.eye(3))
        u = zfc_rbf(est, np.ones(3))
        assert u.degraded
        np.testing.assert_allclose(np.abs(u.u), [0, 0, 1])

    def test_unit_norm_check(self):
        with pytest.raises(ValueError):
            Beamformer(np.array([1.0, 1.0]))

    def test_nulling_beats_matched_filter(self, scenario):
        cfg, ch, R = scenario
        h = ch.HS[:, 0]
        matched = h / np.linalg.norm(h)
        assert sjnr(zfc_rbf(ideal(R), h), h, cfg, R) > sjnr(matched, h, cfg, R)


class TestNmse:
    def test_zero_for_exact(self, rng):
        R = np.eye(3) * 2
        assert nmse(R, R) == 0

    def test_value(self):
        assert nmse(2 * np.eye(2), np.eye(2)) == pytest.approx(1.0)

    def test_zero_truth(self):
        with pytest.raises(ValueError):
            nmse(np.eye(2), np.zeros((2, 2)))


class TestMutualInformation:
    def test_well_separated_reaches_log2K(self, rng):
        pts = 100.0 * np.array([[1], [-1], [1j], [-1j]])
        assert discrete_input_mi(pts, rng) == pytest.approx(2.0, abs=1e-6)

    def test_identical_points_zero(self, rng):
        assert discrete_input_mi(np.zeros((4, 2)), rng) == pytest.approx(0.0, abs=1e-12)

    def test_bpsk_reference(self, rng):
        # BPSK +-1 in CN(0, 1): the real part sees N(0, 1/2) and the LLR is
        # 4 y; quadrature of 1 - E log2(1 + exp(-4 y)) as reference
        from scipy.integrate import quad

        pdf = lambda y: np.exp(-((y - 1.0) ** 2)) / np.sqrt(np.pi)
        ref = 1 - quad(lambda y: pdf(y) * np.logaddexp(0, -4 * y) / np.log(2), -20, 20)[0]
        mc = discrete_input_mi(np.array([[1.0], [-1.0]]), rng, n_draws=200000)
        assert mc == pytest.approx(ref, abs=0.01)

    def test_sm_points_count(self, scenario):
        cfg, ch, _ = scenario
        assert sm_points(cfg, ch.HS).shape == (64, 8)

    def test_secrecy_nonnegative(self, scenario, rng):
        cfg, ch, R = scenario
        u = zfc_rbf(ideal(R), ch.HS[:, 0])
        assert secrecy_rate(cfg, ch, u, R, rng, n_draws=500) >= 0
        assert secrecy_rate(cfg, ch, u, R, rng, n_draws=500, i_mallory=100.0) == 0

    def test_mallory_bounded(self, scenario, rng):
        cfg, ch, _ = scenario
        assert 0 <= mallory_mi(cfg, ch, rng, 500) <= 6 + 1e-9


class TestFlops:
    def test_scm_example(self):
        assert flop_counts(8, 8, 3, 8).scm == 3072

    def test_printed_polynomials(self):
        K, Nr, r, Nb = 8, 8, 3, 8
        f = flop_counts(K, Nr, r, Nb)
        assert f.pca_evd == 126 * Nr**3 + (8 * K + 6 * r - 2) * Nr**2
        assert 2 * f.jd == 2 * (158 + 8 * K - 8 * r) * Nr**3 + (Nb - 1) ** 2 * (1008 + 24 * (K - r)) + 2 * (8 * r + 4 * K - 8) * Nr**2
        assert f.scm < f.pca_evd < f.jd

    def test_integers(self):
        assert all(isinstance(v, int) for v in flop_counts(7, 6, 2, 5).as_dict().values())

    def test_bad_args(self):
        with pytest.raises(ValueError):
            flop_counts(8, 8, 8, 8)
        with pytest.raises(ValueError):
            flop_counts(0, 8, 3, 8)
