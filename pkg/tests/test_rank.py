import numpy as np
import pytest

from cmmi.numerics import sample_complex_gaussian
from cmmi.rank import (
    AICRankDetector,
    aic_curve,
    aic_penalty,
    aic_score,
    detect_rank,
    floor_eigenvalues,
    tail_noise_estimate,
)


def brute_force_aic(w, k, N, K):
    """Literal product form of the criterion."""
    n = len(w)
    s2 = np.mean(w[k:])
    return 2 * N * np.log(np.prod(w[:k]) * s2 ** (n - k)) + 2 * K


class TestTailNoise:
    def test_examples(self):
        assert tail_noise_estimate([5, 1, 1, 1], 1) == 1
        assert tail_noise_estimate([4, 3, 2, 1], 2) == 1.5

    def test_population_spectrum(self):
        w = np.array([3.5, 2.5, 1.0, 0.5, 0.5, 0.5])
        assert tail_noise_estimate(w, 3) == pytest.approx(0.5)

    def test_range(self):
        with pytest.raises(ValueError):
            tail_noise_estimate([1, 1, 1], 3)


class TestAicScore:
    @pytest.mark.parametrize("penalty", ["printed", "full"])
    def test_flat_spectrum(self, penalty):
        w = np.full(8, 0.7)
        scores = aic_curve(w, 50, penalty=penalty)
        np.testing.assert_allclose(scores - 2 * 50 * 8 * np.log(0.7), [aic_penalty(k, 8, penalty) for k in range(1, 7)])
        assert np.all(np.diff(scores) > 0)

    def test_two_point_spectrum(self):
        w = np.array([10, 10, 10, 1, 1, 1, 1, 1.0])
        s3 = aic_score(w, 3, 100, penalty="printed")
        s4 = aic_score(w, 4, 100, penalty="printed")
        assert s3.score == pytest.approx(brute_force_aic(w, 3, 100, 4))
        assert s4.score == pytest.approx(brute_force_aic(w, 4, 100, 5))
        assert s3.score < s4.score
        assert s3.sigma2_hat == pytest.approx(1.0)

    def test_consecutive_difference(self, rng):
        w = np.sort(rng.uniform(0.1, 5, 8))[::-1]
        N = 37
        for k in range(1, 6):
            a = aic_score(w, k, N, penalty="printed").score
            b = aic_score(w, k + 1, N, penalty="printed").score
            s_k, s_k1 = w[k:].mean(), w[k + 1:].mean()
            expected = -2 * N * ((8 - k) * np.log(s_k) - np.log(w[k]) - (8 - k - 1) * np.log(s_k1)) + 2
            assert b - a == pytest.approx(expected, rel=1e-10, abs=1e-9)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            aic_score([1.0, 0.0, 0.0], 1, 10)

    def test_floor(self):
        np.testing.assert_allclose(floor_eigenvalues([2.0, 0.0, -1.0]), [2.0, 2e-12, 2e-12])

    def test_tail_permutation_invariance(self, rng):
        w = np.sort(rng.uniform(0.1, 5, 8))[::-1]
        k = 3
        shuffled = np.concatenate([w[:k], rng.permutation(w[k:])])
        assert aic_score(w, k, 20).score == pytest.approx(aic_score(shuffled, k, 20).score)

    def test_scale_invariance(self, rng):
        w = np.sort(rng.uniform(0.1, 5, 8))[::-1]
        a, b = aic_curve(w, 30), aic_curve(3.0 * w, 30)
        np.testing.assert_allclose(b - a, 2 * 30 * 8 * np.log(3.0))
        assert np.argmin(a) == np.argmin(b)

    def test_unknown_penalty(self):
        with pytest.raises(ValueError):
            aic_penalty(1, 4, "bic")


class TestDetectRank:
    def _mix(self, rng, L, noise, r=3, n=8):
        A = rng.normal(size=(n, r)) + 1j * rng.normal(size=(n, r))
        Y = sample_complex_gaussian((L, r), 1.0, rng) @ A.T
        return Y + sample_complex_gaussian((L, n), noise, rng) if noise else Y

    @pytest.mark.parametrize("penalty", ["printed", "full"])
    def test_noiseless(self, rng, penalty):
        assert detect_rank(self._mix(rng, 20, 0.0), penalty=penalty) == 3

    def test_pure_noise_large_L(self, rng):
        Y = sample_complex_gaussian((5000, 8), 1.0, rng)
        assert detect_rank(Y) == 1

    def test_range_small_L(self, rng):
        for _ in range(20):
            r = detect_rank(self._mix(rng, 8, 1.0))
            assert 1 <= r <= 6

    def test_too_few_samples(self, rng):
        with pytest.raises(ValueError):
            detect_rank(self._mix(rng, 1, 1.0))

    def test_batched(self, rng):
        Y = np.stack([self._mix(rng, 100, 0.1) for _ in range(4)])
        np.testing.assert_array_equal(detect_rank(Y), [detect_rank(y) for y in Y])

    def test_estimator(self, rng):
        det = AICRankDetector().fit(self._mix(rng, 200, 0.1))
        assert det.rank_ == 3 and det.scores_.shape == (6,)
        assert AICRankDetector(k_max=2).fit(self._mix(rng, 200, 0.1)).rank_ <= 2
        with pytest.raises(ValueError):
            AICRankDetector(k_max=9).fit(self._mix(rng, 200, 0.1))
