import numpy as np
import pytest
from scipy.linalg import cholesky, toeplitz

from msdlab.curves import MsdCurve
from msdlab.errors import DegenerateInput, ValidationError
from msdlab.estimator import (
    SubsampleSpec,
    init_params,
    neg_log_marginal,
    observed_fisher,
    optimize,
    rmse_log10,
    select_rings,
    subsample_lags,
    subsample_q,
)
from msdlab.simulate import BrownianModel, RenderSpec, simulate_stack, true_msd
from msdlab.spectral import RingSpectrum, fft_stack, structure_function
from msdlab.stackio import ImageStack, normalize


def latent_spectrum(theta, q, counts, a, b, n, rng, dt=1.0):
    """Draw ring series exactly from the Gaussian latent model (test oracle)."""
    series = []
    for qj, cj, aj in zip(q, counts, a):
        gamma = np.empty(n)
        gamma[0] = (aj + b) / 4.0
        gamma[1:] = aj / 4.0 * np.exp(-qj**2 * theta / 4.0)
        low = cholesky(toeplitz(gamma), lower=True)
        zr = low @ rng.standard_normal((n, cj))
        zi = low @ rng.standard_normal((n, cj))
        series.append((zr + 1j * zi).T)
    return RingSpectrum.from_series(q=q, series=series, dt_min=dt)


class TestSelectRings:
    def test_concentrated_amplitude(self):
        amps = np.array([0.999, 0.001] + [0.0] * 8) * 1e-4  # tail below eps2
        j0, rings = select_rings(amps, eps1=0.001, eps2=0.001)
        assert j0 == 1
        assert rings.tolist() == [1]

    def test_tail_rule_fires_at_last_ring(self):
        amps = np.array([10.0, 5.0, 1e-6, 1e-6, 0.002])
        j0, rings = select_rings(amps, eps1=0.001, eps2=0.001)
        assert j0 == 5

    def test_uniform_amplitudes(self):
        j = 1000
        amps = np.full(j, 5e-4)  # below eps2 so the tail rule stays quiet
        j0, _ = select_rings(amps, eps1=0.001, eps2=0.001)
        assert j0 == int(np.ceil((1 - 0.001) * j))


class TestSubsampleQ:
    def test_hand_schedule_j0_100(self):
        idx = subsample_q(100, 20, 0.95)
        delta = np.log(95.0) / 19
        want = np.unique(np.clip(np.ceil(np.exp(delta * np.arange(20))), 1, 100))
        np.testing.assert_array_equal(idx, want.astype(int))
        assert idx[0] == 1 and idx[-1] == 95

    def test_single_ring(self):
        np.testing.assert_array_equal(subsample_q(1, 20, 0.95), [1])

    def test_dedup_bound(self):
        for j0 in (1, 2, 5, 17, 100, 999):
            idx = subsample_q(j0, 20, 0.95)
            assert len(idx) <= min(20, j0)
            assert idx.min() >= 1 and idx.max() <= j0
            assert len(np.unique(idx)) == len(idx)


class TestSubsampleLags:
    def test_reference_grid(self):
        np.testing.assert_array_equal(subsample_lags(500, 6), [1, 4, 13, 42, 145, 499])

    def test_minimal_stack(self):
        np.testing.assert_array_equal(subsample_lags(3, 6), [1, 2])

    def test_endpoints_always_present(self):
        for n in (3, 10, 100, 237, 500, 2000):
            idx = subsample_lags(n, 6)
            assert idx[0] == 1
            assert idx[-1] == n - 1


class TestInitParams:
    def test_power_law_trend_hand_case(self, rng):
        # direct inversion giving theta(1) = 0.1, theta(2) = 0.2 -> slope 1, damped 0.9
        n = 50
        theta = 0.1 * np.arange(1, n)
        q = 2 * np.pi * np.arange(1, 7) / 32.0
        a = 50.0 * np.exp(-0.5 * np.arange(6))
        a[-1] = 0.0
        # exact noiseless structure function so the DI medians hit theta exactly
        d = a[:, None] * (1 - np.exp(-np.outer(q**2, theta[:2]) / 4.0))
        from msdlab.spectral import StructureFunction

        sf2 = StructureFunction(
            rings=np.arange(1, 7), q=q, lag_idx=np.array([1, 2]),
            lag_time=np.array([1.0, 2.0]), d=d,
        )
        spec = RingSpectrum(q=q, counts=np.full(6, 40), n=n, dt_min=1.0,
                            mean_power=a / 2.0)
        sub = SubsampleSpec()
        lag_sub = subsample_lags(n, 6)
        psi0 = init_params(sf2, sub, spec, np.arange(1, 7), lag_sub)
        want = np.log(0.1) + 0.9 * 1.0 * (np.log(lag_sub) - np.log(1.0))
        np.testing.assert_allclose(psi0[:-1], want, rtol=1e-10)

    def test_flat_di_gives_zero_slope(self, rng):
        n = 20
        q = np.array([0.3, 0.6, 0.9])
        from msdlab.spectral import StructureFunction

        a = np.array([4.0, 2.0, 1.0])
        f = np.exp(-np.outer(q**2, [1.0, 1.0]) / 4.0)  # same theta both lags
        sf2 = StructureFunction(
            rings=np.array([1, 2, 3]), q=q, lag_idx=np.array([1, 2]),
            lag_time=np.array([1.0, 2.0]), d=a[:, None] * (1 - f),
        )
        spec = RingSpectrum(q=q, counts=np.full(3, 8), n=n, dt_min=1.0,
                            mean_power=a / 2.0)
        psi0 = init_params(sf2, SubsampleSpec(), spec, np.array([1, 2, 3]),
                           subsample_lags(n, 6))
        np.testing.assert_allclose(psi0[:-1], psi0[0], rtol=1e-9)

    def test_noise_floor_start_tracks_injected_b(self, rng):
        n, b = 64, 0.5
        q = 2 * np.pi * np.arange(1, 9) / 32.0
        counts = np.full(8, 60)
        a = np.concatenate([[20.0], np.zeros(7)])
        theta = 0.2 * np.arange(1, n)
        spec = latent_spectrum(theta, q, counts, a, b, n, rng)
        sf2 = structure_function(spec, lags=[1, 2])
        psi0 = init_params(sf2, SubsampleSpec(), spec, np.array([1]), subsample_lags(n, 6))
        assert abs(np.exp(psi0[-1]) - b / 2) < 0.1 * (b / 2)


class TestNegLogMarginal:
    def setup_method(self):
        rng = np.random.default_rng(3)
        self.n = 48
        self.theta = 0.4 * np.arange(1, self.n)
        self.q = 2 * np.pi * np.arange(1, 7) / 48.0
        self.a = 60.0 * np.exp(-0.4 * np.arange(6))
        self.spec = latent_spectrum(
            self.theta, self.q, np.full(6, 20), self.a, 1.0, self.n, rng
        )
        self.lag_sub = subsample_lags(self.n, 6)
        self.psi = np.concatenate([np.log(0.4 * self.lag_sub), [np.log(0.5)]])
        self.grid = np.arange(1, self.n)

    def test_ring_permutation_exact_invariance(self):
        rings = np.array([1, 3, 5])
        a = neg_log_marginal(self.psi, rings, self.grid, self.spec)
        b = neg_log_marginal(self.psi, rings[::-1], self.grid, self.spec)
        assert a == b

    def test_worker_count_exact_invariance(self):
        rings = np.array([1, 2, 3, 4])
        a = neg_log_marginal(self.psi, rings, self.grid, self.spec, workers=1)
        b = neg_log_marginal(self.psi, rings, self.grid, self.spec, workers=4)
        assert a == b

    def test_true_parameters_beat_scaled_theta(self):
        rings = np.arange(1, 7)
        at_truth = neg_log_marginal(self.psi, rings, self.grid, self.spec)
        up = self.psi.copy()
        up[:-1] += np.log(2.0)
        down = self.psi.copy()
        down[:-1] -= np.log(2.0)
        assert at_truth <= neg_log_marginal(up, rings, self.grid, self.spec)
        assert at_truth <= neg_log_marginal(down, rings, self.grid, self.spec)

    def test_noise_inflation_decreases_likelihood(self):
        rings = np.arange(1, 7)
        at_truth = neg_log_marginal(self.psi, rings, self.grid, self.spec)
        noisy = self.psi.copy()
        noisy[-1] += np.log(100.0)
        assert neg_log_marginal(noisy, rings, self.grid, self.spec) > at_truth

    def test_nonfinite_psi_penalized(self):
        bad = self.psi.copy()
        bad[0] = np.inf
        assert neg_log_marginal(bad, [1], self.grid, self.spec) == 1e12

    def test_indefinite_covariance_penalized(self):
        # oscillating log MSD + near-zero noise: correlation is not PD and the
        # evaluation must retreat with the finite penalty instead of raising
        osc = self.psi.copy()
        osc[:-1] = np.where(np.arange(osc.size - 1) % 2 == 0, 3.0, -25.0)
        osc[-1] = -40.0
        assert neg_log_marginal(osc, [1, 2], self.grid, self.spec) == 1e12

    def test_uneven_grid_rejected(self):
        with pytest.raises(ValidationError):
            neg_log_marginal(self.psi, [1], np.array([1, 2, 4]), self.spec)

    def test_decimated_grid_runs(self):
        grid = 2 * np.arange(1, (self.n - 1) // 2 + 1)
        val = neg_log_marginal(self.psi, [1, 2], grid, self.spec)
        assert np.isfinite(val)

    def test_rendered_video_true_parameters_near_optimal(self):
        # image-level probe: with theta and the noise level mapped into
        # normalized intensity units, the truth beats 2x and 0.5x theta
        sigma2, noise_b = 0.5, 0.02
        model = BrownianModel(sigma2=sigma2)
        stack, _ = simulate_stack(
            model, m=25, n1=64, n2=64, n=64, dt_min=1.0,
            spec=RenderSpec(noise_b=noise_b, rng_seed=9), seed=9,
        )
        scale = stack.frames.max() - stack.frames.min()
        spec = fft_stack(normalize(stack))
        lag_sub = subsample_lags(64, 6)
        psi = np.concatenate(
            [np.log(sigma2 * lag_sub), [np.log(noise_b / scale**2 / 2)]]
        )
        rings = np.arange(1, 9)
        grid = np.arange(1, 64)
        at_truth = neg_log_marginal(psi, rings, grid, spec)
        for factor in (2.0, 0.5):
            shifted = psi.copy()
            shifted[:-1] += np.log(factor)
            assert at_truth <= neg_log_marginal(shifted, rings, grid, spec)


class TestOptimizeSmall:
    def test_latent_model_recovery_small(self, rng):
        n = 96
        theta = 0.5 * np.arange(1, n)
        q = 2 * np.pi * np.arange(1, 9) / 64.0
        a = 80.0 * np.exp(-0.4 * np.arange(8))
        spec = latent_spectrum(theta, q, np.full(8, 30), a, 1.0, n, rng)
        est = optimize(spec)
        rmse, _ = rmse_log10(est.msd, MsdCurve(np.arange(1.0, n), theta))
        assert rmse < 0.08
        assert est.msd.msd.min() > 0

    def test_stage_two_improves_full_likelihood(self, rng):
        n = 120  # coarse factor 1 -> but force stage 1 via explicit spec
        theta = 0.3 * np.arange(1, n) ** 0.8
        q = 2 * np.pi * np.arange(1, 7) / 64.0
        a = 60.0 * np.exp(-0.4 * np.arange(6))
        spec = latent_spectrum(theta, q, np.full(6, 25), a, 0.8, n, rng)
        est = optimize(spec, sub=SubsampleSpec(coarse_factor=3))
        d = est.diagnostics
        assert [s["name"] for s in d["stages"]] == ["coarse", "full"]
        assert d["nll_full_at_optimum"] <= d["nll_full_at_stage_start"] + 1e-6

    def test_pure_noise_stack_refused(self, rng):
        frames = rng.normal(0.5, 0.05, size=(32, 32, 32))
        stack = ImageStack(frames, dt_min=1.0, px_size=1.0)
        with pytest.raises(DegenerateInput, match="no_signal"):
            optimize(stack)

    def test_constant_stack_refused(self):
        with pytest.warns(UserWarning):
            stack = normalize(ImageStack(np.full((8, 16, 16), 3.0), 1.0, 1.0))
        with pytest.raises(DegenerateInput):
            optimize(stack)

    def test_image_pipeline_round_trip(self):
        model = BrownianModel(sigma2=0.05)
        stack, _ = simulate_stack(
            model, m=30, n1=64, n2=64, n=64, dt_min=1.0,
            spec=RenderSpec(noise_b=0.02, rng_seed=5), seed=5,
        )
        est = optimize(stack, threads=2)
        truth = true_msd(model, est.msd.lag_time)
        rmse, sd = rmse_log10(est.msd, truth)
        assert rmse < 0.15
        assert rmse < sd

    def test_thread_count_does_not_change_result(self, rng):
        n = 64
        theta = 0.5 * np.arange(1, n)
        q = 2 * np.pi * np.arange(1, 5) / 48.0
        a = 40.0 * np.exp(-0.5 * np.arange(4))
        spec = latent_spectrum(theta, q, np.full(4, 16), a, 1.0, n, rng)
        est1 = optimize(spec, threads=1)
        est4 = optimize(spec, threads=4)
        np.testing.assert_array_equal(est1.msd.msd, est4.msd.msd)


class TestUncertaintySmall:
    def make_estimate(self, rng):
        n = 80
        theta = 0.5 * np.arange(1, n)
        q = 2 * np.pi * np.arange(1, 7) / 48.0
        a = 60.0 * np.exp(-0.5 * np.arange(6))
        spec = latent_spectrum(theta, q, np.full(6, 25), a, 1.0, n, rng)
        est = optimize(spec, uq=True, m_particles=60, threads=2)
        return est, theta

    def test_bounds_bracket_and_fisher_psd(self, rng):
        est, theta = self.make_estimate(rng)
        assert est.msd.has_bounds
        assert np.all(est.msd.lower <= est.msd.msd)
        assert np.all(est.msd.msd <= est.msd.upper)
        fisher = est.diagnostics["fisher"]
        np.testing.assert_allclose(fisher, fisher.T, atol=1e-9)
        eig = np.linalg.eigvalsh(fisher)
        assert eig.min() > -1e-8 * max(eig.max(), 1.0)

    def test_missing_sample_size_warns_and_defaults(self, rng):
        n = 64
        theta = 0.5 * np.arange(1, n)
        q = 2 * np.pi * np.arange(1, 5) / 48.0
        a = 40.0 * np.exp(-0.5 * np.arange(4))
        spec = latent_spectrum(theta, q, np.full(4, 16), a, 1.0, n, rng)
        with pytest.warns(UserWarning, match="effective sample size"):
            est = optimize(spec, uq=True)
        assert est.diagnostics["m_particles"] == 100


class TestFisherSanity:
    def test_noise_only_trace_identity(self):
        # Sigma = (B/4) I and dSigma = (B/4) I give per-pixel information n
        from msdlab.toeplitz import trace_pair

        n = 24
        b = 0.6
        gamma = np.zeros(n)
        gamma[0] = b / 4
        assert trace_pair(gamma, gamma, gamma) == pytest.approx(float(n), rel=1e-12)


class TestRmseLog10:
    def test_zero_for_identical(self):
        lag = np.arange(1.0, 10)
        c = MsdCurve(lag, 0.3 * lag)
        assert rmse_log10(c, c)[0] == 0.0

    def test_factor_ten_offset_is_one(self):
        lag = np.arange(1.0, 30)
        a = MsdCurve(lag, 0.3 * lag)
        b = MsdCurve(lag, 3.0 * lag)
        rmse, _ = rmse_log10(b, a)
        assert rmse == pytest.approx(1.0, abs=1e-12)

    def test_sd_uses_reference_curve(self):
        lag = np.arange(1.0, 6)
        truth = MsdCurve(lag, 10.0 ** np.array([1.0, 2.0, 3.0, 4.0, 5.0]))
        _, sd = rmse_log10(MsdCurve(lag, truth.msd), truth)
        assert sd == pytest.approx(np.std([1, 2, 3, 4, 5], ddof=1), rel=1e-12)

    def test_mismatched_grids_rejected(self):
        a = MsdCurve(np.arange(1.0, 10), np.ones(9))
        b = MsdCurve(np.arange(1.0, 9), np.ones(8))
        with pytest.raises(ValidationError):
            rmse_log10(a, b)
