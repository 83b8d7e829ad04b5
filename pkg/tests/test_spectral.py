import numpy as np
import pytest

from msdlab.errors import DegenerateInput, UnsupportedGeometry, ValidationError
from msdlab.spectral import (
    RingSpectrum,
    amplitude_estimate,
    amplitude_floor,
    build_rings,
    ddm_uq_baseline,
    fft_stack,
    structure_function,
)
from msdlab.stackio import ImageStack, normalize


def stack_from(frames, dt=1.0, px=1.0):
    return ImageStack(np.asarray(frames, dtype=float), dt_min=dt, px_size=px)


class TestBuildRings:
    def test_four_by_four(self):
        geom = build_rings(4, 4, 1.0)
        assert geom.j_max == 1
        assert geom.q[0] == pytest.approx(2 * np.pi / 4, rel=1e-12)

    def test_experimental_calibration(self):
        geom = build_rings(512, 512, 0.29)
        assert geom.q[0] == pytest.approx(2 * np.pi / (0.29 * 512), rel=1e-6)
        assert geom.q[0] == pytest.approx(0.04232, rel=1e-3)

    def test_zero_frequency_pixel_unassigned(self):
        geom = build_rings(16, 16, 1.0)
        assert geom.labels[0, 0] == 0

    def test_rings_disjoint_and_counted(self):
        geom = build_rings(32, 32, 1.0)
        assert geom.j_max == 15
        assert np.all(geom.counts >= 1)
        assert np.all(np.diff(geom.q) > 0)
        # labels of 0 (excluded) plus per-ring counts cover the plane
        assert geom.counts.sum() + np.sum(geom.labels == 0) == 32 * 32

    def test_rectangular_rejected(self):
        with pytest.raises(UnsupportedGeometry):
            build_rings(32, 16, 1.0)


class TestFftStack:
    def test_constant_frames_all_ring_energy_zero(self):
        frames = np.full((3, 8, 8), 0.25)
        spec = fft_stack(stack_from(frames))
        for j in range(1, spec.j_max + 1):
            assert np.all(spec.ring_series(j) == 0)

    def test_degenerate_stack_refused(self):
        with pytest.warns(UserWarning):
            degen = normalize(stack_from(np.full((3, 8, 8), 3.0)))
        with pytest.raises(DegenerateInput):
            fft_stack(degen)

    def test_impulse_flat_spectrum(self):
        n1 = 8
        frames = np.zeros((3, n1, n1))
        frames[:, 2, 5] = 1.0
        spec = fft_stack(stack_from(frames))
        for j in range(1, spec.j_max + 1):
            power = np.abs(spec.ring_series(j)) ** 2
            np.testing.assert_allclose(power, 1.0 / (n1 * n1), rtol=1e-12)

    def test_parseval_per_frame(self, rng):
        frames = rng.random((4, 16, 16))
        stack = stack_from(frames)
        n_px = 16 * 16
        cube = np.fft.fft2(frames, axes=(1, 2)) / np.sqrt(n_px)
        for t in range(4):
            lhs = np.sum(np.abs(cube[t]) ** 2)
            rhs = np.sum(frames[t] ** 2)
            assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_mean_power_matches_series(self, rng):
        frames = rng.random((5, 12, 12))
        spec = fft_stack(stack_from(frames))
        for j in (1, 3, spec.j_max):
            series = spec.ring_series(j)
            assert spec.mean_power[j - 1] == pytest.approx(
                float(np.mean(np.abs(series) ** 2)), rel=1e-12
            )


class TestStructureFunction:
    def test_identical_frames_zero(self, rng):
        frame = rng.random((10, 10))
        frames = np.repeat(frame[None], 5, axis=0)
        spec = fft_stack(stack_from(frames))
        sf = structure_function(spec, lags=[1, 2, 4])
        np.testing.assert_allclose(sf.d, 0.0, atol=1e-22)

    def test_single_pair_hand_value(self):
        series = [np.array([[1.0 + 2.0j, 4.0 + 6.0j]])]  # delta = 3 + 4i
        spec = RingSpectrum.from_series(q=np.array([1.0]), series=series, dt_min=1.0)
        sf = structure_function(spec, lags=[1])
        assert sf.d[0, 0] == pytest.approx(25.0, rel=1e-14)

    def test_streaming_matches_brute_force(self, rng):
        frames = rng.random((20, 12, 12))
        spec = fft_stack(stack_from(frames))
        all_lags = np.arange(1, 20)
        sf = structure_function(spec, lags=all_lags)  # fft path (> 16 lags)
        for i, j in enumerate(sf.rings):
            series = spec.ring_series(int(j))
            p, n = series.shape
            for k, lag in enumerate(all_lags):
                acc = 0.0
                for t in range(n - lag):
                    acc += np.sum(np.abs(series[:, t + lag] - series[:, t]) ** 2)
                want = acc / (p * (n - lag))
                assert sf.d[i, k] == pytest.approx(want, rel=1e-10)

    def test_direct_and_fft_paths_agree(self, rng):
        frames = rng.random((24, 10, 10))
        spec = fft_stack(stack_from(frames))
        lags = np.arange(1, 24)
        fft_path = structure_function(spec, lags=lags)
        direct_rows = []
        for j in fft_path.rings:
            sf_j = structure_function(spec, lags=[1, 7, 23], rings=[j])
            direct_rows.append(sf_j.d[0])
        for i, row in enumerate(direct_rows):
            for want, lag in zip(row, (1, 7, 23)):
                k = np.flatnonzero(lags == lag)[0]
                assert fft_path.d[i, k] == pytest.approx(want, rel=1e-10)

    def test_pure_noise_flat_at_b(self, rng):
        b = 0.08
        frames = rng.normal(0.0, np.sqrt(b / 2), size=(64, 32, 32))
        spec = fft_stack(stack_from(frames))
        sf = structure_function(spec, lags=[1, 5, 20], rings=[4, 9, 14])
        np.testing.assert_allclose(sf.d, b, rtol=0.12)

    def test_bad_lags_rejected(self, rng):
        spec = fft_stack(stack_from(rng.random((4, 8, 8))))
        with pytest.raises(ValidationError):
            structure_function(spec, lags=[0])
        with pytest.raises(ValidationError):
            structure_function(spec, lags=[4])

    def test_diagnostic_export(self, rng, tmp_path):
        from msdlab.spectral import export_structure_function

        spec = fft_stack(stack_from(rng.random((6, 8, 8))))
        sf = structure_function(spec, lags=[1, 3])
        path = tmp_path / "structure_function.csv"
        export_structure_function(sf, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "q,lag_time,d"
        assert len(lines) == 1 + sf.rings.size * 2
        q, lag, d = map(float, lines[1].split(","))
        assert q == pytest.approx(sf.q[0]) and d == pytest.approx(sf.d[0, 0])


class TestAmplitude:
    def test_hand_value(self):
        series = [np.array([[np.sqrt(10.0) + 0.0j]])]  # one pixel, one frame
        spec = RingSpectrum.from_series(q=np.array([1.0]), series=series, dt_min=1.0)
        amp = amplitude_estimate(spec, b=2.0)
        assert amp[0] == pytest.approx(18.0, rel=1e-12)

    def test_zero_series_clamps_to_floor(self):
        series = [np.zeros((2, 3), dtype=complex)]
        spec = RingSpectrum.from_series(q=np.array([1.0]), series=series, dt_min=1.0)
        amp = amplitude_estimate(spec, b=0.0)
        assert amp[0] == amplitude_floor(spec) == 0.0

    def test_monte_carlo_unbiased(self, rng):
        a_true, b_true, n = 3.0, 0.8, 16
        reps = 1000
        sd = np.sqrt((a_true + b_true) / 4)
        estimates = np.empty(reps)
        for r in range(reps):
            z = rng.normal(scale=sd, size=(4, n)) + 1j * rng.normal(scale=sd, size=(4, n))
            spec = RingSpectrum.from_series(q=np.array([1.0]), series=[z], dt_min=1.0)
            estimates[r] = amplitude_estimate(spec, b=b_true)[0]
        se = estimates.std(ddof=1) / np.sqrt(reps)
        assert abs(estimates.mean() - a_true) < 3 * se

    def test_negative_b_rejected(self):
        series = [np.zeros((1, 3), dtype=complex)]
        spec = RingSpectrum.from_series(q=np.array([1.0]), series=series, dt_min=1.0)
        with pytest.raises(ValidationError):
            amplitude_estimate(spec, b=-1.0)


def synthetic_inversion_setup(rng, j_rings=8, n=40, b=0.0):
    """Noiseless model D with decaying amplitudes and zero outermost amplitude."""
    from msdlab.spectral import StructureFunction

    q = 2 * np.pi * np.arange(1, j_rings + 1) / 32.0
    amp = 5.0 * np.exp(-0.6 * np.arange(j_rings))
    amp[-1] = 0.0
    theta = np.cumsum(rng.uniform(0.02, 0.25, size=n - 1))  # increasing, q^2 theta/4 <= ~5
    lag_idx = np.arange(1, n)
    f = np.exp(-np.outer(q**2, theta) / 4.0)
    d = amp[:, None] * (1.0 - f) + b
    sf = StructureFunction(
        rings=np.arange(1, j_rings + 1), q=q, lag_idx=lag_idx,
        lag_time=lag_idx.astype(float), d=d,
    )
    spec = RingSpectrum(
        q=q, counts=np.full(j_rings, 8), n=n, dt_min=1.0,
        mean_power=(amp + b) / 2.0,
    )
    return sf, spec, theta, amp


class TestDirectInversion:
    def test_noiseless_round_trip(self, rng):
        sf, spec, theta, amp = synthetic_inversion_setup(rng)
        res = ddm_uq_baseline(sf, spec, selected_rings=sf.rings)
        assert res.b == pytest.approx(0.0, abs=1e-15)
        assert not res.valid[-1].any()  # zero-amplitude outer ring carries no signal
        for i in range(len(sf.rings) - 1):
            recovered = res.theta[i][res.valid[i]]
            np.testing.assert_allclose(recovered, theta[res.valid[i]], rtol=1e-10)
        np.testing.assert_allclose(res.msd.msd, theta, rtol=1e-10)

    def test_hand_value_single_entry(self, rng):
        # D = 2 (1 - e^{-1}) at q = 1, theta = 4 inverts back to 4
        from msdlab.spectral import StructureFunction

        q = np.array([1.0, 2.0])
        amp = np.array([2.0, 0.0])
        d = np.array([[2.0 * (1 - np.exp(-1.0))], [0.0]])
        sf = StructureFunction(
            rings=np.array([1, 2]), q=q, lag_idx=np.array([1]),
            lag_time=np.array([1.0]), d=d,
        )
        spec = RingSpectrum(q=q, counts=np.array([4, 4]), n=4, dt_min=1.0,
                            mean_power=amp / 2.0)
        res = ddm_uq_baseline(sf, spec, selected_rings=[1, 2])
        assert res.theta[0, 0] == pytest.approx(4.0, rel=1e-12)
        assert res.msd.lag_time.size == 0  # only one valid ring: below reporting minimum

    def test_saturated_entry_invalid(self, rng):
        sf, spec, theta, amp = synthetic_inversion_setup(rng)
        sf.d[0, -1] = amp[0] + 0.0  # fully decorrelated: log argument undefined
        res = ddm_uq_baseline(sf, spec, selected_rings=sf.rings)
        assert not res.valid[0, -1]

    def test_zero_lag_limit(self, rng):
        sf, spec, theta, amp = synthetic_inversion_setup(rng, b=0.3)
        sf.d[:, 0] = 0.3  # D -> B as theta -> 0
        res = ddm_uq_baseline(sf, spec, selected_rings=sf.rings)
        valid0 = res.valid[:, 0]
        np.testing.assert_allclose(res.theta[valid0, 0], 0.0, atol=1e-12)

    def test_no_valid_rings_gives_empty_curve(self):
        from msdlab.spectral import StructureFunction

        q = np.array([1.0, 2.0, 3.0])
        d = np.zeros((3, 2))
        sf = StructureFunction(
            rings=np.array([1, 2, 3]), q=q, lag_idx=np.array([1, 2]),
            lag_time=np.array([1.0, 2.0]), d=d,
        )
        spec = RingSpectrum(q=q, counts=np.full(3, 4), n=3, dt_min=1.0,
                            mean_power=np.zeros(3))
        res = ddm_uq_baseline(sf, spec, selected_rings=[1, 2, 3])
        assert len(res.msd) == 0
        assert not res.valid.any()
