"""Tracking-free MSD estimation by maximizing the Toeplitz Gaussian marginal
likelihood of ring-binned Fourier time series.

Pipeline: select rings by cumulative amplitude, subsample rings and lag
times log-uniformly, initialize from the direct-inversion baseline at the
first two lags, then run a two-stage (coarse lag grid, full lag grid)
bounded quasi-newton maximization.  At every likelihood evaluation the
log-MSD at the subsampled lags is interpolated over the evaluation grid by
a Matern-5/2 GP; kernel hyperparameters are fitted once per stage and held
fixed within it, so the objective is smooth and deterministic.  Uncertainty
combines a wave-vector discretization envelope with asymptotic standard
errors from the observed Fisher information, assembled per ring with the
Toeplitz trace operator and rescaled to the effective sample size.

Units: lag times in seconds, wave vectors in 1/um, MSD in um^2 (pixel^2
when px_size = 1).
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm as _norm
from threadpoolctl import threadpool_limits

from . import gpr
from .curves import MsdCurve
from .errors import DegenerateInput, NotPositiveDefinite, ValidationError
from .spectral import (
    RingSpectrum,
    amplitude_estimate,
    amplitude_floor,
    ddm_uq_baseline,
    fft_stack,
    structure_function,
)
from .stackio import ImageStack, normalize
from .toeplitz import ToeplitzCov, logdensity_batch, trace_gram

PENALTY = 1e12
GRAD_STEP = 1e-5
FISHER_FD_STEP = 1e-4
MAX_ITER = 200
GRAD_TOL = 1e-5
Z_975 = float(_norm.ppf(0.975))
_THETA_TILDE_SPAN = 35.0  # optimizer box half-width around the start, in log units


@dataclass(frozen=True)
class SubsampleSpec:
    """Subsampling and initialization constants (defaults used everywhere)."""

    eps1: float = 0.001
    eps2: float = 0.001
    n_s_max: int = 20
    a: float = 0.95
    lag_count: int = 6
    b_init_slope: float = 0.9
    coarse_factor: int | None = None  # None: floor(n / 100), at least 1

    def __post_init__(self):
        if not (self.eps1 > 0 and self.eps2 > 0):
            raise ValidationError("eps1 and eps2 must be positive")
        if not (0 < self.a <= 1):
            raise ValidationError("a must lie in (0, 1]")
        if self.n_s_max < 1 or self.lag_count < 2:
            raise ValidationError("need n_s_max >= 1 and lag_count >= 2")
        if not (self.b_init_slope > 0):
            raise ValidationError("b_init_slope must be positive")

    def coarse(self, n: int) -> int:
        if self.coarse_factor is not None:
            return max(1, int(self.coarse_factor))
        return max(1, n // 100)


@dataclass(frozen=True)
class MsdEstimate:
    """Estimation result: full-lag MSD plus the optimization state behind it."""

    msd: MsdCurve
    lag_idx_sub: np.ndarray
    theta_tilde: np.ndarray
    b_tilde: float
    rings: np.ndarray
    j0: int
    a_est: np.ndarray
    b_est: float
    converged: bool
    diagnostics: dict = field(repr=False)

    @property
    def psi(self):
        return np.concatenate([self.theta_tilde, [self.b_tilde]])


def select_rings(amps, eps1=0.001, eps2=0.001):
    """Smallest ring count reaching cumulative amplitude 1 - eps1, then raised
    to the last tail ring whose amplitude still clears eps2."""
    amps = np.asarray(amps, dtype=float)
    j_total = amps.size
    if j_total < 2:
        raise ValidationError("need at least two rings")
    total = amps.sum()
    if total <= 0:
        return j_total, np.arange(1, j_total + 1)
    csum = np.cumsum(amps) / total
    j0 = int(np.argmax(csum >= 1.0 - eps1)) + 1
    tail = np.flatnonzero(amps[j0:] >= eps2)
    if tail.size:
        j0 = j0 + int(tail[-1]) + 1
    return j0, np.arange(1, j0 + 1)


def subsample_q(j0, n_s_max=20, a=0.95) -> np.ndarray:
    """Up to n_s_max ring indices log-uniform over 1..a*j0 (unique, capped)."""
    if j0 < 1:
        raise ValidationError("j0 must be at least 1")
    if n_s_max == 1 or j0 == 1:
        return np.array([1], dtype=np.int64)
    delta = math.log(a * j0) / (n_s_max - 1)
    raw = np.exp(delta * np.arange(n_s_max))
    idx = np.ceil(raw).astype(np.int64)
    return np.unique(np.clip(idx, 1, j0))


def subsample_lags(n, lag_count=6) -> np.ndarray:
    """Up to lag_count lag indices log-uniform over 1..n-1 (always includes both ends)."""
    if n < 3:
        raise ValidationError("need at least three frames")
    delta = math.log(n - 1) / (lag_count - 1)
    raw = np.exp(delta * np.arange(lag_count))
    idx = np.ceil(raw).astype(np.int64)
    idx = np.unique(np.clip(idx, 1, n - 1))
    idx[-1] = n - 1
    return idx


def init_params(sf2, sub: SubsampleSpec, spectrum: RingSpectrum, rings,
                lag_idx_sub, px_size=1.0) -> np.ndarray:
    """Starting point: damped power-law trend through the direct inversion at
    the first two lags, plus the minimum log ring power as the noise start.

    If the inversion is invalid at either lag, the trend is anchored at
    px_size^2 with the same damped slope instead (total initialization).
    """
    dt = spectrum.dt_min
    lag_times = np.asarray(lag_idx_sub, dtype=float) * dt
    log_t = np.log(lag_times)
    anchor = None
    di = ddm_uq_baseline(sf2, spectrum, selected_rings=rings)
    if len(di.msd) >= 2 and np.all(di.msd.msd > 0):
        t1, t2 = di.msd.lag_time[:2]
        th1, th2 = di.msd.msd[:2]
        slope = (math.log(th2) - math.log(th1)) / (math.log(t2) - math.log(t1))
        anchor = (math.log(th1), slope)
    if anchor is None:
        anchor = (math.log(px_size**2), 1.0)
    base, slope = anchor
    theta0 = base + sub.b_init_slope * slope * (log_t - log_t[0])
    positive = spectrum.mean_power > 0
    if not positive.any():
        raise DegenerateInput("all rings carry zero power")
    b_tilde0 = float(np.min(np.log(spectrum.mean_power[positive])))
    return np.concatenate([theta0, [b_tilde0]])


class _GridInterp:
    """Fixed-kernel GP interpolation of log MSD onto one evaluation grid."""

    def __init__(self, lag_times_sub, lag_times_grid, ranges, nugget):
        self.weights = gpr.interpolation_weights(
            np.log(lag_times_sub), np.log(lag_times_grid), ranges, nugget
        )

    def theta_grid(self, theta_tilde):
        log_theta = np.clip(self.weights @ theta_tilde, -700.0, 700.0)
        return np.exp(log_theta)


def _ring_gamma(a_j, b_noise, q_j, theta_grid):
    gamma = np.empty(theta_grid.size + 1)
    gamma[0] = 0.25 * (a_j + b_noise)
    decay = -0.25 * q_j * q_j * theta_grid
    gamma[1:] = 0.25 * a_j * np.exp(np.clip(decay, -745.0, 0.0))
    return gamma


def neg_log_marginal(psi, rings, lag_grid, spectrum: RingSpectrum,
                     sub: SubsampleSpec | None = None, interp=None,
                     series=None, workers=1) -> float:
    """Negative log marginal likelihood of (log MSD at subsampled lags, log B/2).

    ``lag_grid`` is an equally strided set of positive lag indices; the data
    are the ring series decimated at that stride, so the Toeplitz structure
    stays exact on the coarse grid.  Rings are always reduced in ascending
    index order, making the value independent of caller ordering and worker
    count.  A non-PD covariance returns a large finite penalty instead of
    raising, so the optimizer can retreat.
    """
    psi = np.asarray(psi, dtype=float)
    if not np.all(np.isfinite(psi)):
        return PENALTY
    sub = sub or SubsampleSpec()
    lag_grid = np.asarray(lag_grid, dtype=np.int64)
    stride = int(lag_grid[0])
    if np.any(np.diff(lag_grid) != stride):
        raise ValidationError("lag grid must be equally strided from its first lag")
    theta_tilde, b_tilde = psi[:-1], psi[-1]
    b_noise = 2.0 * math.exp(min(b_tilde, 700.0))
    if interp is None:
        lag_idx_sub = subsample_lags(spectrum.n, sub.lag_count)
        if lag_idx_sub.size != theta_tilde.size:
            raise ValidationError("psi length does not match the subsampled lag grid")
        model = gpr.fit(np.log(lag_idx_sub * spectrum.dt_min), theta_tilde)
        interp = _GridInterp(lag_idx_sub * spectrum.dt_min,
                             lag_grid * spectrum.dt_min, model.ranges, model.nugget)
    theta_grid = interp.theta_grid(theta_tilde)
    rings_sorted = np.sort(np.asarray(rings, dtype=np.int64))
    floor = amplitude_floor(spectrum)

    def ring_term(j):
        ys = series[j] if series is not None else _ring_data(spectrum, j, stride)
        a_j = max(2.0 * spectrum.mean_power[j - 1] - b_noise, floor)
        gamma = _ring_gamma(a_j, b_noise, spectrum.q[j - 1], theta_grid)
        try:
            logpdf, _ = logdensity_batch(ToeplitzCov(gamma), ys)
        except NotPositiveDefinite:
            return None
        return float(np.sum(logpdf))

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            terms = list(pool.map(ring_term, rings_sorted))
    else:
        terms = [ring_term(j) for j in rings_sorted]
    total = 0.0
    for term in terms:
        if term is None or not np.isfinite(term):
            return PENALTY
        total += term
    return -total


def _ring_data(spectrum: RingSpectrum, j, stride):
    s = spectrum.ring_series(int(j))[:, ::stride]
    return np.ascontiguousarray(np.vstack([s.real, s.imag]))


def _central_gradient(fun, psi, step=GRAD_STEP):
    grad = np.empty_like(psi)
    for k in range(psi.size):
        up = psi.copy()
        dn = psi.copy()
        up[k] += step
        dn[k] -= step
        grad[k] = (fun(up) - fun(dn)) / (2.0 * step)
    return grad


def _run_stage(psi0, rings, lag_grid, spectrum, sub, series, workers, pinned=None):
    """One L-BFGS-B stage with per-stage GP hyperparameters and frozen weights.

    The objective is the negative log marginal likelihood per real-valued
    series, so the gradient and improvement tolerances mean the same thing
    at any stack size.  ``pinned`` marks parameter components held at their
    start value: anchors below the stage's lag stride carry no data
    information on a decimated grid and would drift, so the coarse stage
    keeps them at the direct-inversion-informed start.
    """
    lag_idx_sub = subsample_lags(spectrum.n, sub.lag_count)
    hyper = gpr.fit(np.log(lag_idx_sub * spectrum.dt_min), psi0[:-1])
    interp = _GridInterp(lag_idx_sub * spectrum.dt_min, lag_grid * spectrum.dt_min,
                         hyper.ranges, hyper.nugget)
    n_series = sum(series[int(j)].shape[0] for j in rings) if series else 1

    def fun(psi):
        nll = neg_log_marginal(psi, rings, lag_grid, spectrum, sub=sub,
                               interp=interp, series=series, workers=workers)
        return nll / n_series

    bounds = []
    for k, p in enumerate(psi0):
        if pinned is not None and pinned[k]:
            bounds.append((p, p))
        else:
            bounds.append((p - _THETA_TILDE_SPAN, p + _THETA_TILDE_SPAN))
    res = minimize(
        fun, psi0, method="L-BFGS-B", jac=lambda p: _central_gradient(fun, p),
        bounds=bounds,
        options={"maxiter": MAX_ITER, "gtol": GRAD_TOL, "ftol": 1e-11},
    )
    res.fun = res.fun * n_series
    return res, interp


def optimize(stack_or_spectrum, sub: SubsampleSpec | None = None, uq=False,
             m_particles=None, threads=1) -> MsdEstimate:
    """Full estimation pipeline on a stack (normalized internally) or spectrum.

    With ``uq=True`` the estimate carries pointwise 95% bounds; this needs
    the effective sample size ``m_particles`` (the particle count for
    simulated data; user-supplied for experiments).  BLAS pools are pinned
    inside so results are byte-identical for any ``threads`` value.
    """
    sub = sub or SubsampleSpec()
    if isinstance(stack_or_spectrum, ImageStack):
        if stack_or_spectrum.degenerate:
            raise DegenerateInput("constant stack carries no dynamics")
        stack = normalize(stack_or_spectrum)
        if stack.degenerate:
            raise DegenerateInput("constant stack carries no dynamics")
        spectrum = fft_stack(stack, workers=threads)
    else:
        spectrum = stack_or_spectrum
    with threadpool_limits(limits=1):
        est = _estimate(spectrum, sub, threads)
        if uq:
            if m_particles is None:
                warnings.warn(
                    "effective sample size not given; defaulting to 100 particles "
                    "- confidence intervals scale with 1/sqrt(M)",
                    stacklevel=2,
                )
                m_particles = 100
            lower, upper, uq_diag = quantify_uncertainty(
                est, spectrum, m_particles, sub=sub, threads=threads
            )
            est.diagnostics.update(uq_diag)
            est = replace(
                est,
                msd=MsdCurve(est.msd.lag_time, est.msd.msd, lower=lower, upper=upper),
            )
    return est


def _estimate(spectrum: RingSpectrum, sub: SubsampleSpec, threads) -> MsdEstimate:
    n = spectrum.n
    amps0 = amplitude_estimate(spectrum, 0.0)
    j0, _ = select_rings(amps0, sub.eps1, sub.eps2)
    rings = subsample_q(j0, sub.n_s_max, sub.a)
    lag_idx_sub = subsample_lags(n, sub.lag_count)
    _refuse_if_no_signal(spectrum)

    sf2 = structure_function(spectrum, lags=[1, 2])
    psi0 = init_params(sf2, sub, spectrum, rings, lag_idx_sub)
    b0 = 2.0 * math.exp(psi0[-1])
    floor = amplitude_floor(spectrum)
    informative = (2.0 * spectrum.mean_power[rings - 1] - b0) > floor
    rings = rings[informative]
    if rings.size == 0:
        raise DegenerateInput("no_signal: every selected ring sits at the amplitude floor")

    diagnostics = {
        "j0": int(j0),
        "selected_rings": rings.tolist(),
        "selected_lags": lag_idx_sub.tolist(),
        "stages": [],
    }

    c = sub.coarse(n)
    psi = psi0
    if c > 1:
        grid1 = c * np.arange(1, (n - 1) // c + 1, dtype=np.int64)
        series1 = {int(j): _ring_data(spectrum, j, c) for j in rings}
        pinned = np.append(lag_idx_sub < c, False)
        t0 = time.perf_counter()
        res1, _ = _run_stage(psi, rings, grid1, spectrum, sub, series1, threads,
                             pinned=pinned)
        diagnostics["stages"].append(_stage_diag("coarse", res1, time.perf_counter() - t0))
        psi = res1.x
        del series1

    grid2 = np.arange(1, n, dtype=np.int64)
    series2 = {int(j): _ring_data(spectrum, j, 1) for j in rings}

    def nll_full(p):
        return neg_log_marginal(p, rings, grid2, spectrum, sub=sub,
                                series=series2, workers=threads)

    # the coarse optimum can sit outside the full grid's PD region, where the
    # flat penalty gives the fine stage nothing to follow; repair by isotonic
    # projection of the log-MSD anchors, then by a clean restart
    monotone = psi.copy()
    monotone[:-1] = np.maximum.accumulate(monotone[:-1])
    candidates = [psi, monotone, psi0]
    for candidate in candidates:
        nll_full_start = nll_full(candidate)
        if nll_full_start < PENALTY:
            if candidate is not psi:
                warnings.warn(
                    "coarse-stage optimum not usable on the full grid; "
                    "fine stage starts from a repaired point",
                    stacklevel=2,
                )
            psi = candidate
            break
    else:
        psi = psi0
        nll_full_start = nll_full(psi)
    t0 = time.perf_counter()
    res2, interp2 = _run_stage(psi, rings, grid2, spectrum, sub, series2, threads)
    diagnostics["stages"].append(_stage_diag("full", res2, time.perf_counter() - t0))
    diagnostics["nll_full_at_stage_start"] = float(nll_full_start)
    diagnostics["nll_full_at_optimum"] = float(res2.fun)

    psi_est = res2.x
    theta_tilde = psi_est[:-1]
    b_tilde = float(psi_est[-1])
    b_est = 2.0 * math.exp(b_tilde)
    msd_values = interp2.theta_grid(theta_tilde)
    lag_times = grid2 * spectrum.dt_min
    a_est = np.maximum(2.0 * spectrum.mean_power[rings - 1] - b_est, floor)
    converged = all(stage["converged"] for stage in diagnostics["stages"])
    diagnostics["stage2_interp"] = interp2
    return MsdEstimate(
        msd=MsdCurve(lag_times, msd_values),
        lag_idx_sub=lag_idx_sub,
        theta_tilde=theta_tilde,
        b_tilde=b_tilde,
        rings=rings,
        j0=int(j0),
        a_est=a_est,
        b_est=b_est,
        converged=converged,
        diagnostics=diagnostics,
    )


def _refuse_if_no_signal(spectrum: RingSpectrum, z=25.0):
    """Refuse stacks whose every ring amplitude is consistent with pure noise.

    Under a noise-only stack the amplitude estimator at the minimum-ring-power
    noise start fluctuates around zero with sd ~ b * sqrt(1 / (2 count n));
    conjugate-pair redundancy and the min-selection bias push the null ratios
    to ~10, while any usable signal sits in the hundreds, so z splits the two
    regimes with a wide margin on both sides.
    """
    positive = spectrum.mean_power > 0
    if not positive.any():
        raise DegenerateInput("no_signal: all rings carry zero power")
    b0 = 2.0 * float(np.min(spectrum.mean_power[positive]))
    pre = 2.0 * spectrum.mean_power - b0
    fluct = b0 * np.sqrt(0.5 / (spectrum.counts * spectrum.n))
    if not np.any(pre > z * fluct):
        raise DegenerateInput(
            "no_signal: no ring amplitude exceeds its noise-only fluctuation"
        )


def _stage_diag(name, res, elapsed):
    return {
        "name": name,
        "iterations": int(res.nit),
        "n_evaluations": int(res.nfev),
        "nll": float(res.fun),
        "converged": bool(res.success),
        "seconds": float(elapsed),
        "message": str(res.message),
    }


def quantify_uncertainty(est: MsdEstimate, spectrum: RingSpectrum, m_particles,
                         sub: SubsampleSpec | None = None, threads=1):
    """95% bounds: wave-vector discretization envelope + asymptotic Fisher sd.

    Re-estimates with every q_j shifted by +-q_min (stage-2 refits warm
    started at the optimum) to get an envelope containing the estimate, then
    adds z_0.975 times standard deviations from the observed Fisher
    information, assembled per ring over 1..J0 with the Toeplitz trace
    operator, weighted by ring size and rescaled to ``m_particles``.  Bound
    curves are interpolated to all lags and clamped to bracket the estimate.
    """
    sub = sub or SubsampleSpec()
    if m_particles is None or m_particles < 1:
        raise ValidationError("effective sample size m_particles must be >= 1")
    n = spectrum.n
    grid2 = np.arange(1, n, dtype=np.int64)
    psi_est = est.psi

    psi_shift = []
    q_min = spectrum.q[0]
    for shift in (-q_min, +q_min):
        spec_shift = _with_q(spectrum, spectrum.q + shift)
        series = {int(j): _ring_data(spec_shift, j, 1) for j in est.rings}
        res, _ = _run_stage(psi_est, est.rings, grid2, spec_shift, sub, series, threads)
        psi_shift.append(res.x)
    psi_q_lower = np.minimum(np.minimum(*psi_shift), psi_est)
    psi_q_upper = np.maximum(np.maximum(*psi_shift), psi_est)

    fisher = observed_fisher(est, spectrum, m_particles, sub=sub, threads=threads)
    sym_err = np.max(np.abs(fisher - fisher.T))
    fisher = 0.5 * (fisher + fisher.T)
    try:
        cov = np.linalg.inv(fisher)
        if not np.all(np.isfinite(cov)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        warnings.warn("Fisher information singular; using pseudo-inverse", stacklevel=2)
        cov = np.linalg.pinv(fisher)
    sigma = np.sqrt(np.maximum(np.diag(cov), 0.0))

    psi_lower = psi_q_lower - Z_975 * sigma
    psi_upper = psi_q_upper + Z_975 * sigma

    interp = est.diagnostics["stage2_interp"]
    lower = interp.theta_grid(psi_lower[:-1])
    upper = interp.theta_grid(psi_upper[:-1])
    lower = np.minimum(lower, est.msd.msd)
    upper = np.maximum(upper, est.msd.msd)
    diag = {
        "fisher": fisher,
        "fisher_symmetry_error": float(sym_err),
        "sigma_psi": sigma,
        "psi_q_lower": psi_q_lower,
        "psi_q_upper": psi_q_upper,
        "psi_lower": psi_lower,
        "psi_upper": psi_upper,
        "m_particles": int(m_particles),
    }
    return lower, upper, diag


def observed_fisher(est: MsdEstimate, spectrum: RingSpectrum, m_particles,
                    sub: SubsampleSpec | None = None, threads=1) -> np.ndarray:
    """Observed Fisher information of (log MSD at subsampled lags, log B/2).

    Derivatives of the autocovariance with respect to each log-MSD component
    go through the GP interpolant by central finite differences; the noise
    derivative (which includes the amplitude plug-in) is closed form.  Ring
    contributions are per pixel, weighted by pixel count, and the sum is
    rescaled by m_particles / (total pixels in rings 1..J0).
    """
    sub = sub or SubsampleSpec()
    interp = est.diagnostics["stage2_interp"]
    theta_tilde = est.theta_tilde
    b_noise = est.b_est
    p = theta_tilde.size + 1

    theta_aug = np.concatenate([[0.0], interp.theta_grid(theta_tilde)])
    dtheta_aug = np.zeros((p - 1, theta_aug.size))
    for k in range(p - 1):
        up = theta_tilde.copy()
        dn = theta_tilde.copy()
        up[k] += FISHER_FD_STEP
        dn[k] -= FISHER_FD_STEP
        dtheta_aug[k, 1:] = (interp.theta_grid(up) - interp.theta_grid(dn)) / (
            2.0 * FISHER_FD_STEP
        )

    floor = amplitude_floor(spectrum)
    rings_fisher = np.arange(1, est.j0 + 1)
    e0 = np.zeros(theta_aug.size)
    e0[0] = 1.0

    def ring_fisher(j):
        q_j = spectrum.q[j - 1]
        a_j = max(2.0 * spectrum.mean_power[j - 1] - b_noise, floor)
        decay = np.exp(np.clip(-0.25 * q_j * q_j * theta_aug, -745.0, 0.0))
        gamma = 0.25 * a_j * decay + 0.25 * b_noise * e0
        dgammas = [
            0.25 * a_j * decay * (-0.25 * q_j * q_j) * dtheta_aug[k]
            for k in range(p - 1)
        ]
        dgammas.append(-0.25 * b_noise * decay + 0.25 * b_noise * e0)
        return trace_gram(ToeplitzCov(gamma), dgammas)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(ring_fisher, rings_fisher))
    else:
        blocks = [ring_fisher(j) for j in rings_fisher]
    counts = spectrum.counts[rings_fisher - 1].astype(float)
    fisher = np.zeros((p, p))
    for w, block in zip(counts, blocks):
        fisher += w * block
    fisher *= m_particles / counts.sum()
    return fisher


def _with_q(spectrum: RingSpectrum, q_new) -> RingSpectrum:
    import copy

    out = copy.copy(spectrum)
    out.q = np.asarray(q_new, dtype=float)
    return out


def rmse_log10(est: MsdCurve, truth: MsdCurve):
    """RMSE of log10 MSD against a reference curve, plus the reference SD."""
    if len(est) != len(truth):
        raise ValidationError("curves must share the lag grid")
    if not np.allclose(est.lag_time, truth.lag_time, rtol=1e-10):
        raise ValidationError("curves must share the lag grid")
    log_est = np.log10(est.msd)
    log_true = np.log10(truth.msd)
    rmse = float(np.sqrt(np.mean((log_est - log_true) ** 2)))
    sd = float(np.sqrt(np.sum((log_true - log_true.mean()) ** 2) / (len(truth) - 1)))
    return rmse, sd
