"""Viscoelastic moduli from MSD curves via the generalized Stokes-Einstein
relation, Monte Carlo propagation of MSD uncertainty, and smoothing of
externally measured MSD curves.

The local power-law form is used: with alpha the log-log slope of the MSD,
|G*(omega)| = 2 k_B T / (3 pi r theta(1/omega) Gamma(1 + alpha)), split into
storage G' = |G*| cos(pi alpha / 2) and loss G'' = |G*| sin(pi alpha / 2).
Slopes alpha > 1 make G' negative; such values are reported as-is with the
curve's ``nonphysical`` flag set, never clipped.

Units: these functions are SI throughout (MSD in m^2, radius in m).
Pipeline CSVs carry MSD in um^2; multiply by UM2_TO_M2 at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_smoothing_spline
from scipy.special import gamma as _gamma_fn

from .curves import ModuliCurve, MsdCurve
from .errors import NumericalError, ValidationError
from .gpr import _matern52

BOLTZMANN = 1.380649e-23  # J/K
UM2_TO_M2 = 1e-12
Z_975 = 1.959963984540054
DEFAULT_DRAWS = 1000


@dataclass(frozen=True)
class MaterialSpec:
    """Probe and bath parameters for the Stokes-Einstein conversion."""

    temperature: float  # kelvin
    radius: float  # meters
    kb: float = BOLTZMANN

    def __post_init__(self):
        if not (self.temperature > 0):
            raise ValidationError("temperature must be positive")
        if not (self.radius > 0):
            raise ValidationError("radius must be positive")


def log_slope(msd: MsdCurve) -> np.ndarray:
    """d log(theta) / d log(dt): central differences inside, one-sided at the ends."""
    if len(msd) < 3:
        raise ValidationError("need at least three lags for slopes")
    if np.any(msd.msd <= 0):
        raise ValidationError("MSD must be positive to take log slopes")
    return _slope_rows(np.log(msd.msd)[None, :], np.log(msd.lag_time))[0]


def _slope_rows(log_theta, log_t):
    alpha = np.empty_like(log_theta)
    alpha[:, 1:-1] = (log_theta[:, 2:] - log_theta[:, :-2]) / (log_t[2:] - log_t[:-2])
    alpha[:, 0] = (log_theta[:, 1] - log_theta[:, 0]) / (log_t[1] - log_t[0])
    alpha[:, -1] = (log_theta[:, -1] - log_theta[:, -2]) / (log_t[-1] - log_t[-2])
    return alpha


def gser(msd: MsdCurve, alpha, mat: MaterialSpec) -> ModuliCurve:
    """Storage and loss moduli at omega = 1/lag from an MSD curve in m^2.

    Entries with alpha <= -1 (gamma-function pole) are undefined and reported
    as NaN with ``defined`` False.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != msd.lag_time.shape:
        raise ValidationError("alpha must align with the MSD lags")
    if np.any(msd.msd <= 0):
        raise ValidationError("MSD must be positive")
    gp, gl = _gser_rows(msd.msd[None, :], alpha[None, :], mat)
    defined = alpha > -1.0
    return ModuliCurve(
        omega=1.0 / msd.lag_time,
        g_prime=np.where(defined, gp[0], np.nan),
        g_loss=np.where(defined, gl[0], np.nan),
        alpha=alpha,
        defined=defined,
        nonphysical=bool(np.any(alpha[defined] > 1.0)),
    )


def _gser_rows(theta, alpha, mat: MaterialSpec):
    with np.errstate(over="ignore", invalid="ignore"):
        absg = 2.0 * mat.kb * mat.temperature / (
            3.0 * np.pi * mat.radius * theta * _gamma_fn(1.0 + alpha)
        )
        g_prime = absg * np.cos(np.pi * alpha / 2.0)
        g_loss = absg * np.sin(np.pi * alpha / 2.0)
    return g_prime, g_loss


def mc_moduli(lower: MsdCurve, upper: MsdCurve, mat: MaterialSpec,
              draws=DEFAULT_DRAWS, rng=None, corr_range=None) -> ModuliCurve:
    """Moduli medians under Monte Carlo sampling of the MSD uncertainty band.

    Log-MSD curves are drawn from a multivariate normal whose mean is the
    band midpoint, whose pointwise sd is the band width over 2 z_0.975, and
    whose correlation is Matern-5/2 over log lag time with range
    ``corr_range`` (default: half the log-lag span; the kernel range is not
    pinned down by the construction, so it is configurable).  Each sample is
    pushed through slopes + GSER and the pointwise medians are returned.
    A zero-width band short-circuits to the deterministic conversion of the
    midpoint curve, exactly.
    """
    if len(lower) != len(upper) or not np.allclose(lower.lag_time, upper.lag_time):
        raise ValidationError("bounds must share the lag grid")
    if np.any(lower.msd <= 0) or np.any(upper.msd < lower.msd):
        raise ValidationError("bounds must be positive with lower <= upper")
    if len(lower) < 3:
        raise ValidationError("need at least three lags")
    log_t = np.log(lower.lag_time)
    mu = 0.5 * (np.log(lower.msd) + np.log(upper.msd))
    sigma = (np.log(upper.msd) - np.log(lower.msd)) / (2.0 * Z_975)
    if np.all(sigma == 0.0):
        curve = MsdCurve(lower.lag_time, lower.msd)
        return gser(curve, log_slope(curve), mat)

    span = float(log_t[-1] - log_t[0])
    rng_corr = corr_range if corr_range is not None else 0.5 * span
    dist = np.abs(log_t[:, None] - log_t[None, :])
    corr = _matern52(np.sqrt(5.0) * dist / rng_corr)
    chol = _chol_with_jitter(corr)
    rng = rng if rng is not None else np.random.default_rng(0)
    z = rng.standard_normal(size=(int(draws), len(lower)))
    log_theta = mu[None, :] + sigma[None, :] * (z @ chol.T)
    alpha = _slope_rows(log_theta, log_t)
    gp, gl = _gser_rows(np.exp(log_theta), alpha, mat)
    defined = alpha > -1.0
    gp = np.where(defined, gp, np.nan)
    gl = np.where(defined, gl, np.nan)
    with np.errstate(all="ignore"):
        gp_med = np.nanmedian(gp, axis=0)
        gl_med = np.nanmedian(gl, axis=0)
        alpha_med = np.median(alpha, axis=0)
    return ModuliCurve(
        omega=1.0 / lower.lag_time,
        g_prime=gp_med,
        g_loss=gl_med,
        alpha=alpha_med,
        defined=np.isfinite(gp_med),
        nonphysical=bool(np.any(alpha_med > 1.0)),
    )


def _chol_with_jitter(corr):
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        n = corr.shape[0]
        jitter = 1e-10 * np.trace(corr) / n
        try:
            return np.linalg.cholesky(corr + jitter * np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise NumericalError("sampling correlation not positive definite") from exc


def smooth_external_msd(msd: MsdCurve, method="spline") -> MsdCurve:
    """Smooth a noisy (e.g. tracking-derived) MSD in log-log space.

    ``spline`` fits a cubic smoothing spline to log MSD over log lag with the
    smoothing parameter chosen by generalized cross-validation; ``poly4``
    fits a degree-4 polynomial by least squares.  Values are returned on the
    input grid.
    """
    if np.any(msd.msd <= 0):
        raise ValidationError("MSD must be positive")
    x = np.log(msd.lag_time)
    y = np.log(msd.msd)
    if method == "poly4":
        if len(msd) < 5:
            raise ValidationError("poly4 smoothing needs at least five points")
        coeffs = np.polynomial.Polynomial.fit(x, y, 4)
        smooth = coeffs(x)
    elif method == "spline":
        if len(msd) < 4:
            raise ValidationError("spline smoothing needs at least four points")
        spline = make_smoothing_spline(x, y)
        smooth = spline(x)
    else:
        raise ValidationError(f"unknown smoothing method {method!r}")
    return MsdCurve(msd.lag_time, np.exp(smooth))
