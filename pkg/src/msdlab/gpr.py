"""Matern-5/2 Gaussian process interpolation of smooth curves and surfaces.

Used for two jobs: interpolating log-MSD over log lag time inside the
estimator, and reconstructing the intermediate scattering function over
(log q, log dt) from a small subsampled grid.  Hyperparameters maximize the
profile marginal likelihood augmented with a jointly-robust style penalty on
inverse ranges and nugget, which bounds the range away from 0 and infinity;
the constant mean and signal variance are profiled out analytically.  Fits
are deterministic: a fixed set of starts, no randomness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from .errors import ValidationError

NUGGET_FLOOR = 1e-8
_JR_A = 0.2
_SQRT5 = math.sqrt(5.0)


def _matern52(t):
    """Matern correlation with roughness 2.5; t = sqrt(5) |d| / range."""
    return (1.0 + t + t * t / 3.0) * np.exp(-t)


def _corr_matrix(xa, xb, ranges):
    corr = np.ones((xa.shape[0], xb.shape[0]))
    for axis, rng in enumerate(ranges):
        t = _SQRT5 * np.abs(xa[:, axis, None] - xb[None, :, axis]) / rng
        corr *= _matern52(t)
    return corr


@dataclass(frozen=True)
class GpModel:
    """Fitted interpolator; immutable and safe to share across threads."""

    x: np.ndarray
    y: np.ndarray
    ranges: np.ndarray
    nugget: float
    sigma2: float
    mean: float
    alpha: np.ndarray = field(repr=False)

    @property
    def constant(self):
        return self.sigma2 == 0.0


def _as_inputs(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValidationError("inputs must be 1-D or 2-D")
    return x


def fit(x, y, ranges=None, nugget=None) -> GpModel:
    """Fit a Matern-5/2 GP with estimated constant mean.

    Passing ``ranges``/``nugget`` skips hyperparameter estimation and only
    conditions on the data (used when a caller re-runs the interpolation many
    times under one kernel).  Requires at least two distinct inputs; exact
    duplicates are absorbed by the always-on nugget floor.
    """
    x = _as_inputs(x)
    y = np.asarray(y, dtype=float)
    if y.shape != (x.shape[0],):
        raise ValidationError("y must be one value per input row")
    if x.shape[0] < 2 or np.all(np.ptp(x, axis=0) == 0):
        raise ValidationError("need at least two distinct inputs")
    if np.ptp(y) == 0.0:
        return GpModel(x=x, y=y, ranges=np.ones(x.shape[1]), nugget=NUGGET_FLOOR,
                       sigma2=0.0, mean=float(y[0]), alpha=np.zeros_like(y))
    if ranges is None or nugget is None:
        ranges, nugget = _estimate_hyperparameters(x, y)
    ranges = np.asarray(ranges, dtype=float)
    nugget = max(float(nugget), NUGGET_FLOOR)
    corr = _corr_matrix(x, x, ranges)
    corr[np.diag_indices_from(corr)] += nugget
    chol = cho_factor(corr, lower=True)
    ones = np.ones_like(y)
    ci_y = cho_solve(chol, y)
    ci_1 = cho_solve(chol, ones)
    mean = float(ones @ ci_y / (ones @ ci_1))
    resid = y - mean
    alpha = cho_solve(chol, resid)
    sigma2 = float(resid @ alpha / len(y))
    return GpModel(x=x, y=y, ranges=ranges, nugget=nugget, sigma2=max(sigma2, 0.0),
                   mean=mean, alpha=alpha)


def _estimate_hyperparameters(x, y):
    m, p = x.shape
    span = np.ptp(x, axis=0)
    span[span == 0] = 1.0
    c_jr = m ** (-1.0 / p) * span
    b_jr = m ** (-1.0 / p) * (_JR_A + p)
    ones = np.ones(m)

    def objective(params):
        beta = np.exp(params[:p])
        eta = np.exp(params[p])
        corr = _corr_matrix(x, x, 1.0 / beta)
        corr[np.diag_indices_from(corr)] += eta
        try:
            chol = cho_factor(corr, lower=True)
        except np.linalg.LinAlgError:
            return 1e12
        logdet = 2.0 * np.sum(np.log(np.diag(chol[0])))
        ci_y = cho_solve(chol, y)
        ci_1 = cho_solve(chol, ones)
        mean = ones @ ci_y / (ones @ ci_1)
        resid = y - mean
        s2 = resid @ cho_solve(chol, resid)
        if not (s2 > 0) or not np.isfinite(s2):
            return 1e12
        nll = 0.5 * m * np.log(s2) + 0.5 * logdet
        t = float(c_jr @ beta + eta)
        penalty = -(_JR_A * np.log(t) - b_jr * t)
        return nll + penalty

    lo = np.concatenate([np.log(1e-3 / span), [np.log(NUGGET_FLOOR)]])
    hi = np.concatenate([np.log(1e3 / span), [np.log(1e2)]])
    starts = [
        np.concatenate([np.log(1.0 / span), [np.log(1e-6)]]),
        np.concatenate([np.log(5.0 / span), [np.log(1e-4)]]),
        np.concatenate([np.log(0.2 / span), [np.log(1e-2)]]),
    ]
    best = None
    for start in starts:
        res = minimize(objective, start, method="L-BFGS-B",
                       bounds=list(zip(lo, hi)))
        if best is None or res.fun < best.fun:
            best = res
    beta = np.exp(best.x[:p])
    eta = max(float(np.exp(best.x[p])), NUGGET_FLOOR)
    return 1.0 / beta, eta


def predict(model: GpModel, xstar) -> np.ndarray:
    """Posterior mean at ``xstar``; continuous in the inputs."""
    xs = _as_inputs(xstar)
    if xs.shape[1] != model.x.shape[1]:
        raise ValidationError("prediction inputs have wrong dimension")
    if model.constant:
        return np.full(xs.shape[0], model.mean)
    r = _corr_matrix(xs, model.x, model.ranges)
    return model.mean + r @ model.alpha


def interpolation_weights(x_train, x_star, ranges, nugget) -> np.ndarray:
    """Matrix W with predict(fit(x_train, y; fixed kernel), x_star) = W @ y.

    The posterior mean with an estimated constant mean is linear in the
    training outputs once the kernel is fixed, so hot loops can reduce each
    re-interpolation to a single small matrix-vector product.
    """
    x_train = _as_inputs(x_train)
    x_star = _as_inputs(x_star)
    nugget = max(float(nugget), NUGGET_FLOOR)
    corr = _corr_matrix(x_train, x_train, ranges)
    corr[np.diag_indices_from(corr)] += nugget
    chol = cho_factor(corr, lower=True)
    ones = np.ones(x_train.shape[0])
    ci = cho_solve(chol, np.eye(x_train.shape[0]))
    a = ci @ ones
    a /= ones @ a
    r = _corr_matrix(x_star, x_train, ranges)
    rci = r @ ci
    return rci + np.outer(1.0 - rci @ ones, a)


def fit_isf_surface(q, lags, isf) -> GpModel:
    """2D product-kernel GP of the scattering function over (log q, log dt).

    ``isf`` is a (len(q), len(lags)) grid of values in (0, 1]; the fitted
    surface reconstructs the full grid from a coarse subsample.
    """
    q = np.asarray(q, dtype=float)
    lags = np.asarray(lags, dtype=float)
    isf = np.asarray(isf, dtype=float)
    if isf.shape != (q.size, lags.size):
        raise ValidationError("isf grid must be (len(q), len(lags))")
    if np.any(q <= 0) or np.any(lags <= 0):
        raise ValidationError("q and lag values must be positive")
    if np.any(isf <= 0) or np.any(isf > 1.0 + 1e-12):
        raise ValidationError("isf values must lie in (0, 1]")
    lq, lt = np.meshgrid(np.log(q), np.log(lags), indexing="ij")
    x = np.column_stack([lq.ravel(), lt.ravel()])
    return fit(x, isf.ravel())


def predict_isf_surface(model: GpModel, q, lags) -> np.ndarray:
    """Evaluate a fitted ISF surface on the full (q, lags) grid."""
    q = np.asarray(q, dtype=float)
    lags = np.asarray(lags, dtype=float)
    lq, lt = np.meshgrid(np.log(q), np.log(lags), indexing="ij")
    x = np.column_stack([lq.ravel(), lt.ravel()])
    return predict(model, x).reshape(q.size, lags.size)
