"""Gaussian log-density, solves and trace operators for symmetric
positive-definite Toeplitz covariances defined by an autocovariance vector.

The engine is the O(n^2) Levinson-Durbin recursion: the log-determinant is
the sum of the log prediction-error variances and quadratic forms come from
the innovations, so a single pass gives the exact density in O(n) extra
space.  Multi-column solves apply the inverse through its Gohberg-Semencul
representation, which the same recursion provides for free.  Positive
definiteness is checked operationally (every prediction-error variance must
stay strictly positive) and failures are surfaced, never jittered away.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft
from scipy.linalg import toeplitz as _dense_toeplitz

from .errors import NotPositiveDefinite, ValidationError

_LOG_2PI = float(np.log(2.0 * np.pi))


class ToeplitzCov:
    """Symmetric Toeplitz covariance with first row/column ``gamma``.

    The Levinson factorization is computed lazily and cached, so repeated
    solves and traces against the same covariance share one recursion.
    """

    def __init__(self, gamma):
        gamma = np.ascontiguousarray(np.asarray(gamma, dtype=float))
        if gamma.ndim != 1 or gamma.size == 0:
            raise ValidationError("gamma must be a non-empty 1-D vector")
        if not np.all(np.isfinite(gamma)):
            raise ValidationError("gamma must be finite")
        if gamma[0] <= 0:
            raise NotPositiveDefinite("gamma[0] must be positive")
        self.gamma = gamma
        self.n = gamma.size

    @cached_property
    def _factor(self):
        return _Factor(self.gamma)

    def dense(self):
        return _dense_toeplitz(self.gamma)


def _as_cov(cov) -> ToeplitzCov:
    return cov if isinstance(cov, ToeplitzCov) else ToeplitzCov(cov)


class _Factor:
    """Levinson-Durbin factorization of a symmetric PD Toeplitz matrix.

    Holds the log-determinant, the final prediction-error variance and the
    first column ``u`` of the inverse, from which the Gohberg-Semencul
    identity  T^{-1} = (L(u) L(u)^T - L(w) L(w)^T) / u[0],
    with w = (0, u[n-1], ..., u[1]), reconstructs the full inverse action.
    """

    def __init__(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        n = gamma.size
        v = gamma[0]
        if v <= 0:
            raise NotPositiveDefinite("prediction-error variance <= 0 at order 0")
        logdet = np.log(v)
        phi = np.zeros(n - 1)
        for k in range(1, n):
            kappa = (gamma[k] - phi[: k - 1] @ gamma[k - 1 : 0 : -1]) / v
            phi[: k - 1] = phi[: k - 1] - kappa * phi[: k - 1][::-1]
            phi[k - 1] = kappa
            v *= 1.0 - kappa * kappa
            if not (v > 0) or not np.isfinite(v):
                raise NotPositiveDefinite(
                    f"prediction-error variance <= 0 at order {k}"
                )
            logdet += np.log(v)
        self.gamma = gamma
        self.n = n
        self.logdet = float(logdet)
        self.pev_final = float(v)
        u = np.empty(n)
        u[0] = 1.0
        u[1:] = -phi
        self.u = u / v

    @cached_property
    def _gs_lower(self):
        n = self.n
        zeros = np.zeros(n)
        lu = _dense_toeplitz(self.u, zeros)
        w = np.concatenate(([0.0], self.u[:0:-1]))
        lw = _dense_toeplitz(w, zeros)
        return lu, lw

    def apply_inverse(self, b: np.ndarray) -> np.ndarray:
        """T^{-1} b for a vector or (n, m) matrix via Gohberg-Semencul."""
        lu, lw = self._gs_lower
        out = lu @ (lu.T @ b) - lw @ (lw.T @ b)
        out /= self.u[0]
        return out


def logdensity(cov, y):
    """Exact N(0, T) log-density of ``y`` in O(n^2) time, O(n) space.

    Returns ``(logpdf, logdet, quad)`` with quad = y^T T^{-1} y.  The single
    Levinson pass computes reflection coefficients, prediction-error
    variances and innovations together; any non-positive variance raises
    :class:`NotPositiveDefinite`.
    """
    cov = _as_cov(cov)
    gamma = cov.gamma
    n = cov.n
    y = np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise ValidationError(f"y must have shape ({n},)")
    v = gamma[0]
    if v <= 0:
        raise NotPositiveDefinite("prediction-error variance <= 0 at order 0")
    logdet = np.log(v)
    quad = y[0] * y[0] / v
    phi = np.zeros(n - 1)
    for k in range(1, n):
        kappa = (gamma[k] - phi[: k - 1] @ gamma[k - 1 : 0 : -1]) / v
        phi[: k - 1] = phi[: k - 1] - kappa * phi[: k - 1][::-1]
        phi[k - 1] = kappa
        v *= 1.0 - kappa * kappa
        if not (v > 0) or not np.isfinite(v):
            raise NotPositiveDefinite(f"prediction-error variance <= 0 at order {k}")
        logdet += np.log(v)
        e = y[k] - phi[:k] @ y[k - 1 :: -1]
        quad += e * e / v
    logpdf = -0.5 * (n * _LOG_2PI + logdet + quad)
    return float(logpdf), float(logdet), float(quad)


def logdensity_batch(cov, ys: np.ndarray):
    """(logpdf vector, shared logdet) for rows of ``ys`` under N(0, T).

    Quadratic forms go through the cached Gohberg-Semencul inverse action so
    the per-series cost is a matrix product rather than a fresh recursion.
    """
    cov = _as_cov(cov)
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if ys.shape[1] != cov.n:
        raise ValidationError(f"series length {ys.shape[1]} != {cov.n}")
    f = cov._factor
    x = f.apply_inverse(ys.T)
    quad = np.einsum("pi,ip->p", ys, x)
    logpdf = -0.5 * (cov.n * _LOG_2PI + f.logdet + quad)
    return logpdf, f.logdet


def matvec(gamma, x: np.ndarray) -> np.ndarray:
    """T x via FFT circulant embedding in O(n log n); x may be (n,) or (n, m)."""
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.size
    x = np.asarray(x, dtype=float)
    if x.shape[0] != n:
        raise ValidationError(f"x must have leading dimension {n}")
    if n == 1:
        return gamma[0] * x
    m = next_fast_len(2 * n - 1, real=True)
    circ = np.zeros(m)
    circ[:n] = gamma
    circ[m - n + 1 :] = gamma[:0:-1]
    fc = rfft(circ)
    fx = rfft(x, n=m, axis=0)
    prod = fx * (fc[:, None] if x.ndim == 2 else fc)
    return irfft(prod, n=m, axis=0)[:n]


def solve(cov, rhs: np.ndarray) -> np.ndarray:
    """Solve T x = rhs through the Levinson factorization.

    Two rounds of iterative refinement (exact FFT residuals) push the
    relative residual to solver tolerance even for ill-conditioned gamma.
    """
    cov = _as_cov(cov)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != cov.n:
        raise ValidationError(f"rhs must have leading dimension {cov.n}")
    f = cov._factor
    x = f.apply_inverse(rhs)
    for _ in range(2):
        r = rhs - matvec(cov.gamma, x)
        x = x + f.apply_inverse(r)
    return x


def trace_pair(cov, dgamma_r, dgamma_s) -> float:
    """tr(T^{-1} T(dgamma_r) T^{-1} T(dgamma_s)) for symmetric Toeplitz derivatives.

    Computed column-by-column through the factored inverse: with
    X_a = T^{-1} T(dgamma_a), the trace is the elementwise contraction
    sum(X_r * X_s^T), exact up to solver tolerance.
    """
    cov = _as_cov(cov)
    xr, xs = _inverse_times_toeplitz(cov, (dgamma_r, dgamma_s))
    return float(np.sum(xr * xs.T))


def trace_gram(cov, dgammas) -> np.ndarray:
    """Symmetric matrix of trace_pair values over a list of derivative vectors.

    Shares one factorization and one inverse application per derivative, so
    assembling a p x p Fisher block costs p solves instead of p^2.
    """
    cov = _as_cov(cov)
    xs = _inverse_times_toeplitz(cov, dgammas)
    p = len(xs)
    gram = np.empty((p, p))
    for r in range(p):
        for s in range(r, p):
            gram[r, s] = gram[s, r] = np.sum(xs[r] * xs[s].T)
    return gram


def _inverse_times_toeplitz(cov: ToeplitzCov, dgammas):
    n = cov.n
    f = cov._factor
    out = []
    for dg in dgammas:
        dg = np.asarray(dg, dtype=float)
        if dg.shape != (n,):
            raise ValidationError(f"derivative gamma must have shape ({n},)")
        out.append(f.apply_inverse(_dense_toeplitz(dg)))
    return out
