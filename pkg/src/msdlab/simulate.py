"""Synthetic particle videos from stochastic dynamics models.

Four isotropic models are supported: free diffusion (Brownian), a confined
stationary AR(1) process, fractional Brownian motion with exponent
``alpha = 2H``, and the additive mixture of the last two.  Coordinates are
generated independently per axis and combined.

Scaling note: the model prefactors are variances.  Per-axis Brownian steps
have variance ``sigma2/2`` per unit lag, the AR(1) stationary per-axis
variance is ``sigma2/4``, and fractional increments have covariance
``(sigma2/2) * Sigma_H``; standard-normal draws are scaled by the square
roots.  This is the unique scaling under which the sampled trajectories
reproduce the closed-form MSDs returned by :func:`true_msd` (2D MSDs of
``sigma2*dt``, ``sigma2*(1 - rho**dt)`` and ``sigma2*dt**alpha``), which the
test suite enforces by Monte Carlo.

Reproducibility: per-particle streams are spawned from the caller's
generator, and rendering noise uses per-frame streams derived from
``RenderSpec.rng_seed``, so identical seeds give bit-identical trajectories
and stacks regardless of any outer parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import toeplitz as _dense_toeplitz

from .curves import MsdCurve
from .errors import NumericalError, ValidationError
from .stackio import ImageStack

_NOISE_SPAWN_KEY = 0x6E6F6973  # renders draw noise from a stream family of their own


def _check_variance(name, value):
    if not (value >= 0) or not np.isfinite(value):
        raise ValidationError(f"{name} must be a finite non-negative variance")


@dataclass(frozen=True)
class BrownianModel:
    """Free diffusion; 2D MSD is sigma2 * dt."""

    sigma2: float

    def __post_init__(self):
        _check_variance("sigma2", self.sigma2)

    def msd(self, lags):
        return self.sigma2 * lags


@dataclass(frozen=True)
class OrnsteinUhlenbeckModel:
    """Confined stationary AR(1); 2D MSD is sigma2 * (1 - rho**dt)."""

    sigma2: float
    rho: float

    def __post_init__(self):
        _check_variance("sigma2", self.sigma2)
        if not (0.0 < self.rho < 1.0):
            raise ValidationError("rho must lie in (0, 1)")

    def msd(self, lags):
        return self.sigma2 * (1.0 - self.rho**lags)


@dataclass(frozen=True)
class FractionalBrownianModel:
    """Fractional Brownian motion with Hurst H = alpha/2; 2D MSD is sigma2 * dt**alpha."""

    sigma2: float
    alpha: float

    def __post_init__(self):
        _check_variance("sigma2", self.sigma2)
        if not (0.0 < self.alpha < 2.0):
            raise ValidationError("alpha must lie in (0, 2)")

    @property
    def hurst(self):
        return self.alpha / 2.0

    def msd(self, lags):
        return self.sigma2 * lags**self.alpha


@dataclass(frozen=True)
class OuFbmModel:
    """Additive mixture of the AR(1) and fractional components."""

    sigma2_ou: float
    rho: float
    sigma2_fbm: float
    alpha: float

    def __post_init__(self):
        _check_variance("sigma2_ou", self.sigma2_ou)
        _check_variance("sigma2_fbm", self.sigma2_fbm)
        if not (0.0 < self.rho < 1.0):
            raise ValidationError("rho must lie in (0, 1)")
        if not (0.0 < self.alpha < 2.0):
            raise ValidationError("alpha must lie in (0, 2)")

    def msd(self, lags):
        return self.sigma2_ou * (1.0 - self.rho**lags) + self.sigma2_fbm * lags**self.alpha


DynamicsModel = Union[
    BrownianModel, OrnsteinUhlenbeckModel, FractionalBrownianModel, OuFbmModel
]


@dataclass(frozen=True)
class RenderSpec:
    """Rendering parameters: Gaussian blobs of peak ``y_max`` and radius
    parameter ``sigma_p`` (truncated at 3 sigma_p), plus additive white noise
    of variance ``noise_b / 2``."""

    y_max: float = 1.0
    sigma_p: float = 2.0
    noise_b: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not (self.y_max > 0):
            raise ValidationError("y_max must be positive")
        if not (self.sigma_p > 0):
            raise ValidationError("sigma_p must be positive")
        if not (self.noise_b >= 0):
            raise ValidationError("noise_b must be non-negative")


@dataclass(frozen=True)
class TrajectorySet:
    """Positions of M particles over n frames, shape (M, n, 2), in pixels."""

    positions: np.ndarray
    dt_min: float

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 3 or pos.shape[2] != 2:
            raise ValidationError("positions must have shape (M, n, 2)")
        if not np.all(np.isfinite(pos)):
            raise ValidationError("positions must be finite")
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)

    @property
    def m(self):
        return self.positions.shape[0]

    @property
    def n(self):
        return self.positions.shape[1]


def sample_initial_positions(m, n1, n2, rng) -> np.ndarray:
    """Uniform initial positions on the central region [N/8, 7N/8] per axis."""
    if m < 1:
        raise ValidationError("need at least one particle")
    x1 = rng.uniform(n1 / 8.0, 7.0 * n1 / 8.0, size=m)
    x2 = rng.uniform(n2 / 8.0, 7.0 * n2 / 8.0, size=m)
    return np.column_stack([x1, x2])


def _fbm_increment_chol(n_steps, hurst, dt):
    """Cholesky factor of the unit-variance fractional increment covariance."""
    k = np.arange(n_steps, dtype=float) * dt
    h2 = 2.0 * hurst
    gamma = 0.5 * np.abs(k + dt) ** h2 + 0.5 * np.abs(k - dt) ** h2 - np.abs(k) ** h2
    sigma = _dense_toeplitz(gamma)
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * np.trace(sigma) / n_steps
        try:
            return np.linalg.cholesky(sigma + jitter * np.eye(n_steps))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                "fractional increment covariance not positive definite after jitter"
            ) from exc


def gen_trajectories(model: DynamicsModel, init, n, dt_min, rng) -> TrajectorySet:
    """Generate trajectories from ``init`` (one stream per particle).

    Within a particle the draw order is fixed (first-frame jitter, AR(1)
    innovations, then fractional increments), so the mixture with a zero
    fractional variance is bit-identical to the plain AR(1) model under the
    same generator.
    """
    init = np.asarray(init, dtype=float)
    if init.ndim != 2 or init.shape[1] != 2:
        raise ValidationError("init must have shape (M, 2)")
    if n < 2:
        raise ValidationError("need at least two frames")
    m = init.shape[0]
    streams = rng.spawn(m)

    if isinstance(model, BrownianModel):
        scale = math.sqrt(model.sigma2 / 2.0 * dt_min)
        steps = np.stack([s.normal(scale=scale, size=(n - 1, 2)) for s in streams])
        pos = np.empty((m, n, 2))
        pos[:, 0] = init
        np.cumsum(steps, axis=1, out=pos[:, 1:])
        pos[:, 1:] += init[:, None, :]
        return TrajectorySet(pos, dt_min)

    if isinstance(model, OrnsteinUhlenbeckModel):
        jit, innov = _draw_ou(streams, n, model.sigma2, model.rho, dt_min)
        dev = _ou_deviation(jit, innov, model.rho**dt_min)
        return TrajectorySet(init[:, None, :] + dev, dt_min)

    if isinstance(model, FractionalBrownianModel):
        dev = _fbm_deviation(streams, n, model.sigma2, model.hurst, dt_min)
        return TrajectorySet(init[:, None, :] + dev, dt_min)

    if isinstance(model, OuFbmModel):
        jit, innov = _draw_ou(streams, n, model.sigma2_ou, model.rho, dt_min)
        dev = _ou_deviation(jit, innov, model.rho**dt_min)
        if model.sigma2_fbm > 0:
            dev = dev + _fbm_deviation(streams, n, model.sigma2_fbm, model.alpha / 2.0, dt_min)
        return TrajectorySet(init[:, None, :] + dev, dt_min)

    raise ValidationError(f"unknown dynamics model {type(model).__name__}")


def _draw_ou(streams, n, sigma2, rho, dt):
    jitter_sd = math.sqrt(sigma2 / 4.0)
    innov_sd = math.sqrt(sigma2 * (1.0 - (rho**dt) ** 2) / 4.0)
    jit = np.stack([s.normal(scale=jitter_sd, size=2) for s in streams])
    innov = np.stack([s.normal(scale=innov_sd, size=(n - 1, 2)) for s in streams])
    return jit, innov


def _ou_deviation(jit, innov, rho_step):
    m, n1, _ = innov.shape
    dev = np.empty((m, n1 + 1, 2))
    dev[:, 0] = jit
    for k in range(n1):
        dev[:, k + 1] = rho_step * dev[:, k] + innov[:, k]
    return dev


def _fbm_deviation(streams, n, sigma2, hurst, dt):
    chol = _fbm_increment_chol(n - 1, hurst, dt) * math.sqrt(sigma2 / 2.0)
    z = np.stack([s.normal(size=(n - 1, 2)) for s in streams])
    increments = np.einsum("ij,mjk->mik", chol, z)
    dev = np.zeros((len(streams), n, 2))
    np.cumsum(increments, axis=1, out=dev[:, 1:])
    return dev


def true_msd(model: DynamicsModel, lags) -> MsdCurve:
    """Closed-form MSD of ``model`` at positive lag times."""
    lags = np.asarray(lags, dtype=float)
    if np.any(lags <= 0):
        raise ValidationError("lags must be positive")
    return MsdCurve(lag_time=lags, msd=model.msd(lags))


def render(traj: TrajectorySet, spec: RenderSpec, n1, n2, px_size=1.0) -> ImageStack:
    """Render trajectories as truncated Gaussian blobs plus white noise.

    Blob contributions sum without saturation; particles leaving the field of
    view simply stop contributing.  With ``noise_b == 0`` the output is a
    deterministic function of the trajectories.
    """
    m, n = traj.m, traj.n
    pos = traj.positions
    cut = 3.0 * spec.sigma_p
    cut2 = cut * cut
    inv_two_sig2 = 1.0 / (2.0 * spec.sigma_p**2)
    frames = np.zeros((n, n1, n2))
    for k in range(n):
        frame = frames[k]
        for i in range(m):
            x1, x2 = pos[i, k]
            lo1 = max(int(math.ceil(x1 - cut)), 0)
            hi1 = min(int(math.floor(x1 + cut)), n1 - 1)
            lo2 = max(int(math.ceil(x2 - cut)), 0)
            hi2 = min(int(math.floor(x2 + cut)), n2 - 1)
            if lo1 > hi1 or lo2 > hi2:
                continue
            d2 = (np.arange(lo1, hi1 + 1) - x1)[:, None] ** 2
            d2 = d2 + (np.arange(lo2, hi2 + 1) - x2)[None, :] ** 2
            blob = spec.y_max * np.exp(-d2 * inv_two_sig2)
            blob[d2 > cut2] = 0.0
            frame[lo1 : hi1 + 1, lo2 : hi2 + 1] += blob
    if spec.noise_b > 0:
        root = np.random.SeedSequence(spec.rng_seed, spawn_key=(_NOISE_SPAWN_KEY,))
        sd = math.sqrt(spec.noise_b / 2.0)
        for k, child in enumerate(root.spawn(n)):
            frames[k] += np.random.default_rng(child).normal(scale=sd, size=(n1, n2))
    return ImageStack(frames, dt_min=traj.dt_min, px_size=px_size)


def simulate_stack(
    model: DynamicsModel, m, n1, n2, n, dt_min, spec: RenderSpec, seed, px_size=1.0
):
    """Initial positions + trajectories + rendering under one seed.

    Returns ``(stack, trajectories)``; the render noise stream is taken from
    ``spec.rng_seed`` and is independent of the trajectory streams.
    """
    ss = np.random.SeedSequence(seed)
    ss_init, ss_traj = ss.spawn(2)
    init = sample_initial_positions(m, n1, n2, np.random.default_rng(ss_init))
    traj = gen_trajectories(model, init, n, dt_min, np.random.default_rng(ss_traj))
    stack = render(traj, spec, n1, n2, px_size=px_size)
    return stack, traj


def empirical_msd(traj: TrajectorySet, lags_idx) -> MsdCurve:
    """Time- and ensemble-averaged MSD of sampled trajectories (oracle use)."""
    pos = traj.positions
    n = traj.n
    values = []
    for lag in lags_idx:
        if not 1 <= lag < n:
            raise ValidationError(f"lag index {lag} out of range")
        diff = pos[:, lag:] - pos[:, :-lag]
        values.append(np.mean(np.sum(diff**2, axis=2)))
    lag_times = np.asarray(lags_idx, dtype=float) * traj.dt_min
    return MsdCurve(lag_times, np.asarray(values))


def write_trajectories(traj: TrajectorySet, path) -> None:
    """Dump trajectories as ``particle,frame,x,y`` CSV."""
    from .errors import IoError

    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("particle,frame,x,y\n")
            for i in range(traj.m):
                for k in range(traj.n):
                    x, y = traj.positions[i, k]
                    fh.write(f"{i},{k},{x:.17g},{y:.17g}\n")
    except OSError as exc:
        raise IoError(f"cannot write trajectories to {path}: {exc}") from exc
