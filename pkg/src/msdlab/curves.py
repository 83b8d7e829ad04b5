"""Curve containers shared across the estimation, simulation and rheology layers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class MsdCurve:
    """Mean squared displacement as a function of lag time.

    ``lower``/``upper`` are optional pointwise 95% bounds; when present they
    bracket ``msd`` elementwise.
    """

    lag_time: np.ndarray
    msd: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        lag = np.asarray(self.lag_time, dtype=float)
        msd = np.asarray(self.msd, dtype=float)
        if lag.ndim != 1 or msd.shape != lag.shape:
            raise ValidationError("lag_time and msd must be 1-D arrays of equal length")
        if lag.size and np.any(np.diff(lag) <= 0):
            raise ValidationError("lag times must be strictly increasing")
        object.__setattr__(self, "lag_time", lag)
        object.__setattr__(self, "msd", msd)
        for name in ("lower", "upper"):
            bound = getattr(self, name)
            if bound is not None:
                bound = np.asarray(bound, dtype=float)
                if bound.shape != lag.shape:
                    raise ValidationError(f"{name} bound length mismatch")
                object.__setattr__(self, name, bound)

    def __len__(self):
        return self.lag_time.size

    @property
    def has_bounds(self):
        return self.lower is not None and self.upper is not None


@dataclass(frozen=True)
class ModuliCurve:
    """Storage and loss moduli on a frequency grid.

    ``omega`` is 1/lag-time and therefore strictly decreasing in lag index.
    ``defined`` masks entries where the gamma-function pole (alpha <= -1)
    makes the modulus undefined; ``nonphysical`` is set when any alpha > 1
    produced a negative storage modulus (reported as-is, never clipped).
    """

    omega: np.ndarray
    g_prime: np.ndarray
    g_loss: np.ndarray
    alpha: np.ndarray
    defined: np.ndarray = field(default=None)
    nonphysical: bool = False

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        if self.defined is None:
            object.__setattr__(self, "defined", np.isfinite(self.g_prime))
        for name in ("omega", "g_prime", "g_loss", "alpha", "defined"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != omega.shape:
                raise ValidationError(f"{name} length mismatch")
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.omega.size
