"""Reciprocal-space view of image stacks: wave-vector rings, image structure
functions, ring amplitudes, and the direct-inversion MSD baseline.

One scaling convention is used everywhere: ring series carry the transform
scaled by 1/sqrt(N) with N the pixel count.  In these units the structure
function satisfies D = A (1 - f) + B exactly, where f is the intermediate
scattering function, A the per-ring signal amplitude and B twice the pixel
noise variance, and the amplitude estimator 2 <|y|^2> - B is unbiased.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as _fft

from .curves import MsdCurve
from .errors import DegenerateInput, UnsupportedGeometry, ValidationError
from .stackio import ImageStack

AMPLITUDE_FLOOR_SCALE = 1e-12


@dataclass(frozen=True)
class RingGeometry:
    """Static ring structure of a square Fourier plane.

    Pixels map to the ring whose index is the rounded radial integer
    frequency (wrapped); the zero-frequency pixel and radii beyond ``j_max``
    belong to no ring.  Ring j has magnitude q_j = 2 pi j / (px_size sqrt(N)).
    """

    labels: np.ndarray = field(repr=False)
    q: np.ndarray
    counts: np.ndarray
    px_size: float

    @property
    def j_max(self):
        return self.q.size


def build_rings(n1, n2, px_size) -> RingGeometry:
    if n1 != n2:
        raise UnsupportedGeometry(f"rings need a square field, got {n1}x{n2}")
    side = int(n1)
    j_max = math.ceil(side / 2) - 1
    if j_max < 1:
        raise UnsupportedGeometry(f"field {side}x{side} too small for any ring")
    freq = np.minimum(np.arange(side), side - np.arange(side))
    radius = np.rint(np.hypot(freq[:, None], freq[None, :])).astype(np.int64)
    labels = np.where((radius >= 1) & (radius <= j_max), radius, 0)
    counts = np.bincount(labels.ravel(), minlength=j_max + 1)[1:]
    q = 2.0 * np.pi * np.arange(1, j_max + 1) / (px_size * side)
    return RingGeometry(labels=labels, q=q, counts=counts, px_size=px_size)


class RingSpectrum:
    """Scaled Fourier time series grouped into wave-vector rings.

    Backed either by the full complex cube of a transformed stack (built by
    :func:`fft_stack`) or by explicit per-ring series (synthetic data and the
    latent-model tests); both expose ``ring_series(j)`` -> (N_Sj, n) complex
    arrays for 1-based ring index j.
    """

    def __init__(self, q, counts, n, dt_min, mean_power, cube=None, labels=None,
                 series=None):
        self.q = np.asarray(q, dtype=float)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.n = int(n)
        self.dt_min = float(dt_min)
        self.mean_power = np.asarray(mean_power, dtype=float)
        self._cube = cube
        self._series = series
        self._gather = None
        if cube is not None:
            flat = labels.ravel()
            order = np.argsort(flat, kind="stable")
            bounds = np.searchsorted(flat[order], np.arange(self.j_max + 2))
            self._gather = (order, bounds)

    @property
    def j_max(self):
        return self.q.size

    def ring_series(self, j) -> np.ndarray:
        if not 1 <= j <= self.j_max:
            raise ValidationError(f"ring index {j} outside 1..{self.j_max}")
        if self._series is not None:
            return self._series[j - 1]
        order, bounds = self._gather
        idx = order[bounds[j] : bounds[j + 1]]
        return np.ascontiguousarray(self._cube[:, idx].T)

    @classmethod
    def from_series(cls, q, series, dt_min) -> "RingSpectrum":
        """Build a spectrum from explicit per-ring (N_Sj, n) complex arrays."""
        series = [np.atleast_2d(np.asarray(s)) for s in series]
        if len(series) != len(q):
            raise ValidationError("one series block per ring required")
        n = series[0].shape[1]
        if any(s.shape[1] != n for s in series):
            raise ValidationError("all ring series must share the frame count")
        counts = np.array([s.shape[0] for s in series])
        mean_power = np.array([np.mean(np.abs(s) ** 2) for s in series])
        return cls(q=q, counts=counts, n=n, dt_min=dt_min, mean_power=mean_power,
                   series=series)


def fft_stack(stack: ImageStack, workers=None) -> RingSpectrum:
    """Per-frame 2D DFT scaled by 1/sqrt(N), binned into rings.

    Refuses stacks flagged degenerate by normalization.  The per-frame
    transforms are independent, so ``workers`` only changes wall time, never
    values.
    """
    if stack.degenerate:
        raise DegenerateInput("stack is constant; nothing to transform")
    geom = build_rings(stack.n1, stack.n2, stack.px_size)
    n_px = stack.n1 * stack.n2
    cube = _fft.fft2(stack.frames, axes=(1, 2), workers=workers)
    cube *= 1.0 / math.sqrt(n_px)
    cube = cube.reshape(stack.n, n_px)
    power = np.einsum("tp,tp->p", cube.real, cube.real)
    power += np.einsum("tp,tp->p", cube.imag, cube.imag)
    ring_power = np.bincount(geom.labels.ravel(), weights=power, minlength=geom.j_max + 1)[1:]
    mean_power = ring_power / (geom.counts * stack.n)
    return RingSpectrum(
        q=geom.q, counts=geom.counts, n=stack.n, dt_min=stack.dt_min,
        mean_power=mean_power, cube=cube, labels=geom.labels,
    )


@dataclass(frozen=True)
class StructureFunction:
    """Ring-averaged image structure function D at the requested lag indices."""

    rings: np.ndarray
    q: np.ndarray
    lag_idx: np.ndarray
    lag_time: np.ndarray
    d: np.ndarray  # (len(rings), len(lag_idx))

    def row(self, ring):
        pos = np.flatnonzero(self.rings == ring)
        if pos.size == 0:
            raise ValidationError(f"ring {ring} not present in structure function")
        return self.d[pos[0]]


def structure_function(spec: RingSpectrum, lags, rings=None) -> StructureFunction:
    """D(q_j, dt) = ring average of the time-averaged |y(t+dt) - y(t)|^2.

    Lags are 1-based frame offsets; evaluation is lazy in the requested lag
    set.  Small lag sets use the direct pair sum; larger ones the exact
    FFT-in-time split of the same quantity (the two agree to roundoff).
    """
    lag_idx = np.unique(np.asarray(lags, dtype=np.int64))
    if lag_idx.size == 0 or lag_idx[0] < 1 or lag_idx[-1] > spec.n - 1:
        raise ValidationError(f"lag indices must lie in 1..{spec.n - 1}")
    if rings is None:
        rings = np.arange(1, spec.j_max + 1)
    rings = np.asarray(rings, dtype=np.int64)
    use_fft = lag_idx.size > 16
    d = np.empty((rings.size, lag_idx.size))
    for i, j in enumerate(rings):
        series = spec.ring_series(int(j))
        d[i] = _ring_d_fft(series, lag_idx) if use_fft else _ring_d_direct(series, lag_idx)
    return StructureFunction(
        rings=rings,
        q=spec.q[rings - 1],
        lag_idx=lag_idx,
        lag_time=lag_idx * spec.dt_min,
        d=d,
    )


def _ring_d_direct(series, lag_idx):
    out = np.empty(lag_idx.size)
    for i, lag in enumerate(lag_idx):
        diff = series[:, lag:] - series[:, :-lag]
        out[i] = np.mean(diff.real**2 + diff.imag**2)
    return out


def _ring_d_fft(series, lag_idx):
    p, n = series.shape
    s = series.real**2 + series.imag**2
    csum = np.cumsum(s.sum(axis=0))
    total = csum[-1]
    nfft = _fft.next_fast_len(2 * n - 1)
    f = _fft.fft(series, n=nfft, axis=1)
    acorr = _fft.ifft(f * np.conj(f), axis=1)[:, :n].real.sum(axis=0)
    out = np.empty(lag_idx.size)
    for i, lag in enumerate(lag_idx):
        tail = total - csum[lag - 1]  # sum of |y_t|^2 for t >= lag
        head = csum[n - lag - 1]  # sum for t < n - lag
        out[i] = (tail + head - 2.0 * acorr[lag]) / (p * (n - lag))
    # the sum of squared moduli cannot be negative; clip FFT roundoff
    return np.maximum(out, 0.0)


def export_structure_function(sf: StructureFunction, path) -> None:
    """Diagnostic dump in long format: one ``q,lag_time,d`` row per entry."""
    from .errors import IoError

    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("q,lag_time,d\n")
            for i in range(sf.rings.size):
                for k in range(sf.lag_idx.size):
                    fh.write(
                        f"{sf.q[i]:.17g},{sf.lag_time[k]:.17g},{sf.d[i, k]:.17g}\n"
                    )
    except OSError as exc:
        raise IoError(f"cannot write structure function to {path}: {exc}") from exc


def amplitude_estimate(spec: RingSpectrum, b) -> np.ndarray:
    """Unbiased per-ring amplitude 2 <|y|^2> - b, clamped at a tiny floor.

    The floor is AMPLITUDE_FLOOR_SCALE times the largest pre-clamp A_j + b,
    which keeps downstream covariances positive without disturbing any ring
    that carries real signal.
    """
    if b < 0:
        raise ValidationError("noise parameter b must be non-negative")
    pre = 2.0 * spec.mean_power - b
    return np.maximum(pre, amplitude_floor(spec))


def amplitude_floor(spec: RingSpectrum) -> float:
    return AMPLITUDE_FLOOR_SCALE * float(np.max(2.0 * spec.mean_power, initial=0.0))


@dataclass(frozen=True)
class DirectInversionResult:
    """Per-(ring, lag) direct inversion of the structure function.

    ``valid`` masks entries with a positive log argument coming from a ring
    whose amplitude sits above the clamp floor (floored rings carry no
    signal, so their inversions are meaningless).  ``msd`` holds the per-lag
    medians over valid selected rings, reported only where at least
    ``MIN_VALID_RINGS`` rings contribute.
    """

    msd: MsdCurve
    rings: np.ndarray
    lag_idx: np.ndarray
    lag_time: np.ndarray
    theta: np.ndarray
    valid: np.ndarray
    n_valid: np.ndarray
    b: float
    amplitude: np.ndarray


MIN_VALID_RINGS = 3


def ddm_uq_baseline(sf: StructureFunction, spec: RingSpectrum, selected_rings) -> DirectInversionResult:
    """Model-free MSD baseline by direct inversion of the structure function.

    The noise floor is the smaller of the lag-averaged D at the outermost
    ring and the cross-ring minimum of D at the first lag; amplitudes then
    come from the unbiased estimator, and each (q, dt) entry inverts
    D = A (1 - exp(-q^2 theta / 4)) + B for theta.  Lags with fewer than
    three valid rings are not reported; an all-invalid input yields an empty
    curve rather than an error.
    """
    selected_rings = np.asarray(selected_rings, dtype=np.int64)
    if np.setdiff1d(selected_rings, sf.rings).size:
        raise ValidationError("selected rings missing from structure function")
    if spec.j_max not in sf.rings or 1 not in sf.lag_idx:
        raise ValidationError(
            "baseline needs the outermost ring at all lags and every ring at lag 1"
        )
    if sf.rings.size < spec.j_max:
        raise ValidationError("baseline needs the structure function on all rings")

    b_tail = float(np.mean(sf.row(spec.j_max)))
    first_lag_col = sf.d[:, np.flatnonzero(sf.lag_idx == 1)[0]]
    b_di = min(b_tail, float(np.min(first_lag_col)))

    pre = 2.0 * spec.mean_power - b_di
    floor = amplitude_floor(spec)
    amp_all = np.maximum(pre, floor)

    sel_pos = np.searchsorted(sf.rings, selected_rings)
    d_sel = sf.d[sel_pos]
    amp = amp_all[selected_rings - 1]
    q = spec.q[selected_rings - 1]
    informative = pre[selected_rings - 1] > floor

    denom = amp[:, None] - d_sel + b_di
    valid = informative[:, None] & (denom > 0.0) & (amp[:, None] > 0.0)
    theta = np.full_like(d_sel, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = amp[:, None] / denom
        theta[valid] = (np.log(ratio) * (4.0 / q[:, None] ** 2))[valid]

    n_valid = valid.sum(axis=0)
    reported = n_valid >= MIN_VALID_RINGS
    med = np.empty(int(reported.sum()))
    for k, col in enumerate(np.flatnonzero(reported)):
        med[k] = np.median(theta[valid[:, col], col])
    msd = MsdCurve(sf.lag_time[reported], med)
    return DirectInversionResult(
        msd=msd, rings=selected_rings, lag_idx=sf.lag_idx, lag_time=sf.lag_time,
        theta=theta, valid=valid, n_valid=n_valid, b=b_di,
        amplitude=amp,
    )
