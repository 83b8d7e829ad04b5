"""Image stack I/O, normalization and tabular export.

The on-disk RAWSTACK layout is little-endian: an 8-byte magic ``AIUQSTK1``,
u32 version (=1), u32 n1, u32 n2, u32 n, f64 seconds per frame step, f64
micrometers per pixel (40 header bytes total), followed by ``n`` frames of
``n1 * n2`` float32 values in row-major order.  Intensities are stored as
32-bit floats on disk and promoted to 64-bit in memory.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .curves import ModuliCurve, MsdCurve
from .errors import CorruptFile, FormatError, IoError, ValidationError

MAGIC = b"AIUQSTK1"
VERSION = 1
HEADER = struct.Struct("<8sIIIIdd")
HEADER_BYTES = HEADER.size  # 40

MIN_SIDE = 4
MIN_FRAMES = 3


@dataclass(frozen=True)
class ImageStack:
    """A calibrated stack of ``n`` frames of ``n1 x n2`` pixel intensities.

    ``frames`` has shape (n, n1, n2) and is read-only after construction, so
    stacks are safe to share across threads.  ``degenerate`` marks a stack
    whose intensities were constant before normalization.
    """

    frames: np.ndarray
    dt_min: float
    px_size: float
    degenerate: bool = False

    def __post_init__(self):
        frames = np.ascontiguousarray(np.asarray(self.frames, dtype=np.float64))
        if frames.ndim != 3:
            raise ValidationError("frames must have shape (n, n1, n2)")
        n, n1, n2 = frames.shape
        if n1 < MIN_SIDE or n2 < MIN_SIDE or n < MIN_FRAMES:
            raise ValidationError(
                f"stack too small: need n1,n2 >= {MIN_SIDE} and n >= {MIN_FRAMES}, "
                f"got {n1}x{n2}x{n}"
            )
        if not (self.dt_min > 0 and self.px_size > 0):
            raise ValidationError("dt_min and px_size must be positive")
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)

    @property
    def n(self):
        return self.frames.shape[0]

    @property
    def n1(self):
        return self.frames.shape[1]

    @property
    def n2(self):
        return self.frames.shape[2]


def write_stack(stack: ImageStack, path) -> None:
    """Write ``stack`` in the RAWSTACK binary layout, bit-exact at float32."""
    header = HEADER.pack(
        MAGIC, VERSION, stack.n1, stack.n2, stack.n, stack.dt_min, stack.px_size
    )
    payload = stack.frames.astype("<f4").tobytes(order="C")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise IoError(f"cannot write stack to {path}: {exc}") from exc


def read_stack(path) -> ImageStack:
    """Read a RAWSTACK file, returning raw (un-normalized) intensities."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read stack from {path}: {exc}") from exc
    if len(raw) < HEADER_BYTES or raw[:8] != MAGIC:
        raise FormatError(f"{path}: missing RAWSTACK magic")
    magic, version, n1, n2, n, dt_min, px_size = HEADER.unpack_from(raw)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if n1 < MIN_SIDE or n2 < MIN_SIDE or n < MIN_FRAMES:
        raise CorruptFile(f"{path}: invalid dimensions {n1}x{n2}x{n}")
    if not (dt_min > 0 and px_size > 0 and np.isfinite(dt_min) and np.isfinite(px_size)):
        raise CorruptFile(f"{path}: invalid calibration dt={dt_min} px={px_size}")
    expected = n1 * n2 * n * 4
    if expected > (1 << 62) or len(raw) - HEADER_BYTES != expected:
        raise CorruptFile(
            f"{path}: payload is {len(raw) - HEADER_BYTES} bytes, expected {expected}"
        )
    frames = np.frombuffer(raw, dtype="<f4", offset=HEADER_BYTES)
    frames = frames.reshape(n, n1, n2).astype(np.float64)
    return ImageStack(frames=frames, dt_min=dt_min, px_size=px_size)


def normalize(stack: ImageStack) -> ImageStack:
    """Rescale intensities to [0, 1] with one affine map over the full stack.

    Constant stacks map to all zeros and are flagged ``degenerate`` instead of
    raising; downstream estimation refuses degenerate stacks.
    """
    lo = float(stack.frames.min())
    hi = float(stack.frames.max())
    if hi == lo:
        warnings.warn("constant stack: normalization is degenerate", stacklevel=2)
        zeros = np.zeros_like(stack.frames)
        return ImageStack(zeros, stack.dt_min, stack.px_size, degenerate=True)
    frames = (stack.frames - lo) / (hi - lo)
    return ImageStack(frames, stack.dt_min, stack.px_size, degenerate=False)


@dataclass(frozen=True)
class CurveTable:
    """Named columns of real values; the first column must strictly increase."""

    columns: tuple
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != len(self.columns):
            raise ValidationError("rows must be 2-D with one entry per column")
        if rows.shape[0] > 1 and np.any(np.diff(rows[:, 0]) <= 0):
            raise ValidationError(
                f"column {self.columns[0]!r} must be strictly increasing"
            )
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "rows", rows)


def _fmt(value: float) -> str:
    return "" if np.isnan(value) else format(value, ".17g")


def export_curve(table: CurveTable, path) -> None:
    """Write ``table`` as CSV with a header row at full double precision."""
    lines = [",".join(table.columns)]
    for row in table.rows:
        lines.append(",".join(format(v, ".17g") for v in row))
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write table to {path}: {exc}") from exc


def read_curve(path) -> CurveTable:
    """Read a CSV produced by :func:`export_curve`; empty cells become NaN."""
    try:
        with open(path, "r", encoding="ascii") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise IoError(f"cannot read table from {path}: {exc}") from exc
    if not lines:
        raise FormatError(f"{path}: empty CSV")
    columns = tuple(lines[0].split(","))
    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != len(columns):
            raise CorruptFile(f"{path}: ragged row {ln!r}")
        rows.append([float(c) if c else np.nan for c in cells])
    rows = np.asarray(rows, dtype=float).reshape(len(rows), len(columns))
    return CurveTable(columns=columns, rows=rows)


def msd_to_table(curve: MsdCurve) -> CurveTable:
    """MSD export layout: lag_time,msd,msd_lower,msd_upper (bounds may be empty)."""
    m = len(curve)
    lower = curve.lower if curve.lower is not None else np.full(m, np.nan)
    upper = curve.upper if curve.upper is not None else np.full(m, np.nan)
    rows = np.column_stack([curve.lag_time, curve.msd, lower, upper])
    return CurveTable(("lag_time", "msd", "msd_lower", "msd_upper"), rows)


def export_msd(curve: MsdCurve, path) -> None:
    table = msd_to_table(curve)
    lines = [",".join(table.columns)]
    for row in table.rows:
        lines.append(",".join(_fmt(v) for v in row))
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write MSD curve to {path}: {exc}") from exc


def read_msd(path) -> MsdCurve:
    """Parse ``lag_time,msd[,msd_lower,msd_upper]`` CSV into an MsdCurve."""
    table = read_curve(path)
    cols = {name: table.rows[:, i] for i, name in enumerate(table.columns)}
    if "lag_time" not in cols or "msd" not in cols:
        raise FormatError(f"{path}: need lag_time and msd columns")
    lower = cols.get("msd_lower")
    upper = cols.get("msd_upper")
    if lower is None or np.all(np.isnan(lower)):
        lower = upper = None
    return MsdCurve(cols["lag_time"], cols["msd"], lower=lower, upper=upper)


def moduli_to_table(curve: ModuliCurve) -> CurveTable:
    """Moduli export layout: omega,g_prime,g_loss in ascending frequency."""
    order = np.argsort(curve.omega)
    rows = np.column_stack(
        [curve.omega[order], curve.g_prime[order], curve.g_loss[order]]
    )
    return CurveTable(("omega", "g_prime", "g_loss"), rows)


def export_moduli(curve: ModuliCurve, path) -> None:
    export_curve(moduli_to_table(curve), path)
