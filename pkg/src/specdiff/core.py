"""Shared data types and CSV ingestion.

Two file layouts are supported. A spectral series::

    # frame_interval_s=0.0005 t0_s=0.0
    wavelength_nm,535.0,535.04,...
    0,12,15,...
    1,11,14,...

and a ZPL trace::

    t_s,lambda_nm
    0.0,539.55
    0.0005,539.56

Floats are written with ``repr`` so that ``parse(write(x))`` is exact.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

STEP_TOL = 1e-9  # seconds; tolerance on constant sampling step


class ValidationError(ValueError):
    """A value violates a type invariant."""


class FormatError(ValidationError):
    """A file does not follow its documented layout."""


class MalformedHeaderError(FormatError):
    pass


class NonMonotonicAxisError(ValidationError):
    pass


class RaggedRowError(FormatError):
    pass


class NonFiniteValueError(ValidationError):
    pass


class DuplicateTimestampError(ValidationError):
    pass


class NonIncreasingTimeError(ValidationError):
    pass


class NonUniformSamplingError(ValidationError):
    pass


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SpectralSeries:
    """Time-ordered spectrometer frames on a shared wavelength axis.

    Attributes
    ----------
    wavelength_axis : ndarray, shape (n_bins,)
        Bin centres in nm, strictly increasing.
    frames : ndarray, shape (n_frames, n_bins)
        Intensity counts, finite and non-negative.
    frame_interval : float
        Seconds between consecutive frames.
    t0 : float
        Timestamp of the first frame in seconds.
    """

    wavelength_axis: np.ndarray
    frames: np.ndarray
    frame_interval: float
    t0: float = 0.0

    def __post_init__(self):
        axis = _frozen(self.wavelength_axis)
        frames = _frozen(self.frames)
        if frames.ndim == 1:
            frames = _frozen(frames[None, :])
        if axis.ndim != 1 or axis.size < 2:
            raise ValidationError("wavelength axis must be 1-d with at least 2 bins")
        if not np.all(np.isfinite(axis)):
            raise NonFiniteValueError("non-finite value in wavelength axis")
        if np.any(np.diff(axis) <= 0):
            raise NonMonotonicAxisError("non-monotonic axis: wavelength axis must be strictly increasing")
        if frames.ndim != 2 or frames.shape[1] != axis.size:
            raise RaggedRowError(
                f"frames have {frames.shape[-1]} bins, axis has {axis.size}")
        if frames.shape[0] < 1:
            raise ValidationError("series holds no frames")
        if not np.all(np.isfinite(frames)):
            raise NonFiniteValueError("non-finite intensity")
        if np.any(frames < 0):
            raise ValidationError("negative intensity")
        if not (np.isfinite(self.frame_interval) and self.frame_interval > 0):
            raise ValidationError("frame_interval must be > 0")
        object.__setattr__(self, "wavelength_axis", axis)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "frame_interval", float(self.frame_interval))
        object.__setattr__(self, "t0", float(self.t0))

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def n_bins(self):
        return self.wavelength_axis.size

    @property
    def bin_width(self):
        return float(np.median(np.diff(self.wavelength_axis)))

    @property
    def timestamps(self):
        return self.t0 + self.frame_interval * np.arange(self.n_frames)

    def window(self, lo, hi):
        """Boolean mask of bins with ``lo <= wavelength <= hi``."""
        return (self.wavelength_axis >= lo) & (self.wavelength_axis <= hi)

    def restrict(self, lo, hi):
        """Copy of the series keeping only bins inside ``[lo, hi]``."""
        m = self.window(lo, hi)
        return SpectralSeries(self.wavelength_axis[m], self.frames[:, m],
                              self.frame_interval, self.t0)

    def slice_frames(self, start, stop):
        return SpectralSeries(self.wavelength_axis, self.frames[start:stop],
                              self.frame_interval,
                              self.t0 + start * self.frame_interval)


@dataclass(frozen=True)
class ZplTrace:
    """Scalar wavelength-vs-time series sampled on a uniform grid."""

    timestamps: np.ndarray
    values: np.ndarray
    label: str = ""
    reference_nm: float | None = None

    def __post_init__(self):
        t = _frozen(self.timestamps)
        v = _frozen(self.values)
        if t.ndim != 1 or v.ndim != 1 or t.size != v.size:
            raise ValidationError("timestamps and values must be 1-d of equal length")
        if t.size == 0:
            raise ValidationError("empty trace")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise NonFiniteValueError("non-finite value in trace")
        if t.size > 1:
            dt = np.diff(t)
            if np.any(dt == 0):
                raise DuplicateTimestampError("duplicate timestamps")
            if np.any(dt < 0):
                raise NonIncreasingTimeError("timestamps must be strictly increasing")
            if np.max(np.abs(dt - dt[0])) > STEP_TOL:
                raise NonUniformSamplingError(
                    "non-uniform sampling: timestamps must have a constant step")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    @property
    def step(self):
        """Sampling step in seconds (nan for a single sample)."""
        if self.values.size < 2:
            return float("nan")
        return float((self.timestamps[-1] - self.timestamps[0]) / (self.values.size - 1))

    @property
    def fs(self):
        return 1.0 / self.step

    def slice(self, start, stop=None):
        return ZplTrace(self.timestamps[start:stop], self.values[start:stop],
                        self.label, self.reference_nm)

    def with_values(self, values):
        return ZplTrace(self.timestamps, values, self.label, self.reference_nm)

    @classmethod
    def uniform(cls, values, step, t0=0.0, label="", reference_nm=None):
        values = np.asarray(values, dtype=float)
        return cls(t0 + step * np.arange(values.size), values, label, reference_nm)


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    total: int = field(default=-1)

    def __post_init__(self):
        edges = _frozen(self.bin_edges)
        counts = _frozen(self.counts, dtype=np.int64)
        if counts.size != edges.size - 1:
            raise ValidationError("len(counts) must equal len(bin_edges) - 1")
        if np.any(counts < 0):
            raise ValidationError("negative histogram count")
        total = int(counts.sum()) if self.total < 0 else int(self.total)
        if total != int(counts.sum()):
            raise ValidationError("histogram total does not match counts")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "total", total)

    def to_dict(self):
        return {"bin_edges": self.bin_edges.tolist(),
                "counts": self.counts.tolist(), "total": self.total}


# ---------------------------------------------------------------------------
# CSV I/O

_HEADER_RE = re.compile(
    r"^#\s*frame_interval_s=(?P<dt>\S+)\s+t0_s=(?P<t0>\S+)\s*$")


def _fmt(x):
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _float(tok, what):
    try:
        return float(tok)
    except ValueError:
        raise FormatError(f"cannot parse {what}: {tok!r}") from None


def write_spectral_series(series, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# frame_interval_s={series.frame_interval!r} t0_s={series.t0!r}\n")
        fh.write("wavelength_nm," + ",".join(repr(float(w)) for w in series.wavelength_axis) + "\n")
        for i, row in enumerate(series.frames):
            fh.write(f"{i}," + ",".join(map(_fmt, row)) + "\n")
    return path


def parse_spectral_series(path):
    """Read a spectral series CSV and validate it.

    Raises
    ------
    MalformedHeaderError, NonMonotonicAxisError, RaggedRowError, NonFiniteValueError
    """
    path = Path(path)
    with path.open(newline="") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 2:
        raise MalformedHeaderError("file too short for header and axis lines")
    m = _HEADER_RE.match(lines[0].strip())
    if m is None:
        raise MalformedHeaderError(
            "malformed header: expected '# frame_interval_s=<float> t0_s=<float>'")
    try:
        dt, t0 = float(m["dt"]), float(m["t0"])
    except ValueError:
        raise MalformedHeaderError("malformed header: unparseable number") from None
    axis_tok = lines[1].split(",")
    if axis_tok[0].strip() != "wavelength_nm":
        raise MalformedHeaderError("malformed header: second line must start with 'wavelength_nm'")
    axis = np.array([_float(t, "wavelength") for t in axis_tok[1:]])
    if not np.all(np.isfinite(axis)):
        raise NonFiniteValueError("non-finite value in wavelength axis")
    if np.any(np.diff(axis) <= 0):
        raise NonMonotonicAxisError("non-monotonic axis")
    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        tok = line.split(",")
        if len(tok) != axis.size + 1:
            raise RaggedRowError(
                f"ragged row at line {lineno}: {len(tok) - 1} values, expected {axis.size}")
        if int(_float(tok[0], "frame index")) != len(rows):
            raise FormatError(f"frame index out of sequence at line {lineno}")
        vals = [_float(t, "intensity") for t in tok[1:]]
        rows.append(vals)
    frames = np.array(rows, dtype=float).reshape(len(rows), axis.size)
    if not np.all(np.isfinite(frames)):
        raise NonFiniteValueError("non-finite intensity value")
    return SpectralSeries(axis, frames, dt, t0)


def write_zpl_trace(trace, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "lambda_nm"])
        for t, v in zip(trace.timestamps, trace.values):
            w.writerow([repr(float(t)), repr(float(v))])
    return path


def parse_zpl_trace(path, label=None):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["t_s", "lambda_nm"]:
            raise MalformedHeaderError("malformed header: expected 't_s,lambda_nm'")
        t, v = [], []
        for row in reader:
            if not row:
                continue
            if len(row) < 2:
                raise RaggedRowError(f"short row: {row!r}")
            t.append(_float(row[0], "timestamp"))
            v.append(_float(row[1], "wavelength"))
    return ZplTrace(np.array(t), np.array(v), label if label is not None else path.stem)
