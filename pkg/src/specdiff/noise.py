"""Memory diagnostics for a scalar wavelength trace.

Autocorrelation with the Bartlett-type 95 % band, log-log power-law fits,
the one-sided periodogram, and a piecewise log-log fit of the PSD with at
most two change points chosen by exhaustive search.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ValidationError, ZplTrace

Z95 = 1.96


@dataclass(frozen=True)
class AcfResult:
    lags: np.ndarray
    r: np.ndarray
    band: np.ndarray
    n: int

    def first_band_crossing(self):
        """Smallest lag ``k >= 1`` with ``|r(k)| <= band(k)``, or None."""
        inside = np.nonzero(np.abs(self.r[1:]) <= self.band[1:])[0]
        return int(self.lags[1:][inside[0]]) if inside.size else None


@dataclass(frozen=True)
class PsdResult:
    freqs: np.ndarray
    power: np.ndarray
    fs: float
    detrended: bool

    @property
    def df(self):
        return float(self.freqs[1] - self.freqs[0])


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    intercept: float
    fit_range: tuple
    r_squared: float

    def to_dict(self):
        return {"exponent": self.exponent, "intercept": self.intercept,
                "fit_range": list(self.fit_range), "r_squared": self.r_squared}


@dataclass(frozen=True)
class SegmentedPsdFit:
    change_points: tuple  # indices into the non-DC frequency bins
    segments: tuple  # PowerLawFit per segment; fit_range is a half-open bin range
    total_rms: float
    freqs: np.ndarray = field(repr=False, default=None)

    def breakpoint_freqs(self):
        return [float(self.freqs[c]) for c in self.change_points]

    def to_dict(self):
        return {
            "change_points": list(self.change_points),
            "breakpoint_hz": self.breakpoint_freqs(),
            "slopes": [s.exponent for s in self.segments],
            "segments": [s.to_dict() for s in self.segments],
            "total_rms": self.total_rms,
        }


def _values(trace):
    return trace.values if isinstance(trace, ZplTrace) else np.asarray(trace, dtype=float)


def acf(trace, max_lag=100):
    """Biased sample autocorrelation and its 95 % significance band.

    ``band[k] = 1.96 * sqrt((1 + 2 * sum_{i<k} r(i)**2) / N)``, with the sum
    running over ``1 <= i <= k-1``.
    """
    x = _values(trace)
    n = x.size
    if max_lag < 1 or max_lag >= n / 2:
        raise ValidationError(f"max_lag must satisfy 1 <= max_lag < N/2 (N={n})")
    d = x - x.mean()
    c0 = d @ d
    if c0 == 0 or np.ptp(x) == 0:
        raise ValidationError("constant trace has zero variance")
    r = np.empty(max_lag + 1)
    r[0] = 1.0
    for k in range(1, max_lag + 1):
        r[k] = (d[:-k] @ d[k:]) / c0
    cum = np.concatenate([[0.0, 0.0], np.cumsum(r[1:max_lag] ** 2)])
    band = Z95 * np.sqrt((1 + 2 * cum) / n)
    return AcfResult(np.arange(max_lag + 1), r, band, n)


def _ols(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(icpt), float(np.clip(r2, 0.0, 1.0))


def fit_acf_power_law(result: AcfResult, region):
    """OLS fit of ``log10 r(k)`` on ``log10 k`` over the inclusive lag ``region``."""
    k0, k1 = int(region[0]), int(region[1])
    if k0 < 1:
        raise ValidationError("power-law region must start at lag >= 1")
    if k1 - k0 + 1 < 3:
        raise ValidationError("power-law region needs at least 3 lags")
    if k1 > result.lags[-1]:
        raise ValidationError("region exceeds computed lags")
    r = result.r[k0:k1 + 1]
    if np.any(r <= 0):
        raise ValidationError("non-positive autocorrelation inside the fit region")
    slope, icpt, r2 = _ols(np.log10(result.lags[k0:k1 + 1]), np.log10(r))
    return PowerLawFit(slope, icpt, (k0, k1), r2)


def default_acf_regions(result: AcfResult):
    """Decay and tail regions split at the first band crossing.

    The tail region is truncated at the first non-positive ``r`` after the
    split; either region is None when fewer than 3 usable lags remain.
    """
    last = int(result.lags[-1])
    split = result.first_band_crossing() or last + 1
    decay = (1, split - 1) if split - 1 >= 3 else None
    tail = None
    if split <= last:
        nonpos = np.nonzero(result.r[split:] <= 0)[0]
        end = split + int(nonpos[0]) - 1 if nonpos.size else last
        if end - split + 1 >= 3:
            tail = (split, end)
    return decay, tail


def periodogram_psd(trace, detrend=False, fs=None, n_blocks=1):
    """One-sided periodogram normalised so that ``sum(power) * df`` equals the
    variance of the (mean-removed, optionally linearly detrended) signal.

    ``n_blocks > 1`` averages periodograms of non-overlapping blocks.
    """
    if isinstance(trace, ZplTrace):
        if len(trace) > 1:
            dt = np.diff(trace.timestamps)
            if np.max(np.abs(dt - dt[0])) > 1e-9:
                raise ValidationError("non-uniform sampling")
        fs = trace.fs if fs is None else fs
    elif fs is None:
        raise ValidationError("fs required for a bare array")
    x = _values(trace)
    if x.size < 16:
        raise ValidationError("periodogram needs at least 16 samples")
    m = x.size // n_blocks
    if m < 16:
        raise ValidationError("blocks shorter than 16 samples")
    acc = None
    for b in range(n_blocks):
        seg = x[b * m:(b + 1) * m]
        t = np.arange(m, dtype=float)
        if detrend:
            slope, icpt = np.polyfit(t, seg, 1)
            seg = seg - (slope * t + icpt)
        else:
            seg = seg - seg.mean()
        X = np.fft.rfft(seg)
        p = np.abs(X) ** 2 / (fs * m)
        # fold negative frequencies onto the positive ones (not DC or Nyquist)
        if m % 2 == 0:
            p[1:-1] *= 2
        else:
            p[1:] *= 2
        acc = p if acc is None else acc + p
    power = acc / n_blocks
    freqs = np.fft.rfftfreq(m, d=1.0 / fs)
    return PsdResult(freqs, power, float(fs), bool(detrend))


def fit_power_law(freqs, power, fmin=None, fmax=None):
    """Log-log OLS of power against frequency; returns ``PowerLawFit`` whose
    ``exponent`` is the slope (negative for 1/f-type spectra)."""
    f = np.asarray(freqs)
    p = np.asarray(power)
    m = (f > 0) & (p > 0)
    if fmin is not None:
        m &= f >= fmin
    if fmax is not None:
        m &= f <= fmax
    idx = np.nonzero(m)[0]
    if idx.size < 3:
        raise ValidationError("fewer than 3 positive bins in the fit range")
    slope, icpt, r2 = _ols(np.log10(f[m]), np.log10(p[m]))
    return PowerLawFit(slope, icpt, (int(idx[0]), int(idx[-1]) + 1), r2)


class _Segments:
    """O(1) least-squares line SSE for any contiguous index range via prefix sums."""

    def __init__(self, x, y):
        z = np.zeros(1)
        self.S1 = np.concatenate([z, np.cumsum(np.ones_like(x))])
        self.Sx = np.concatenate([z, np.cumsum(x)])
        self.Sy = np.concatenate([z, np.cumsum(y)])
        self.Sxx = np.concatenate([z, np.cumsum(x * x)])
        self.Sxy = np.concatenate([z, np.cumsum(x * y)])
        self.Syy = np.concatenate([z, np.cumsum(y * y)])

    def sse(self, i, j):
        """SSE of the best line over ``[i, j)``; ``i``/``j`` may be arrays."""
        n = self.S1[j] - self.S1[i]
        sx = self.Sx[j] - self.Sx[i]
        sy = self.Sy[j] - self.Sy[i]
        sxx = self.Sxx[j] - self.Sxx[i]
        sxy = self.Sxy[j] - self.Sxy[i]
        syy = self.Syy[j] - self.Syy[i]
        vx = sxx - sx * sx / n
        cxy = sxy - sx * sy / n
        vy = syy - sy * sy / n
        with np.errstate(divide="ignore", invalid="ignore"):
            out = vy - np.where(vx > 0, cxy * cxy / vx, 0.0)
        return np.maximum(out, 0.0)


def fit_psd_segments(psd: PsdResult, max_change_points=2, min_segment=5,
                     rel_gain=1e-9):
    """Piecewise log-log linear fit of a PSD with at most ``max_change_points``.

    Segments are contiguous runs of the non-DC bins, each at least
    ``min_segment`` long; spectra too short for ``max_change_points`` get as
    many as fit.  For every admissible number of change points the
    exact minimum of the total squared error is found; an extra change point
    is kept only if it lowers the error by more than ``rel_gain`` relative.
    """
    if max_change_points not in (0, 1, 2):
        raise ValidationError("at most 2 change points are supported")
    f, p = psd.freqs, psd.power
    keep = f > 0
    f, p = f[keep], p[keep]
    if np.any(p <= 0):
        raise ValidationError("PSD has non-positive bins; log-log fit undefined")
    n = f.size
    if n < min_segment or n < 3:
        raise ValidationError(f"too few bins ({n}) for a fit with min_segment={min_segment}")
    # fewer change points when the spectrum is too short to hold them all
    max_change_points = min(max_change_points, n // min_segment - 1)
    x, y = np.log10(f), np.log10(p)
    seg = _Segments(x, y)
    best = {0: (float(seg.sse(0, n)), ())}
    if max_change_points >= 1:
        b = np.arange(min_segment, n - min_segment + 1)
        tot = seg.sse(0, b) + seg.sse(b, n)
        k = int(np.argmin(tot))
        best[1] = (float(tot[k]), (int(b[k]),))
    if max_change_points >= 2:
        bsel, bval = None, np.inf
        for b1 in range(min_segment, n - 2 * min_segment + 1):
            b2 = np.arange(b1 + min_segment, n - min_segment + 1)
            tot = seg.sse(0, b1) + seg.sse(b1, b2) + seg.sse(b2, n)
            k = int(np.argmin(tot))
            if tot[k] < bval:
                bval, bsel = float(tot[k]), (b1, int(b2[k]))
        best[2] = (bval, bsel)
    # the prefix-sum SSE cancels to about eps * sum(y**2); gains below that are noise
    floor = 64 * np.finfo(float).eps * float(y @ y + n)
    chosen = 0
    for m in range(1, max_change_points + 1):
        if best[m][0] < best[chosen][0] * (1 - rel_gain) - floor:
            chosen = m
    cps = best[chosen][1]
    edges = (0, *cps, n)
    segments = []
    sse = 0.0
    for a, bnd in zip(edges[:-1], edges[1:]):
        slope, icpt, r2 = _ols(x[a:bnd], y[a:bnd])
        res = y[a:bnd] - (slope * x[a:bnd] + icpt)
        sse += float(res @ res)
        segments.append(PowerLawFit(slope, icpt, (a, bnd), r2))
    return SegmentedPsdFit(tuple(cps), tuple(segments), float(np.sqrt(sse / n)), f)


def log_bin_psd(psd: PsdResult, bins_per_decade=10, min_count=8):
    """Average the periodogram inside logarithmically spaced frequency bins.

    Adjacent bins are merged until each holds at least ``min_count`` raw
    ordinates, which matters at low frequency where log bins are narrower
    than the frequency resolution.  Output frequencies are the geometric
    centres of the occupied bins; a zero-power DC bin is kept at the front
    so that ``freqs[0] == 0`` as for a raw periodogram.
    """
    f, p = psd.freqs[1:], psd.power[1:]
    lo, hi = np.log10(f[0]), np.log10(f[-1])
    n_edges = max(int(np.ceil((hi - lo) * bins_per_decade)), 1) + 1
    edges = np.logspace(lo, hi, n_edges)
    edges[-1] = np.nextafter(edges[-1], np.inf)
    idx = np.searchsorted(edges, f, side="right") - 1
    out_f, out_p = [], []
    start = 0
    bounds = np.flatnonzero(np.diff(idx)) + 1
    for stop in [*bounds, f.size]:
        if stop - start < min_count and stop != f.size:
            continue
        if stop - start < min_count and out_f:
            # fold a short tail into the previous bin
            prev_start = start_prev
            sel = slice(prev_start, stop)
            out_f[-1] = 10 ** np.mean(np.log10(f[sel]))
            out_p[-1] = p[sel].mean()
        else:
            sel = slice(start, stop)
            out_f.append(10 ** np.mean(np.log10(f[sel])))
            out_p.append(p[sel].mean())
            start_prev = start
        start = stop
    return PsdResult(np.concatenate([[0.0], out_f]), np.concatenate([[0.0], out_p]),
                     psd.fs, psd.detrended)
