"""Per-frame peak extraction and photon-correlation fits."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import SpectralSeries, ValidationError, ZplTrace
from .lsq import FitResult, least_squares_fit

log = logging.getLogger(__name__)

MIN_WINDOW_BINS = 5
MAX_FAILED_FRACTION = 0.2


class ExtractionError(RuntimeError):
    pass


def lorentzian(x, params):
    """Lorentzian line plus constant offset.

    ``params = (center, fwhm, amplitude, offset)``; ``amplitude`` is the peak
    height above ``offset``.
    """
    c, w, a, o = params
    hw2 = 0.25 * w * w
    return a * hw2 / ((x - c) ** 2 + hw2) + o


def lorentzian_jac(x, params):
    c, w, a, o = params
    hw2 = 0.25 * w * w
    d = x - c
    den = d * d + hw2
    shape = hw2 / den
    J = np.empty((np.size(x), 4))
    J[:, 0] = 2 * a * hw2 * d / den ** 2
    J[:, 1] = a * 0.5 * w * d * d / den ** 2
    J[:, 2] = shape
    J[:, 3] = 1.0
    return J


@dataclass(frozen=True)
class PeakFit:
    center: float
    fwhm: float
    amplitude: float
    offset: float
    residual_rms: float
    converged: bool


def fit_peak(x, y, max_iter=200):
    """Fit a single Lorentzian + offset to ``y(x)`` on a window.

    Initial guess: centre at the brightest bin, amplitude ``max - median``,
    width three bins, offset the median.  The centre is bounded to the window.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < MIN_WINDOW_BINS:
        raise ValidationError(f"window narrower than {MIN_WINDOW_BINS} bins")
    dx = float(np.median(np.diff(x)))
    med = float(np.median(y))
    k = int(np.argmax(y))
    amp = max(float(y[k]) - med, 1e-12)
    init = [x[k], 3 * dx, amp, med]
    lo = [x[0], 1e-3 * dx, 0.0, -np.inf]
    hi = [x[-1], x[-1] - x[0], np.inf, np.inf]
    res = least_squares_fit(lorentzian, init, (x, y), bounds=(lo, hi),
                            jac=lorentzian_jac, max_iter=max_iter)
    c, w, a, o = res.params
    rms = float(np.sqrt(2 * res.cost / x.size))
    # a flat window holds no peak, whatever the solver reports
    ok = res.converged and w > 0 and a > 0 and np.ptp(y) > 0
    return PeakFit(float(c), float(w), float(a), float(o), rms, bool(ok))


def _trace_from_window(series, lo, hi, label):
    mask = series.window(lo, hi)
    if mask.sum() < MIN_WINDOW_BINS:
        raise ValidationError(
            f"window [{lo}, {hi}] nm holds {mask.sum()} bins; need >= {MIN_WINDOW_BINS}")
    x = series.wavelength_axis[mask]
    out = np.empty(series.n_frames)
    failed = 0
    prev = np.nan
    for i, frame in enumerate(series.frames[:, mask]):
        pk = fit_peak(x, frame)
        if pk.converged:
            prev = pk.center
        else:
            failed += 1
            if np.isnan(prev):
                # nothing to carry forward yet; keep the fitted centre
                prev = pk.center
        out[i] = prev
    if failed > MAX_FAILED_FRACTION * series.n_frames:
        raise ExtractionError(
            f"{label}: {failed}/{series.n_frames} frames failed to converge "
            f"in window [{lo}, {hi}] nm")
    return ZplTrace(series.timestamps, out, label), failed


def extract_traces(series: SpectralSeries, zpl_window, ref_window, label="zpl"):
    """Fit every frame inside two wavelength windows.

    Returns
    -------
    zpl, ref : ZplTrace
        Fitted centres per frame.  A frame whose fit does not converge repeats
        the previous frame's value.
    counts : dict
        Number of non-converged frames per window.
    """
    zlo, zhi = sorted(map(float, zpl_window))
    rlo, rhi = sorted(map(float, ref_window))
    ax = series.wavelength_axis
    for lo, hi in ((zlo, zhi), (rlo, rhi)):
        if lo < ax[0] or hi > ax[-1]:
            raise ValidationError(f"window [{lo}, {hi}] nm exceeds the wavelength axis")
    if zlo <= rhi and rlo <= zhi:
        raise ValidationError("ZPL and reference windows overlap")
    zpl, nz = _trace_from_window(series, zlo, zhi, label)
    ref, nr = _trace_from_window(series, rlo, rhi, "reference")
    if nz or nr:
        log.info("non-converged frames: zpl=%d ref=%d", nz, nr)
    return zpl, ref, {"zpl": nz, "reference": nr}


# ---------------------------------------------------------------------------
# g2(t) antibunching

@dataclass(frozen=True)
class G2Fit:
    g2_0: float
    tau_antibunch: float
    g2_inf: float
    residual_rms: float
    converged: bool = True

    def __call__(self, t):
        return g2_model(t, self.g2_0, self.tau_antibunch)

    def to_dict(self):
        return {"g2_0": self.g2_0, "tau_antibunch_s": self.tau_antibunch,
                "g2_inf": self.g2_inf, "residual_rms": self.residual_rms,
                "converged": self.converged}


def g2_model(t, g2_0, tau):
    """Antibunching dip with no bunching shoulder: ``1 - (1 - g2_0) exp(-|t|/tau)``."""
    return 1.0 - (1.0 - g2_0) * np.exp(-np.abs(t) / tau)


def fit_g2(delays, g2_values):
    """Fit ``g2_0`` and ``tau_antibunch`` with ``g2_inf`` fixed to 1."""
    t = np.asarray(delays, dtype=float)
    y = np.asarray(g2_values, dtype=float)
    if t.size != y.size:
        raise ValidationError("delays and g2 values differ in length")
    if t.size < 4:
        raise ValidationError("need at least 4 points for a g2 fit")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise ValidationError("non-finite g2 input")
    if np.ptp(y) == 0:
        raise ValidationError("all g2 values identical")
    tadj = np.abs(t)
    scale = float(np.max(tadj))
    if scale == 0:
        raise ValidationError("all delays are zero")
    u = tadj / scale

    def model(u, p):
        return 1.0 - (1.0 - p[0]) * np.exp(-u / p[1])

    def jac(u, p):
        e = np.exp(-u / p[1])
        return np.column_stack([e, -(1.0 - p[0]) * e * u / p[1] ** 2])

    # initial guess from the data: depth at the smallest |t|, width where the
    # dip has recovered halfway
    order = np.argsort(u)
    g0 = float(np.clip(y[order[0]], 0.0, 0.99))
    half = 1.0 - 0.5 * (1.0 - g0)
    above = u[order][y[order] >= half]
    tau0 = float(above[0]) / np.log(2) if above.size and above[0] > 0 else 0.1
    tau0 = float(np.clip(tau0, 1e-6, 10.0))
    res = least_squares_fit(model, [g0, tau0], (u, y),
                            bounds=([0.0, 1e-9], [1.0 - 1e-12, np.inf]), jac=jac)
    g2_0, tau_u = res.params
    rms = float(np.sqrt(2 * res.cost / y.size))
    return G2Fit(float(g2_0), float(tau_u * scale), 1.0, rms, res.converged)
