"""Classical extrapolation baselines: straight line, quintic, and sinusoid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ValidationError, ZplTrace
from ..lsq import least_squares_fit
from .train import ForecastResult

BASELINE_KINDS = ("linear", "poly5", "sine")
MIN_HISTORY = {"linear": 2, "poly5": 6, "sine": 4}


def _axis(history):
    if isinstance(history, ZplTrace):
        t = history.timestamps
        step = history.step if len(history) > 1 else 1.0
        return t, history.values, step
    y = np.asarray(history, dtype=float)
    return np.arange(y.size, dtype=float), y, 1.0


def fit_polynomial(t, y, degree):
    """Least-squares polynomial on ``t`` mapped to ``[-1, 1]``; returns a callable."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < degree + 1:
        raise ValidationError(f"degree-{degree} fit needs {degree + 1} points, got {t.size}")
    lo, hi = t.min(), t.max()
    if hi == lo:
        raise ValidationError("singular design matrix: all sample times equal")
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    V = np.polynomial.legendre.legvander((t - mid) / half, degree)
    coef, _, rank, _ = np.linalg.lstsq(V, y, rcond=None)
    if rank < degree + 1:
        raise ValidationError("singular design matrix")
    return lambda s: np.polynomial.legendre.legval((np.asarray(s, dtype=float) - mid) / half, coef)


@dataclass(frozen=True)
class SineFit:
    amplitude: float
    omega: float
    phase: float
    offset: float
    converged: bool

    def __call__(self, t):
        return self.amplitude * np.sin(self.omega * np.asarray(t, dtype=float) + self.phase) + self.offset


def _sine(u, p):
    return p[0] * np.sin(p[1] * u + p[2]) + p[3]


def _sine_jac(u, p):
    arg = p[1] * u + p[2]
    c = np.cos(arg)
    return np.column_stack([np.sin(arg), p[0] * u * c, p[0] * c, np.ones_like(u)])


def fit_sine(t, y):
    """Fit ``a sin(omega t + phi) + c``.

    The frequency is seeded from the peak of a zero-padded FFT, amplitude and
    phase from a linear fit at that frequency; the trust-region solver then
    refines all four.  The returned amplitude is non-negative and the phase
    lies in ``(-pi, pi]``.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < MIN_HISTORY["sine"]:
        raise ValidationError("sine fit needs at least 4 points")
    t0 = t[0]
    span = t[-1] - t0
    if span <= 0:
        raise ValidationError("singular design matrix: all sample times equal")
    u = (t - t0) / span  # fit on [0, 1]
    du = float(np.median(np.diff(u)))
    yc = y - y.mean()
    nfft = 8 * max(16, 1 << int(np.ceil(np.log2(y.size))))
    spec = np.abs(np.fft.rfft(yc, nfft))
    f = np.fft.rfftfreq(nfft, du)
    k = int(np.argmax(spec[1:])) + 1
    w0 = 2 * np.pi * f[k]
    D = np.column_stack([np.sin(w0 * u), np.cos(w0 * u), np.ones_like(u)])
    (s, c, off), *_ = np.linalg.lstsq(D, y, rcond=None)
    init = [np.hypot(s, c), w0, np.arctan2(c, s), off]
    if init[0] == 0:
        init[0] = max(float(np.std(y)), 1e-12)
    res = least_squares_fit(_sine, init, (u, y), jac=_sine_jac,
                            bounds=([-np.inf, 0.0, -np.inf, -np.inf], [np.inf] * 4))
    a, w, phi, off = res.params
    if a < 0:
        a, phi = -a, phi + np.pi
    omega = w / span
    phase = phi - omega * t0
    phase = float(np.angle(np.exp(1j * phase)))
    return SineFit(float(a), float(omega), phase, float(off), bool(res.converged))


def baseline_forecast(kind, history, horizon=8, window=None):
    """Fit ``kind`` on the trailing ``window`` samples and extrapolate.

    Parameters
    ----------
    kind : {"linear", "poly5", "sine"}
    history : ZplTrace or array_like
        Uniformly sampled values; plain arrays use the sample index as time.
    window : int, optional
        Number of trailing samples to fit; defaults to the whole history.
    """
    if kind not in BASELINE_KINDS:
        raise ValidationError(f"unknown baseline {kind!r}; choose from {BASELINE_KINDS}")
    if horizon < 1:
        raise ValidationError("horizon must be >= 1")
    t, y, step = _axis(history)
    if window is not None:
        t, y = t[-window:], y[-window:]
    if y.size < MIN_HISTORY[kind]:
        raise ValidationError(f"{kind} baseline needs >= {MIN_HISTORY[kind]} samples, got {y.size}")
    future = t[-1] + step * np.arange(1, horizon + 1)
    if kind == "linear":
        pred = fit_polynomial(t, y, 1)(future)
    elif kind == "poly5":
        pred = fit_polynomial(t, y, 5)(future)
    else:
        pred = fit_sine(t, y)(future)
    ts = future if isinstance(history, ZplTrace) else None
    return ForecastResult(np.asarray(pred, dtype=float), horizon, (), kind, ts)
