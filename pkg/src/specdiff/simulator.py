"""Synthetic emitter: a two-state fluctuator bath drives the ZPL centre.

The ZPL wavelength is::

    lambda0(t) = base + sum_k a_k s_k(t) + OU(t) + noise

with ``s_k`` a random telegraph signal taking values in ``{-1/2, +1/2}``,
flip rate ``gamma_k`` drawn log-uniformly, and ``a_k = coupling / sqrt(n)``.
Telegraph paths are sampled exactly from exponential sojourn times.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .core import SpectralSeries, ValidationError, ZplTrace
from .peakfit import lorentzian

RAMAN_SI_NM = 547.44
GAUSS_ABOVE = 1000.0  # counts; Poisson replaced by a rounded Gaussian above this


@dataclass(frozen=True)
class OUDrift:
    rate: float = 0.0  # mean reversion, 1/s
    diffusion: float = 0.0  # nm^2/s

    @property
    def stationary_var(self):
        return self.diffusion / self.rate if self.rate > 0 else 0.0


@dataclass(frozen=True)
class FluctuatorBathConfig:
    n_fluctuators: int = 50
    rate_range: tuple = (0.1, 100.0)
    coupling_scale: float = 0.1
    base_wavelength: float = 539.55
    drift: OUDrift = field(default_factory=OUDrift)
    measurement_noise: float = 0.0
    fs: float = 2000.0
    n_frames: int = 10_000
    asymmetry: float = 1.0  # up-rate / down-rate; 1 is symmetric
    label: str = "sim"

    def __post_init__(self):
        lo, hi = self.rate_range
        if not (0 < lo <= hi):
            raise ValidationError("rate_range must be positive and ordered")
        if self.n_fluctuators < 1:
            raise ValidationError("n_fluctuators must be >= 1")
        if self.fs <= 0:
            raise ValidationError("fs must be > 0")
        if self.n_frames < 1:
            raise ValidationError("n_frames must be >= 1")
        if self.coupling_scale < 0 or self.measurement_noise < 0:
            raise ValidationError("coupling_scale and measurement_noise must be >= 0")
        if self.drift.rate < 0 or self.drift.diffusion < 0:
            raise ValidationError("OU parameters must be >= 0")
        if self.drift.diffusion > 0 and self.drift.rate == 0:
            raise ValidationError("OU drift with zero mean-reversion rate is not stationary")
        if self.asymmetry <= 0:
            raise ValidationError("asymmetry must be > 0")
        object.__setattr__(self, "rate_range", (float(lo), float(hi)))

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "drift" in d and isinstance(d["drift"], dict):
            d["drift"] = OUDrift(**d["drift"])
        if "rate_range" in d:
            d["rate_range"] = tuple(d["rate_range"])
        return cls(**d)


@dataclass(frozen=True)
class FrameRenderConfig:
    axis_range: tuple = (535.0, 555.0)
    n_bins: int = 512
    zpl_fwhm: float = 0.3
    zpl_amplitude: float = 800.0
    raman_center: float = RAMAN_SI_NM
    raman_fwhm: float = 0.25
    raman_amplitude: float = 3000.0
    background: float = 20.0
    shot_noise: bool = True

    def __post_init__(self):
        lo, hi = self.axis_range
        if not lo < hi:
            raise ValidationError("axis_range must be ordered")
        if self.n_bins < 32:
            raise ValidationError("n_bins must be >= 32")
        if not lo < self.raman_center < hi:
            raise ValidationError("axis must cover the Raman line")
        object.__setattr__(self, "axis_range", (float(lo), float(hi)))

    @property
    def axis(self):
        return np.linspace(*self.axis_range, self.n_bins)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "axis_range" in d:
            d["axis_range"] = tuple(d["axis_range"])
        return cls(**d)


PRESETS = {
    # narrow rate band and weak coupling; white readout noise dominates at high f
    "stable": FluctuatorBathConfig(
        n_fluctuators=50, rate_range=(1.0, 30.0), coupling_scale=0.05,
        base_wavelength=539.55, drift=OUDrift(rate=40.0, diffusion=5e-4),
        measurement_noise=0.01, label="stable"),
    # broad, fast rate band, strong coupling and a slow quasi-quenched drift
    "unstable": FluctuatorBathConfig(
        n_fluctuators=60, rate_range=(10.0, 1000.0), coupling_scale=0.25,
        base_wavelength=550.76, drift=OUDrift(rate=40.0, diffusion=0.02),
        measurement_noise=0.01, label="unstable"),
    # reference 1/f bath: rates spanning three decades, nothing else
    "bath": FluctuatorBathConfig(
        n_fluctuators=50, rate_range=(1.0, 1000.0), coupling_scale=0.1,
        base_wavelength=539.55, label="bath"),
}


def preset(name, **overrides):
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def sample_rates(cfg: FluctuatorBathConfig, rng):
    """Log-uniform flip rates, stratified: one draw per equal-width log stratum."""
    lo, hi = np.log(cfg.rate_range[0]), np.log(cfg.rate_range[1])
    n = cfg.n_fluctuators
    u = (np.arange(n) + rng.uniform(size=n)) / n
    return np.exp(lo + (hi - lo) * u)


def telegraph(times, up_rate, down_rate, rng):
    """Exact two-state path sampled at ``times``; values in ``{-1/2, +1/2}``.

    ``up_rate`` is the rate of leaving the lower state.  The initial state
    is drawn from the stationary occupancy.
    """
    t_end = times[-1] - times[0]
    state = 0.5 if rng.random() < up_rate / (up_rate + down_rate) else -0.5
    # sojourn rates alternate starting from the initial state's exit rate
    first, second = (down_rate, up_rate) if state > 0 else (up_rate, down_rate)
    chunk = int(t_end * (up_rate + down_rate)) + 16
    flips = np.empty(0)
    t = 0.0
    while t <= t_end:
        k = flips.size
        r = np.where((np.arange(k, k + chunk) % 2) == 0, first, second)
        new = t + np.cumsum(rng.standard_exponential(chunk) / r)
        flips = np.concatenate([flips, new])
        t = flips[-1]
    flips = flips[flips <= t_end]
    n_before = np.searchsorted(flips, times - times[0], side="right")
    return np.where(n_before % 2 == 0, state, -state)


def ou_path(n, dt, drift: OUDrift, rng):
    """Exact discretisation of a stationary Ornstein-Uhlenbeck process."""
    if drift.rate == 0 or drift.diffusion == 0:
        return np.zeros(n)
    a = np.exp(-drift.rate * dt)
    sd = np.sqrt(drift.stationary_var * (1 - a * a))
    z = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = np.sqrt(drift.stationary_var) * z[0]
    for i in range(1, n):
        x[i] = a * x[i - 1] + sd * z[i]
    return x


def simulate_fluctuator_bath(cfg: FluctuatorBathConfig, seed, return_parts=False):
    """Generate a ZPL trace from the fluctuator bath.

    Independent RNG streams are spawned per component so that switching off
    one component leaves the others unchanged.
    """
    ss = np.random.SeedSequence(seed)
    s_rates, s_tel, s_ou, s_noise = ss.spawn(4)
    dt = 1.0 / cfg.fs
    times = np.arange(cfg.n_frames) * dt
    rates = sample_rates(cfg, np.random.default_rng(s_rates))
    amp = cfg.coupling_scale / np.sqrt(cfg.n_fluctuators)
    # symmetric case: both directions flip at gamma; otherwise split so that
    # the relaxation rate up + down stays 2 * gamma
    up = 2 * rates * cfg.asymmetry / (1 + cfg.asymmetry)
    down = 2 * rates / (1 + cfg.asymmetry)
    bath = np.zeros(cfg.n_frames)
    states = []
    for k, child in enumerate(s_tel.spawn(cfg.n_fluctuators)):
        s = telegraph(times, up[k], down[k], np.random.default_rng(child))
        states.append(s)
        bath += amp * s
    drift = ou_path(cfg.n_frames, dt, cfg.drift, np.random.default_rng(s_ou))
    noise = np.zeros(cfg.n_frames)
    if cfg.measurement_noise > 0:
        noise = cfg.measurement_noise * np.random.default_rng(s_noise).standard_normal(cfg.n_frames)
    values = cfg.base_wavelength + bath + drift + noise
    trace = ZplTrace(times, values, cfg.label, cfg.base_wavelength)
    if return_parts:
        return trace, {"rates": rates, "amplitude": amp, "states": np.array(states),
                       "bath": bath, "drift": drift, "noise": noise}
    return trace


def telegraph_psd(freqs, amplitude, rate):
    """One-sided PSD of ``amplitude * s(t)`` for a symmetric telegraph flipping at ``rate``."""
    lam = 2.0 * rate
    w = 2 * np.pi * np.asarray(freqs, dtype=float)
    return 2 * (amplitude ** 2 / 4) * 2 * lam / (lam ** 2 + w ** 2)


def bath_psd(freqs, amplitude, rates):
    """Analytic bath PSD: the sum of independent Lorentzians."""
    return sum(telegraph_psd(freqs, amplitude, g) for g in rates)


def synthesize_spectra(trace: ZplTrace, cfg: FrameRenderConfig, seed):
    """Render one spectrum per trace sample: moving ZPL + fixed Raman line + background.

    Shot noise is Poisson on the expected counts, replaced by a rounded
    Gaussian of matching variance above ``GAUSS_ABOVE`` counts.
    """
    axis = cfg.axis
    lo, hi = cfg.axis_range
    v = trace.values
    if np.any(v < lo + cfg.zpl_fwhm) or np.any(v > hi - cfg.zpl_fwhm):
        raise ValidationError("trace exits the renderable axis range")
    raman = lorentzian(axis, (cfg.raman_center, cfg.raman_fwhm, cfg.raman_amplitude, 0.0))
    hw2 = 0.25 * cfg.zpl_fwhm ** 2
    expected = cfg.zpl_amplitude * hw2 / ((axis[None, :] - v[:, None]) ** 2 + hw2)
    expected += raman + cfg.background
    if cfg.shot_noise:
        rng = np.random.default_rng(seed)
        counts = rng.poisson(np.minimum(expected, GAUSS_ABOVE)).astype(float)
        big = expected > GAUSS_ABOVE
        if big.any():
            g = expected[big] + np.sqrt(expected[big]) * rng.standard_normal(int(big.sum()))
            counts[big] = np.maximum(np.rint(g), 0.0)
        frames = counts
    else:
        frames = expected
    step = trace.step if len(trace) > 1 else 1.0
    return SpectralSeries(axis, frames, step, float(trace.timestamps[0]))


def sinusoid_ou_trace(n=600, seed=0, period_steps=40.0, amplitude=0.05,
                      drift=OUDrift(rate=20.0, diffusion=2e-3), noise=0.002,
                      fs=2000.0, base_wavelength=539.55, label="sinusoid+ou"):
    """Benchmark fixture: a sinusoid plus an OU drift and white readout noise."""
    if n < 2 or period_steps <= 0 or fs <= 0:
        raise ValidationError("need n >= 2, period_steps > 0 and fs > 0")
    s_phase, s_ou, s_noise = np.random.SeedSequence(seed).spawn(3)
    k = np.arange(n)
    phase = np.random.default_rng(s_phase).uniform(0, 2 * np.pi)
    values = base_wavelength + amplitude * np.sin(2 * np.pi * k / period_steps + phase)
    values = values + ou_path(n, 1.0 / fs, drift, np.random.default_rng(s_ou))
    if noise > 0:
        values = values + noise * np.random.default_rng(s_noise).standard_normal(n)
    return ZplTrace(k / fs, values, label, base_wavelength)
