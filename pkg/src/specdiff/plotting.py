"""Report figures rendered to PNG with the Agg backend.

Figures are built on :class:`matplotlib.figure.Figure` directly, without
pyplot state, so rendering is reentrant and the bytes depend only on the
data and the installed matplotlib.
"""

from __future__ import annotations

import functools
from pathlib import Path

import matplotlib as mpl
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.0,
}
DPI = 120


def _styled(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kw):
        with mpl.rc_context(STYLE):
            return fn(*args, **kw)
    return wrapper


def _figure(nrows=1, ncols=1, size=(5.0, 3.2)):
    fig = Figure(figsize=size, dpi=DPI)
    FigureCanvasAgg(fig)
    return fig, fig.subplots(nrows, ncols, squeeze=False)


def save(fig, path):
    """Write ``fig`` as PNG without a timestamp or version chunk."""
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    return path


@_styled
def plot_traces(zpl, reference=None, path=None):
    """ZPL centre over time, with the reference line on a twin axis."""
    fig, ax = _figure()
    ax = ax[0, 0]
    t_ms = 1e3 * (zpl.timestamps - zpl.timestamps[0])
    ax.plot(t_ms, zpl.values, color="C0", label="ZPL")
    ax.set_xlabel("time (ms)")
    ax.set_ylabel("ZPL centre (nm)")
    if reference is not None:
        ax2 = ax.twinx()
        ax2.plot(t_ms, reference.values, color="C3", label="reference")
        ax2.set_ylabel("reference centre (nm)")
        ax2.ticklabel_format(useOffset=False, axis="y")
    ax.ticklabel_format(useOffset=False, axis="y")
    return save(fig, path) if path else fig


@_styled
def plot_overlap_evolution(evo, frame_interval=None, path=None):
    """Overlap histograms per window as a heat map."""
    fig, ax = _figure()
    ax = ax[0, 0]
    counts = evo.matrix().astype(float)
    x = evo.window_starts if frame_interval is None else evo.window_starts * frame_interval * 1e3
    im = ax.imshow(counts.T, origin="lower", aspect="auto", cmap="viridis",
                   extent=[x[0], x[-1] if x.size > 1 else x[0] + 1, 0.0, 1.0])
    ax.set_xlabel("window start (frame)" if frame_interval is None else "window start (ms)")
    ax.set_ylabel("|q|")
    fig.colorbar(im, ax=ax, label="pairs")
    return save(fig, path) if path else fig


@_styled
def plot_acf(result, fits=(), path=None):
    """ACF on log-log axes with the significance band and power-law fits."""
    fig, ax = _figure()
    ax = ax[0, 0]
    k = result.lags[1:]
    r = result.r[1:]
    pos = r > 0
    ax.loglog(k[pos], r[pos], ".", ms=3, color="C0", label="r(k)")
    ax.loglog(k, result.band[1:], "--", color="0.5", label="95% band")
    for i, f in enumerate(fits):
        if f is None:
            continue
        kk = np.arange(f.fit_range[0], f.fit_range[1] + 1)
        ax.loglog(kk, 10 ** (f.intercept + f.exponent * np.log10(kk)), color=f"C{i + 1}",
                  label=f"slope {f.exponent:.3f}")
    ax.set_xlabel("lag")
    ax.set_ylabel("autocorrelation")
    ax.legend()
    return save(fig, path) if path else fig


@_styled
def plot_psd(psd, segments=None, binned=None, path=None):
    """Periodogram on log-log axes with the segmented power-law fit."""
    fig, ax = _figure()
    ax = ax[0, 0]
    f, p = psd.freqs[1:], psd.power[1:]
    ok = p > 0
    ax.loglog(f[ok], p[ok], color="0.7", lw=0.5, label="periodogram")
    if binned is not None:
        bf, bp = binned.freqs[1:], binned.power[1:]
        ax.loglog(bf, bp, ".", color="C0", ms=4, label="log-binned")
    if segments is not None:
        fr = segments.freqs
        for i, s in enumerate(segments.segments):
            a, b = s.fit_range
            ff = fr[a:b]
            ax.loglog(ff, 10 ** (s.intercept + s.exponent * np.log10(ff)), color=f"C{i + 1}",
                      lw=1.5, label=f"slope {s.exponent:.3f}")
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("PSD (nm$^2$/Hz)")
    ax.legend()
    return save(fig, path) if path else fig


@_styled
def plot_forecast(history, actual, forecasts, path=None):
    """Recent history, the measured continuation, and each model's forecast."""
    fig, ax = _figure()
    ax = ax[0, 0]
    step = history.step
    th = 1e3 * (history.timestamps - history.timestamps[-1])
    ax.plot(th, history.values, color="k", label="measured")
    tf = 1e3 * step * np.arange(1, len(actual) + 1)
    ax.plot(tf, actual, "k.", ms=4)
    for i, (name, res) in enumerate(forecasts.items()):
        ax.plot(tf, res.predictions, "-o", ms=2, color=f"C{i}", label=name)
    ax.axvline(0.0, color="0.6", lw=0.5)
    ax.set_xlabel("time from forecast origin (ms)")
    ax.set_ylabel("ZPL centre (nm)")
    ax.ticklabel_format(useOffset=False, axis="y")
    ax.legend()
    return save(fig, path) if path else fig


@_styled
def plot_benchmark(report, metric="rmse_nm", path=None):
    """Grouped bars: one group per partition scheme, one bar per model."""
    models, schemes, table = report.rmse_table(metric)
    fig, ax = _figure()
    ax = ax[0, 0]
    width = 0.8 / len(models)
    x = np.arange(len(schemes))
    for i, m in enumerate(models):
        ax.bar(x + (i - (len(models) - 1) / 2) * width, table[i], width, label=m, color=f"C{i}")
    ax.set_xticks(x)
    ax.set_xticklabels(schemes)
    ax.set_xlabel("train:val:test")
    ax.set_ylabel("test RMSE (nm)" if metric == "rmse_nm" else "test RMSE (normalised)")
    ax.set_yscale("log")
    ax.legend()
    return save(fig, path) if path else fig


@_styled
def plot_g2(delays, g2, fit, path=None):
    fig, ax = _figure()
    ax = ax[0, 0]
    t = np.asarray(delays) * 1e9
    ax.plot(t, g2, ".", ms=3, color="C0", label="data")
    tt = np.linspace(t.min(), t.max(), 400)
    ax.plot(tt, fit(tt * 1e-9), color="C3", label=f"g2(0) = {fit.g2_0:.3f}")
    ax.set_xlabel("delay (ns)")
    ax.set_ylabel("g2")
    ax.legend()
    return save(fig, path) if path else fig
