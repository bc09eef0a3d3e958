"""Forecast evaluation: GHz mismatch arithmetic and partition-scheme benchmarks."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .core import ValidationError, ZplTrace
from .forecast.baselines import BASELINE_KINDS, MIN_HISTORY, baseline_forecast
from .forecast.hpo import SearchSpace, hyperparameter_search
from .forecast.model import Hyperparams
from .forecast.train import (ForecastResult, autoregressive_forecast, parse_split,
                             split_sizes, train)

log = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0  # m/s
MODEL_KINDS = ("bi-attn-lstm",) + BASELINE_KINDS
DEFAULT_SCHEMES = ((5, 4, 1), (6, 3, 1), (7, 2, 1), (8, 1, 1))
BENCHMARK_HP = Hyperparams(hidden_size=32, seq_len=16, num_layers=1, dropout=0.0,
                           learning_rate=3e-3)
BASELINE_WINDOWS = (8, 16, 32, 64)


def shift_to_frequency(lambda_a, lambda_b):
    """Optical frequency difference in GHz between two vacuum wavelengths in nm.

    ``c |a - b| / (a b)``: with wavelengths in nm and ``c`` in m/s the
    result is directly in GHz.
    """
    a = np.asarray(lambda_a, dtype=float)
    b = np.asarray(lambda_b, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValidationError("wavelengths must be positive")
    if np.any(np.abs(a - b) > 100):
        raise ValidationError("wavelengths more than 100 nm apart")
    out = SPEED_OF_LIGHT * np.abs(a - b) / (a * b)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MismatchRow:
    step: int
    actual_ghz: float
    residual_ghz: float
    factor: float  # inf when the prediction is exact
    capped: bool


def improvement_factor(actual_ghz, residual_ghz):
    """``actual / residual``; ``(inf, True)`` when the residual is zero."""
    if residual_ghz > 0:
        return actual_ghz / residual_ghz, False
    return float("inf"), True


def mismatch_improvement(actual, predicted, previous):
    """Per-step mismatch with and without prediction.

    Parameters
    ----------
    actual : array_like or ZplTrace
        Measured wavelengths over the forecast horizon.
    predicted : array_like or ForecastResult
        Predicted wavelengths for the same steps.
    previous : float
        Last measured wavelength before the horizon.

    Returns
    -------
    list of MismatchRow
        ``actual_ghz`` is the shift between consecutive measured steps,
        ``residual_ghz`` the gap between prediction and measurement at the
        same step.
    """
    a = actual.values if isinstance(actual, ZplTrace) else np.asarray(actual, dtype=float)
    p = predicted.predictions if isinstance(predicted, ForecastResult) else np.asarray(predicted, dtype=float)
    if a.shape != p.shape or a.ndim != 1:
        raise ValidationError(f"actual ({a.shape}) and predicted ({p.shape}) lengths differ")
    prev = np.concatenate([[float(previous)], a[:-1]])
    rows = []
    for k in range(a.size):
        shift = shift_to_frequency(prev[k], a[k])
        resid = shift_to_frequency(a[k], p[k])
        factor, capped = improvement_factor(shift, resid)
        rows.append(MismatchRow(k + 1, shift, resid, factor, capped))
    return rows


def mismatch_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "actual_ghz", "residual_ghz", "factor"])
    for r in rows:
        w.writerow([r.step, repr(r.actual_ghz), repr(r.residual_ghz),
                    "inf" if r.capped else repr(r.factor)])
    return buf.getvalue()


def relative_spread(values):
    """Range divided by the mean: ``(max - min) / mean``."""
    v = np.asarray(values, dtype=float)
    return float((v.max() - v.min()) / v.mean())


@dataclass
class EvalReport:
    cells: list = field(default_factory=list)
    mismatch: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def cell(self, model, scheme):
        key = ":".join(map(str, parse_split(scheme)))
        for c in self.cells:
            if c["model"] == model and c["scheme"] == key:
                return c
        raise KeyError((model, key))

    def rmse_table(self, metric="rmse_nm"):
        models = list(dict.fromkeys(c["model"] for c in self.cells))
        schemes = list(dict.fromkeys(c["scheme"] for c in self.cells))
        return models, schemes, np.array([[self.cell(m, s)[metric] for s in schemes]
                                          for m in models])

    def to_dict(self):
        return {"cells": self.cells,
                "mismatch": {k: [r.__dict__ for r in v] for k, v in self.mismatch.items()},
                "meta": self.meta}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "scheme", "rmse_norm", "rmse_nm"])
        for c in self.cells:
            w.writerow([c["model"], c["scheme"], repr(c["rmse_norm"]), repr(c["rmse_nm"])])
        return buf.getvalue()


def rolling_origins(start, stop, horizon):
    """Non-overlapping forecast origins ``o`` with ``o + horizon <= stop``."""
    return list(range(start, stop - horizon + 1, horizon))


def _cell_seed(seed, scheme, model):
    return np.random.SeedSequence([int(seed), *scheme, MODEL_KINDS.index(model)])


def _errors(forecast_fn, x, origins, horizon):
    return np.concatenate([forecast_fn(x[:o]) - x[o:o + horizon] for o in origins])


def _select_window(kind, x, n_train, n_val, horizon, windows):
    """Trailing fit window with the lowest validation RMSE."""
    stop = n_train + n_val
    origins = rolling_origins(n_train, stop, horizon)
    h = horizon
    if not origins:
        origins, h = [n_train], n_val
    best = None
    for w in windows:
        if w < MIN_HISTORY[kind] or w > n_train:
            continue
        try:
            err = _errors(lambda hist: baseline_forecast(kind, hist, h, w).predictions,
                          x, origins, h)
        except ValidationError:
            continue
        r = float(np.sqrt(np.mean(err ** 2)))
        if best is None or r < best[1]:
            best = (w, r)
    if best is None:
        raise ValidationError(f"no usable fit window for {kind}")
    return best


def partition_benchmark(trace, schemes=DEFAULT_SCHEMES, models=MODEL_KINDS,
                        hpo_budget=0, seed=0, horizon=8, hp=BENCHMARK_HP,
                        space=None, baseline_windows=BASELINE_WINDOWS,
                        max_epochs=500, patience=20):
    """Test RMSE of each model under each train:validation:test scheme.

    For each scheme the forecaster is trained on the training split (or the
    best of ``hpo_budget`` random trials when the budget is positive) and
    the baselines pick their trailing fit window on the validation split.
    Every model then forecasts ``horizon`` steps from non-overlapping origins
    across the test split, each from the measured history before it.
    ``rmse_norm`` divides ``rmse_nm`` by the training-split standard
    deviation of that scheme.
    """
    x = trace.values if isinstance(trace, ZplTrace) else np.asarray(trace, dtype=float)
    for m in models:
        if m not in MODEL_KINDS:
            raise ValidationError(f"unknown model {m!r}; choose from {MODEL_KINDS}")
    schemes = [parse_split(s) for s in schemes]
    report = EvalReport(meta={"n": int(x.size), "horizon": horizon, "seed": int(seed),
                              "hpo_budget": int(hpo_budget), "hp": hp.to_dict()})
    for sc in schemes:
        n_train, n_val, n_test = split_sizes(x.size, sc)
        if n_test < horizon:
            raise ValidationError(f"scheme {sc}: test split has {n_test} < horizon {horizon} samples")
        start = n_train + n_val
        origins = rolling_origins(start, x.size, horizon)
        sigma = float(np.std(x[:n_train]))
        key = ":".join(map(str, sc))
        for kind in models:
            cs = _cell_seed(seed, sc, kind)
            info = {}
            if kind == "bi-attn-lstm":
                if hpo_budget > 0:
                    model, search = hyperparameter_search(
                        x, space or SearchSpace(), hpo_budget, sc, cs,
                        max_epochs=max_epochs, patience=patience, horizon=horizon)
                    info["search"] = search
                else:
                    model = train(x, hp, sc, seed=cs, max_epochs=max_epochs,
                                  patience=patience, horizon=horizon)
                info.update(epochs=model.train_meta["epochs"],
                            best_val_rmse=model.train_meta["best_val_rmse"],
                            hp=model.hp.to_dict())

                def fc(hist, model=model):
                    return autoregressive_forecast(model, hist, horizon).predictions
            else:
                w, val = _select_window(kind, x, n_train, n_val, horizon, baseline_windows)
                info.update(window=w, val_rmse_nm=val)

                def fc(hist, kind=kind, w=w):
                    return baseline_forecast(kind, hist, horizon, w).predictions
            err = _errors(fc, x, origins, horizon)
            rmse = float(np.sqrt(np.mean(err ** 2)))
            report.cells.append({"model": kind, "scheme": key, "rmse_nm": rmse,
                                 "rmse_norm": rmse / sigma, "n_origins": len(origins),
                                 **info})
            if kind == models[0]:
                o = origins[0]
                report.mismatch[key] = mismatch_improvement(
                    x[o:o + horizon], fc(x[:o]), x[o - 1])
            log.info("%s %s rmse_nm=%.4g", kind, key, rmse)
    return report
