"""Command-line entry point.

Every subcommand accepts ``--seed``, ``--config`` (a JSON object whose keys
are option names with underscores) and ``-o/--out``.  Precedence is
built-in default < config file < command-line flag.  Without ``-o`` outputs
go to ``$SPECDIFF_OUT`` (or the working directory) under a default name.

Exit status: 0 on success, 1 when validation or a module fails (partial
outputs are removed), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import ValidationError, ZplTrace, parse_spectral_series, parse_zpl_trace
from .core import write_spectral_series, write_zpl_trace

log = logging.getLogger("specdiff")

OUT_ENV = "SPECDIFF_OUT"
SUPPRESS = argparse.SUPPRESS

DEFAULTS = {
    "common": {"seed": None, "config": None, "out": None, "verbose": False},
    "simulate": {"preset": "stable", "n_frames": None, "fs": None, "trace_only": False,
                 "n_bins": None, "bath": {}, "render": {}},
    "extract": {"zpl_window": [538.0, 541.0], "ref_window": [546.6, 548.3]},
    "overlap": {"window": 100, "stride": 10, "bins": 50, "wavelength_window": None,
                "single": False},
    "acf": {"max_lag": 100},
    "psd": {"detrend": False, "blocks": 1, "max_change_points": 2, "min_segment": 5,
            "bins_per_decade": 10, "min_count": 8, "raw": False},
    "g2fit": {},
    "train": {"hidden_size": 32, "seq_len": 16, "num_layers": 1, "dropout": 0.0,
              "learning_rate": 1e-3, "split": "8:1:1", "max_epochs": 500, "patience": 20,
              "batch_size": 32, "trials": 0, "space": None},
    "forecast": {"model": None, "horizon": 8, "adapt": False, "kind": "bi-attn-lstm",
                 "window": None},
    "evaluate": {"schemes": "5:4:1,6:3:1,7:2:1,8:1:1",
                 "models": "bi-attn-lstm,linear,poly5,sine", "hpo_budget": 0, "horizon": 8,
                 "hidden_size": 32, "seq_len": 16, "num_layers": 1, "dropout": 0.0,
                 "learning_rate": 3e-3, "max_epochs": 500, "patience": 20},
    "report": {"spectra": None, "trace": None, "reference": None, "g2": None,
               "zpl_window": [538.0, 541.0], "ref_window": [546.6, 548.3],
               "window": 100, "stride": 10, "bins": 50, "max_lag": 100, "model": None,
               "horizon": 8, "benchmark": False, "hpo_budget": 0, "figures": True},
}
STOCHASTIC = {"simulate", "train", "evaluate", "report"}
DEFAULT_NAMES = {
    "simulate": "simulate.csv", "extract": "zpl.csv", "overlap": "overlap.csv",
    "acf": "acf.csv", "psd": "psd.csv", "g2fit": "g2fit.json", "train": "model.json",
    "forecast": "forecast.csv", "evaluate": "evaluate.json", "report": "report",
}


class Outputs:
    """Tracks files written by a subcommand so a failure can remove them."""

    def __init__(self):
        self.paths = []

    def add(self, path):
        path = Path(path)
        self.paths.append(path)
        return path

    def sibling(self, base, suffix, ext):
        base = Path(base)
        return self.add(base.with_name(f"{base.stem}{suffix}{ext}"))

    def remove(self):
        for p in reversed(self.paths):
            try:
                if p.is_dir():
                    if not any(p.iterdir()):
                        p.rmdir()
                else:
                    p.unlink()
            except FileNotFoundError:
                pass
            except OSError as exc:
                log.warning("could not remove partial output %s: %s", p, exc)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _float_pair(s):
    return [float(v) for v in s]


# ---------------------------------------------------------------------------
# subcommands

def _require_seed(cfg):
    if cfg["seed"] is None:
        raise ValidationError(f"--seed is required for '{cfg['command']}'")
    seed = int(cfg["seed"])
    if seed < 0:
        raise ValidationError("seed must be non-negative")
    return seed


def _child_seeds(seed, n):
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(n)]


def cmd_simulate(cfg, out, outputs):
    from .simulator import FluctuatorBathConfig, FrameRenderConfig, preset, simulate_fluctuator_bath
    from .simulator import synthesize_spectra

    seed = _require_seed(cfg)
    s_bath, s_render = _child_seeds(seed, 2)
    overrides = dict(cfg["bath"])
    if cfg["n_frames"] is not None:
        overrides["n_frames"] = int(cfg["n_frames"])
    if cfg["fs"] is not None:
        overrides["fs"] = float(cfg["fs"])
    base = preset(cfg["preset"]).to_dict()
    base.update(overrides)
    bath = FluctuatorBathConfig.from_dict(base)
    trace = simulate_fluctuator_bath(bath, s_bath)
    meta = {"preset": cfg["preset"], "seed": seed, "bath": bath.to_dict()}
    if cfg["trace_only"]:
        write_zpl_trace(trace, outputs.add(out))
    else:
        rdict = dict(cfg["render"])
        if cfg["n_bins"] is not None:
            rdict["n_bins"] = int(cfg["n_bins"])
        render = FrameRenderConfig.from_dict(rdict)
        series = synthesize_spectra(trace, render, s_render)
        write_spectral_series(series, outputs.add(out))
        write_zpl_trace(trace, outputs.sibling(out, "_truth", ".csv"))
        meta["render"] = render.to_dict()
    _write_json(outputs.sibling(out, "_config", ".json"), meta)


def cmd_extract(cfg, out, outputs):
    from .peakfit import extract_traces

    series = parse_spectral_series(cfg["input"])
    zpl, ref, counts = extract_traces(series, _float_pair(cfg["zpl_window"]),
                                      _float_pair(cfg["ref_window"]))
    write_zpl_trace(zpl, outputs.add(out))
    write_zpl_trace(ref, outputs.sibling(out, "_reference", ".csv"))
    bw = series.bin_width
    _write_json(outputs.sibling(out, "_summary", ".json"), {
        "non_converged": counts, "bin_width_nm": bw,
        "zpl_std_nm": float(np.std(zpl.values)), "reference_std_nm": float(np.std(ref.values)),
        "zpl_std_bins": float(np.std(zpl.values) / bw),
        "reference_std_bins": float(np.std(ref.values) / bw)})


def cmd_overlap(cfg, out, outputs):
    from .replica import overlap_histogram, overlap_matrix, sliding_overlap_evolution

    series = parse_spectral_series(cfg["input"])
    if cfg["wavelength_window"] is not None:
        series = series.restrict(*_float_pair(cfg["wavelength_window"]))
    if cfg["single"]:
        m = overlap_matrix(series.frames)
        h = overlap_histogram(m, int(cfg["bins"]))
        _write_json(outputs.add(out), {**h.to_dict(), "n_replicas": m.n,
                                       "excluded_pairs": m.excluded_pairs})
        return
    evo = sliding_overlap_evolution(series, int(cfg["window"]), int(cfg["stride"]),
                                    int(cfg["bins"]))
    counts = evo.matrix()
    header = ["window_start"] + [f"bin_{i}" for i in range(counts.shape[1])]
    _write_csv(outputs.add(out), header,
               [[int(s), *map(int, row)] for s, row in zip(evo.window_starts, counts)])


def _trace_input(cfg):
    return parse_zpl_trace(cfg["input"])


def acf_summary(res):
    from .noise import default_acf_regions, fit_acf_power_law

    decay, tail = default_acf_regions(res)
    fits = {}
    for name, region in (("decay", decay), ("tail", tail)):
        try:
            fits[name] = fit_acf_power_law(res, region).to_dict() if region else None
        except ValidationError as exc:
            fits[name] = None
            log.info("ACF %s fit skipped: %s", name, exc)
    return {"n": res.n, "first_band_crossing": res.first_band_crossing(), "fits": fits}


def cmd_acf(cfg, out, outputs):
    from .noise import acf

    res = acf(_trace_input(cfg), int(cfg["max_lag"]))
    _write_csv(outputs.add(out), ["lag", "r", "band"],
               [[int(k), float(r), float(b)] for k, r, b in zip(res.lags, res.r, res.band)])
    _write_json(outputs.sibling(out, "_fit", ".json"), acf_summary(res))


def psd_analysis(trace, cfg):
    from .noise import fit_psd_segments, log_bin_psd, periodogram_psd

    psd = periodogram_psd(trace, detrend=bool(cfg["detrend"]), n_blocks=int(cfg["blocks"]))
    target = psd if cfg["raw"] else log_bin_psd(psd, int(cfg["bins_per_decade"]),
                                                 int(cfg["min_count"]))
    seg = fit_psd_segments(target, int(cfg["max_change_points"]), int(cfg["min_segment"]))
    summary = {**seg.to_dict(), "fit_on": "raw" if cfg["raw"] else "log-binned",
               "fs": psd.fs, "df": psd.df, "detrended": psd.detrended}
    return psd, target, seg, summary


def cmd_psd(cfg, out, outputs):
    psd, _, _, summary = psd_analysis(_trace_input(cfg), cfg)
    _write_csv(outputs.add(out), ["freq_hz", "power"],
               [[float(f), float(p)] for f, p in zip(psd.freqs, psd.power)])
    _write_json(outputs.sibling(out, "_segments", ".json"), summary)


def read_g2(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["delay_s", "g2"]:
            raise ValidationError("malformed header: expected 'delay_s,g2'")
        rows = [r for r in reader if r]
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows])
    except (ValueError, IndexError):
        raise ValidationError("unparseable g2 row") from None
    if data.size == 0:
        raise ValidationError("empty g2 file")
    return data[:, 0], data[:, 1]


def cmd_g2fit(cfg, out, outputs):
    from .peakfit import fit_g2

    t, g = read_g2(cfg["input"])
    _write_json(outputs.add(out), fit_g2(t, g).to_dict())


def _hp(cfg):
    from .forecast import Hyperparams

    return Hyperparams(int(cfg["hidden_size"]), int(cfg["seq_len"]), int(cfg["num_layers"]),
                       float(cfg["dropout"]), float(cfg["learning_rate"]))


def cmd_train(cfg, out, outputs):
    from .forecast import SearchSpace, hyperparameter_search, train

    seed = _require_seed(cfg)
    trace = _trace_input(cfg)
    kw = {"max_epochs": int(cfg["max_epochs"]), "patience": int(cfg["patience"]),
          "batch_size": int(cfg["batch_size"])}
    if int(cfg["trials"]) > 0:
        space = SearchSpace.from_dict(cfg["space"]) if cfg["space"] else SearchSpace()
        model, records = hyperparameter_search(trace, space, int(cfg["trials"]), cfg["split"],
                                               seed, **kw)
        _write_json(outputs.sibling(out, "_search", ".json"),
                    {"space": space.to_dict(), "seed": seed, "trials": records})
    else:
        model = train(trace, _hp(cfg), cfg["split"], seed=seed, **kw)
    model.save(outputs.add(out))


def cmd_forecast(cfg, out, outputs):
    from .forecast import TrainedForecaster, autoregressive_forecast, baseline_forecast

    history = _trace_input(cfg)
    horizon = int(cfg["horizon"])
    if cfg["kind"] == "bi-attn-lstm":
        if not cfg["model"]:
            raise ValidationError("--model checkpoint required for kind bi-attn-lstm")
        res = autoregressive_forecast(TrainedForecaster.load(cfg["model"]), history, horizon,
                                      adapt=bool(cfg["adapt"]))
    else:
        res = baseline_forecast(cfg["kind"], history, horizon, cfg["window"])
    _write_csv(outputs.add(out), ["step", "t_s", "lambda_pred_nm"],
               [[k + 1, float(t), float(p)]
                for k, (t, p) in enumerate(zip(res.timestamps, res.predictions))])
    if res.attention_maps:
        _write_json(outputs.sibling(out, "_attention", ".json"),
                    {"attention": [a.tolist() for a in res.attention_maps]})


def _split_list(s):
    return [p.strip() for p in s.split(",") if p.strip()] if isinstance(s, str) else list(s)


def cmd_evaluate(cfg, out, outputs):
    from .evaluation import mismatch_csv, partition_benchmark

    seed = _require_seed(cfg)
    rep = partition_benchmark(_trace_input(cfg), _split_list(cfg["schemes"]),
                              tuple(_split_list(cfg["models"])), int(cfg["hpo_budget"]), seed,
                              int(cfg["horizon"]), _hp(cfg), max_epochs=int(cfg["max_epochs"]),
                              patience=int(cfg["patience"]))
    with open(outputs.add(out), "w") as fh:
        fh.write(rep.to_json())
    with open(outputs.sibling(out, "", ".csv"), "w") as fh:
        fh.write(rep.to_csv())
    for scheme, rows in rep.mismatch.items():
        tag = scheme.replace(":", "-")
        with open(outputs.sibling(out, f"_mismatch_{tag}", ".csv"), "w") as fh:
            fh.write(mismatch_csv(rows))


def cmd_report(cfg, out, outputs):
    from . import plotting
    from .evaluation import mismatch_improvement, partition_benchmark
    from .forecast import TrainedForecaster, autoregressive_forecast, baseline_forecast
    from .noise import acf, default_acf_regions, fit_acf_power_law
    from .peakfit import extract_traces, fit_g2
    from .replica import sliding_overlap_evolution

    seed = _require_seed(cfg)
    if not (cfg["spectra"] or cfg["trace"]):
        raise ValidationError("report needs --spectra or --trace")
    out = Path(out)
    if out.exists() and not out.is_dir():
        raise ValidationError(f"report output {out} exists and is not a directory")
    if not out.exists():
        out.mkdir(parents=True)
        outputs.add(out)
    figs = bool(cfg["figures"])
    bundle = {"seed": seed}

    def fig(name):
        return outputs.add(out / f"{name}.png")

    series = None
    ref = None
    if cfg["spectra"]:
        series = parse_spectral_series(cfg["spectra"])
        zpl, ref, counts = extract_traces(series, _float_pair(cfg["zpl_window"]),
                                          _float_pair(cfg["ref_window"]))
        bundle["extraction"] = {"non_converged": counts, "bin_width_nm": series.bin_width}
    if cfg["trace"]:
        zpl = parse_zpl_trace(cfg["trace"])
    if cfg["reference"]:
        ref = parse_zpl_trace(cfg["reference"])
    bundle["trace"] = {"label": zpl.label, "n": len(zpl), "step_s": zpl.step,
                       "mean_nm": float(np.mean(zpl.values)), "std_nm": float(np.std(zpl.values)),
                       "t_s": zpl.timestamps.tolist(), "lambda_nm": zpl.values.tolist()}
    if ref is not None:
        bundle["reference"] = {"std_nm": float(np.std(ref.values)),
                               "lambda_nm": ref.values.tolist()}
    if figs:
        plotting.plot_traces(zpl, ref, fig("fig_traces"))

    if series is not None:
        evo = sliding_overlap_evolution(series, int(cfg["window"]), int(cfg["stride"]),
                                        int(cfg["bins"]))
        bundle["overlap"] = {"window": evo.window_len, "stride": evo.stride,
                             "bin_edges": evo.bin_edges.tolist(),
                             "window_starts": evo.window_starts.tolist(),
                             "counts": evo.matrix().tolist(),
                             "max_abs_q": evo.max_abs_q().tolist()}
        if figs:
            plotting.plot_overlap_evolution(evo, series.frame_interval, fig("fig_overlap"))

    res = acf(zpl, min(int(cfg["max_lag"]), (len(zpl) - 1) // 2))
    bundle["acf"] = {"lag": res.lags.tolist(), "r": res.r.tolist(), "band": res.band.tolist(),
                     **acf_summary(res)}
    if figs:
        decay, tail = default_acf_regions(res)
        fits = []
        for region in (decay, tail):
            try:
                fits.append(fit_acf_power_law(res, region) if region else None)
            except ValidationError:
                fits.append(None)
        plotting.plot_acf(res, fits, fig("fig_acf"))

    psd, binned, seg, summary = psd_analysis(zpl, {**DEFAULTS["psd"]})
    bundle["psd"] = {"freq_hz": psd.freqs.tolist(), "power": psd.power.tolist(),
                     "binned_freq_hz": binned.freqs.tolist(), "binned_power": binned.power.tolist(),
                     "segments": summary}
    if figs:
        plotting.plot_psd(psd, seg, binned, fig("fig_psd"))

    if cfg["g2"]:
        t, g = read_g2(cfg["g2"])
        g2 = fit_g2(t, g)
        bundle["g2"] = {"delay_s": t.tolist(), "g2": g.tolist(), "fit": g2.to_dict()}
        if figs:
            plotting.plot_g2(t, g, g2, fig("fig_g2"))

    horizon = int(cfg["horizon"])
    if cfg["model"]:
        model = TrainedForecaster.load(cfg["model"])
        origin = len(zpl) - horizon
        history = zpl.slice(0, origin)
        actual = zpl.values[origin:]
        fcs = {"bi-attn-lstm": autoregressive_forecast(model, history, horizon)}
        for kind in ("linear", "poly5", "sine"):
            try:
                fcs[kind] = baseline_forecast(kind, history, horizon, model.hp.seq_len)
            except ValidationError as exc:
                log.info("baseline %s skipped: %s", kind, exc)
        bundle["forecast"] = {
            "origin_index": origin, "actual_nm": actual.tolist(),
            "predictions_nm": {k: v.predictions.tolist() for k, v in fcs.items()},
            "mismatch": [r.__dict__ for r in mismatch_improvement(
                actual, fcs["bi-attn-lstm"], zpl.values[origin - 1])],
        }
        if figs:
            plotting.plot_forecast(zpl.slice(max(0, origin - 4 * horizon), origin), actual, fcs,
                                   fig("fig_forecast"))

    if cfg["benchmark"]:
        rep = partition_benchmark(zpl, hpo_budget=int(cfg["hpo_budget"]), seed=seed,
                                  horizon=horizon)
        bundle["benchmark"] = rep.to_dict()
        if figs:
            plotting.plot_benchmark(rep, path=fig("fig_benchmark"))

    _write_json(outputs.add(out / "report.json"), bundle)


COMMANDS = {
    "simulate": (cmd_simulate, "simulate a fluctuator-bath ZPL trace and its spectra"),
    "extract": (cmd_extract, "fit ZPL and reference peaks in every frame"),
    "overlap": (cmd_overlap, "sliding-window replica overlap histograms"),
    "acf": (cmd_acf, "autocorrelation with significance band and power-law fits"),
    "psd": (cmd_psd, "periodogram and segmented power-law fit"),
    "g2fit": (cmd_g2fit, "fit the antibunching dip of a g2 curve"),
    "train": (cmd_train, "train the forecaster (optionally with random search)"),
    "forecast": (cmd_forecast, "multi-step forecast from a checkpoint or baseline"),
    "evaluate": (cmd_evaluate, "benchmark models across partition schemes"),
    "report": (cmd_report, "JSON data bundle and PNG figures for one trace"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=SUPPRESS)
    common.add_argument("--seed", type=int, help="root RNG seed")
    common.add_argument("--config", help="JSON file of option values")
    common.add_argument("-o", "--out", help=f"output path (default under ${OUT_ENV})")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="specdiff", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True
    sp = {name: sub.add_parser(name, parents=[common], help=h, description=h,
                               argument_default=SUPPRESS)
          for name, (_, h) in COMMANDS.items()}

    a = sp["simulate"]
    a.add_argument("--preset", choices=["stable", "unstable", "bath"])
    a.add_argument("--n-frames", type=int)
    a.add_argument("--fs", type=float, help="frame rate in Hz")
    a.add_argument("--n-bins", type=int)
    a.add_argument("--trace-only", action="store_true", help="write only the ZPL trace CSV")

    for name in ("extract", "overlap"):
        sp[name].add_argument("input", help="spectral series CSV")
    for name in ("acf", "psd", "train", "forecast", "evaluate"):
        sp[name].add_argument("input", help="ZPL trace CSV")
    sp["g2fit"].add_argument("input", help="g2 CSV with columns delay_s,g2")

    for name in ("extract", "report"):
        sp[name].add_argument("--zpl-window", nargs=2, type=float, metavar=("LO", "HI"))
        sp[name].add_argument("--ref-window", nargs=2, type=float, metavar=("LO", "HI"))

    a = sp["overlap"]
    a.add_argument("--window", type=int)
    a.add_argument("--stride", type=int)
    a.add_argument("--bins", type=int)
    a.add_argument("--wavelength-window", nargs=2, type=float, metavar=("LO", "HI"))
    a.add_argument("--single", action="store_true", help="one histogram over all frames (JSON)")

    sp["acf"].add_argument("--max-lag", type=int)

    a = sp["psd"]
    a.add_argument("--detrend", action="store_true")
    a.add_argument("--blocks", type=int)
    a.add_argument("--max-change-points", type=int, choices=[0, 1, 2])
    a.add_argument("--min-segment", type=int)
    a.add_argument("--bins-per-decade", type=int)
    a.add_argument("--min-count", type=int)
    a.add_argument("--raw", action="store_true", help="segment the raw periodogram")

    for name in ("train", "evaluate"):
        a = sp[name]
        a.add_argument("--hidden-size", type=int)
        a.add_argument("--seq-len", type=int)
        a.add_argument("--num-layers", type=int)
        a.add_argument("--dropout", type=float)
        a.add_argument("--learning-rate", type=float)
        a.add_argument("--max-epochs", type=int)
        a.add_argument("--patience", type=int)
    sp["train"].add_argument("--split", help="train:val:test, e.g. 8:1:1")
    sp["train"].add_argument("--batch-size", type=int)
    sp["train"].add_argument("--trials", type=int, help="random-search trials (0: single run)")

    a = sp["forecast"]
    a.add_argument("--model", help="checkpoint JSON")
    a.add_argument("--horizon", type=int)
    a.add_argument("--adapt", action="store_true", help="self-adaptive window length")
    a.add_argument("--kind", choices=["bi-attn-lstm", "linear", "poly5", "sine"])
    a.add_argument("--window", type=int, help="baseline fit window")

    a = sp["evaluate"]
    a.add_argument("--schemes", help="comma-separated, e.g. 5:4:1,8:1:1")
    a.add_argument("--models", help="comma-separated model kinds")
    a.add_argument("--hpo-budget", type=int)
    a.add_argument("--horizon", type=int)

    a = sp["report"]
    a.add_argument("--spectra", help="spectral series CSV")
    a.add_argument("--trace", help="ZPL trace CSV (overrides the extracted trace)")
    a.add_argument("--reference", help="reference trace CSV")
    a.add_argument("--g2", help="g2 CSV")
    a.add_argument("--window", type=int)
    a.add_argument("--stride", type=int)
    a.add_argument("--bins", type=int)
    a.add_argument("--max-lag", type=int)
    a.add_argument("--model", help="checkpoint JSON for the forecast panel")
    a.add_argument("--horizon", type=int)
    a.add_argument("--benchmark", action="store_true", help="run the partition benchmark")
    a.add_argument("--hpo-budget", type=int)
    a.add_argument("--no-figures", dest="figures", action="store_false")
    return p


def resolve_config(ns):
    """Merge built-in defaults, the optional config file and explicit flags."""
    args = vars(ns)
    cmd = args["command"]
    cfg = {**DEFAULTS["common"], **DEFAULTS[cmd]}
    path = args.get("config")
    if path:
        try:
            with open(path) as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ValidationError("config file must hold a JSON object")
        unknown = set(file_cfg) - set(cfg) - {"input"}
        if unknown:
            raise ValidationError(f"unknown config keys for '{cmd}': {sorted(unknown)}")
        cfg.update(file_cfg)
    cfg.update(args)
    return cfg


def default_out(cmd):
    return Path(os.environ.get(OUT_ENV) or ".") / DEFAULT_NAMES[cmd]


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    outputs = Outputs()
    try:
        cfg = resolve_config(ns)
        if cfg["command"] in STOCHASTIC:
            _require_seed(cfg)
        out = Path(cfg["out"]) if cfg["out"] else default_out(cfg["command"])
        if out.parent and not out.parent.exists():
            raise ValidationError(f"output directory {out.parent} does not exist")
        func = COMMANDS[cfg["command"]][0]
        func(cfg, out, outputs)
    except (ValidationError, ValueError, RuntimeError, OSError) as exc:
        outputs.remove()
        msg = str(exc) or exc.__class__.__name__
        print(f"specdiff {ns.command}: error: {msg}", file=sys.stderr)
        return 1
    except BaseException:
        outputs.remove()
        raise
    for p in outputs.paths:
        log.info("wrote %s", p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
