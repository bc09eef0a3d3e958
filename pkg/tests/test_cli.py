import csv
import json
from pathlib import Path

import numpy as np
import pytest

from specdiff.cli import main
from specdiff.core import parse_spectral_series, parse_zpl_trace

GOLDEN = Path(__file__).parent / "golden"
PRESETS = ("stable", "unstable", "bath")


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def spectra(tmp_path_factory):
    d = tmp_path_factory.mktemp("spectra")
    out = d / "s.csv"
    assert main(["simulate", "--seed", "1", "--n-frames", "190", "-o", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def trace_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("trace") / "t.csv"
    assert main(["simulate", "--seed", "2", "--n-frames", "400", "--trace-only",
                 "-o", str(out)]) == 0
    return out


@pytest.mark.parametrize("name", PRESETS)
def test_golden_traces(tmp_path, name):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["simulate", "--preset", name, "--seed", "7", "--n-frames", "200",
                     "--trace-only", "-o", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a_config.json").read_bytes() == (tmp_path / "b_config.json").read_bytes()
    got, want = parse_zpl_trace(a), parse_zpl_trace(GOLDEN / f"{name}.csv")
    np.testing.assert_allclose(got.values, want.values, rtol=0, atol=1e-9)
    np.testing.assert_allclose(got.timestamps, want.timestamps, rtol=0, atol=1e-12)
    assert json.loads((tmp_path / "a_config.json").read_text()) == \
        json.loads((GOLDEN / f"{name}_config.json").read_text())


def test_simulate_writes_spectra_truth_and_config(spectra):
    series = parse_spectral_series(spectra)
    assert series.frames.shape[0] == 190
    truth = parse_zpl_trace(spectra.with_name("s_truth.csv"))
    assert len(truth) == 190
    meta = json.loads(spectra.with_name("s_config.json").read_text())
    assert meta["preset"] == "stable" and meta["seed"] == 1 and "render" in meta


def test_usage_errors_exit_2(capsys):
    assert main(["bogus"]) == 2
    assert main(["simulate", "--preset", "nope", "--seed", "1"]) == 2
    assert main([]) == 2


def test_missing_seed_exits_1(tmp_path, capsys):
    out = tmp_path / "x.csv"
    assert main(["simulate", "-o", str(out)]) == 1
    assert "--seed" in capsys.readouterr().err
    assert not out.exists()


def test_validation_error_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t_s,lambda_nm\n0.0,539.5\n0.0,539.6\n")
    assert main(["acf", str(bad), "-o", str(tmp_path / "acf.csv")]) == 1
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "acf.csv").exists()
    assert main(["acf", str(tmp_path / "missing.csv"), "-o", str(tmp_path / "a.csv")]) == 1
    assert main(["acf", str(bad), "-o", str(tmp_path / "nodir" / "a.csv")]) == 1


def test_partial_outputs_removed_on_failure(tmp_path, trace_file):
    g2 = tmp_path / "g2.csv"
    g2.write_text("wrong,header\n1,2\n")
    out = tmp_path / "rep"
    rc = main(["report", "--seed", "0", "--trace", str(trace_file), "--g2", str(g2),
               "-o", str(out)])
    assert rc == 1
    # figures for the earlier panels were written before the failure and then removed
    assert not out.exists()


def test_config_precedence(tmp_path, trace_file):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"max_lag": 20}))
    out = tmp_path / "acf.csv"
    assert main(["acf", str(trace_file), "--config", str(cfg), "-o", str(out)]) == 0
    assert len(read_rows(out)) == 22
    assert main(["acf", str(trace_file), "--config", str(cfg), "--max-lag", "30",
                 "-o", str(out)]) == 0
    assert len(read_rows(out)) == 32
    assert main(["acf", str(trace_file), "-o", str(out)]) == 0
    assert len(read_rows(out)) == 102


def test_config_rejects_unknown_keys(tmp_path, trace_file, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"max_lags": 20}))
    assert main(["acf", str(trace_file), "--config", str(cfg), "-o", str(tmp_path / "a.csv")]) == 1
    assert "max_lags" in capsys.readouterr().err
    cfg.write_text("[1, 2]")
    assert main(["acf", str(trace_file), "--config", str(cfg), "-o", str(tmp_path / "a.csv")]) == 1


def test_default_output_directory(tmp_path, trace_file, monkeypatch):
    monkeypatch.setenv("SPECDIFF_OUT", str(tmp_path))
    assert main(["psd", str(trace_file)]) == 0
    assert (tmp_path / "psd.csv").exists() and (tmp_path / "psd_segments.json").exists()


def test_overlap_window_count(spectra, tmp_path):
    out = tmp_path / "ov.csv"
    assert main(["overlap", str(spectra), "-o", str(out)]) == 0
    rows = read_rows(out)
    assert rows[0][:2] == ["window_start", "bin_0"] and len(rows[0]) == 51
    assert len(rows) - 1 == 10
    assert [int(r[0]) for r in rows[1:]] == list(range(0, 100, 10))
    # every window holds 100 * 99 / 2 pairs
    assert all(sum(map(int, r[1:])) == 4950 for r in rows[1:])
    single = tmp_path / "one.json"
    assert main(["overlap", str(spectra), "--single", "-o", str(single)]) == 0
    assert json.loads(single.read_text())["n_replicas"] == 190


def test_extract_acf_psd_chain(spectra, tmp_path):
    zpl = tmp_path / "zpl.csv"
    assert main(["extract", str(spectra), "-o", str(zpl)]) == 0
    summary = json.loads((tmp_path / "zpl_summary.json").read_text())
    assert sum(summary["non_converged"].values()) == 0
    got = parse_zpl_trace(zpl)
    truth = parse_zpl_trace(spectra.with_name("s_truth.csv"))
    assert np.sqrt(np.mean((got.values - truth.values) ** 2)) < 0.2 * summary["bin_width_nm"]
    assert main(["acf", str(zpl), "--max-lag", "50", "-o", str(tmp_path / "acf.csv")]) == 0
    rows = read_rows(tmp_path / "acf.csv")
    assert rows[0] == ["lag", "r", "band"] and float(rows[1][1]) == 1.0
    fit = json.loads((tmp_path / "acf_fit.json").read_text())
    assert set(fit) == {"n", "first_band_crossing", "fits"}
    assert main(["psd", str(zpl), "-o", str(tmp_path / "psd.csv")]) == 0
    seg = json.loads((tmp_path / "psd_segments.json").read_text())
    assert len(seg["change_points"]) <= 2 and seg["fs"] == pytest.approx(2000.0)


def test_extract_window_must_hold_the_line(tmp_path):
    src = tmp_path / "u.csv"
    assert main(["simulate", "--preset", "unstable", "--seed", "1", "--n-frames", "60",
                 "-o", str(src)]) == 0
    # the unstable emitter sits near 550.76 nm, outside the default ZPL window
    assert main(["extract", str(src), "-o", str(tmp_path / "z.csv")]) == 1
    assert not (tmp_path / "z.csv").exists()
    assert main(["extract", str(src), "--zpl-window", "549.5", "552.5",
                 "-o", str(tmp_path / "z.csv")]) == 0
    got = parse_zpl_trace(tmp_path / "z.csv")
    truth = parse_zpl_trace(tmp_path / "u_truth.csv")
    assert np.max(np.abs(got.values - truth.values)) < 0.05


def test_g2fit(tmp_path):
    from specdiff.peakfit import g2_model

    t = np.linspace(-50e-9, 50e-9, 201)
    g = g2_model(t, 0.2, 5e-9)
    src = tmp_path / "g2.csv"
    rows = "".join(f"{a!r},{b!r}\n" for a, b in zip(t.tolist(), g.tolist()))
    src.write_text("delay_s,g2\n" + rows)
    out = tmp_path / "fit.json"
    assert main(["g2fit", str(src), "-o", str(out)]) == 0
    assert json.loads(out.read_text())["g2_0"] == pytest.approx(0.2, abs=1e-6)


def test_forecast_rows_span_four_ms(trace_file, tmp_path):
    out = tmp_path / "fc.csv"
    assert main(["forecast", str(trace_file), "--kind", "linear", "-o", str(out)]) == 0
    rows = read_rows(out)
    assert rows[0] == ["step", "t_s", "lambda_pred_nm"] and len(rows) == 9
    last = parse_zpl_trace(trace_file).timestamps[-1]
    t = np.array([float(r[1]) for r in rows[1:]])
    assert t[-1] - last == pytest.approx(4e-3)
    assert main(["forecast", str(trace_file), "-o", str(out)]) == 1


def test_train_forecast_evaluate_deterministic(trace_file, tmp_path):
    small = ["--hidden-size", "6", "--seq-len", "8", "--max-epochs", "2"]
    for tag in ("a", "b"):
        assert main(["train", str(trace_file), "--seed", "3", *small,
                     "-o", str(tmp_path / f"m{tag}.json")]) == 0
    assert (tmp_path / "ma.json").read_bytes() == (tmp_path / "mb.json").read_bytes()
    out = tmp_path / "fc.csv"
    assert main(["forecast", str(trace_file), "--model", str(tmp_path / "ma.json"),
                 "-o", str(out)]) == 0
    assert len(read_rows(out)) == 9
    assert json.loads((tmp_path / "fc_attention.json").read_text())["attention"]
    for tag in ("a", "b"):
        assert main(["evaluate", str(trace_file), "--seed", "5", "--schemes", "8:1:1",
                     "--models", "bi-attn-lstm,linear", *small,
                     "-o", str(tmp_path / f"e{tag}.json")]) == 0
    assert (tmp_path / "ea.json").read_bytes() == (tmp_path / "eb.json").read_bytes()
    assert (tmp_path / "ea.csv").exists() and (tmp_path / "ea_mismatch_8-1-1.csv").exists()


def test_train_with_search(trace_file, tmp_path):
    space = tmp_path / "space.json"
    space.write_text(json.dumps({"space": {"hidden_size": [4, 6], "seq_len": [6, 8],
                                           "num_layers": [1, 1]}}))
    out = tmp_path / "m.json"
    assert main(["train", str(trace_file), "--seed", "1", "--trials", "2", "--max-epochs", "2",
                 "--config", str(space), "-o", str(out)]) == 0
    log = json.loads((tmp_path / "m_search.json").read_text())
    assert len(log["trials"]) == 2


def test_report_without_figures(spectra, tmp_path):
    out = tmp_path / "rep"
    assert main(["report", "--seed", "0", "--spectra", str(spectra), "--no-figures",
                 "-o", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["report.json"]
    bundle = json.loads((out / "report.json").read_text())
    assert {"trace", "reference", "overlap", "acf", "psd", "extraction"} <= set(bundle)
    assert len(bundle["overlap"]["window_starts"]) == 10


def test_report_with_figures(trace_file, tmp_path):
    out = tmp_path / "rep"
    assert main(["report", "--seed", "0", "--trace", str(trace_file), "-o", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["fig_acf.png", "fig_psd.png", "fig_traces.png", "report.json"]
    assert all((out / n).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n" for n in names[:3])
