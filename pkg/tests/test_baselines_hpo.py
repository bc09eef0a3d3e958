import numpy as np
import pytest

from specdiff.core import ValidationError, ZplTrace
from specdiff.forecast import (Hyperparams, SearchSpace, TrainingDivergedError,
                               baseline_forecast, fit_polynomial, fit_sine,
                               hyperparameter_search, random_sampler, train)
from specdiff.forecast.hpo import trial_seeds
from specdiff.simulator import sinusoid_ou_trace


def test_linear_exact_continuation():
    t = np.arange(10.0)
    res = baseline_forecast("linear", 3 * t + 1, 4)
    np.testing.assert_allclose(res.predictions, 3 * np.arange(10, 14) + 1, rtol=0, atol=1e-12)
    assert res.model_kind == "linear" and res.attention_maps == ()


def test_poly5_exact_continuation():
    c = [0.3, -1.2, 0.5, 0.02, -0.004, 1e-4]
    t = np.arange(30.0)
    res = baseline_forecast("poly5", np.polyval(c, t), 8)
    np.testing.assert_allclose(res.predictions, np.polyval(c, np.arange(30, 38)), rtol=1e-8)


def test_sine_parameter_recovery():
    t = np.linspace(0, 1, 200)
    y = 0.1 * np.sin(2 * np.pi * 5 * t + 0.3) + 539.5
    fit = fit_sine(t, y)
    assert fit.converged
    got = [fit.amplitude, fit.omega, fit.phase, fit.offset]
    np.testing.assert_allclose(got, [0.1, 2 * np.pi * 5, 0.3, 539.5], rtol=1e-6)


def test_sine_on_zpl_trace_uses_time_axis():
    t = np.arange(64) * 5e-4
    trace = ZplTrace(t, 539.5 + 0.05 * np.sin(2 * np.pi * 100 * t))
    res = baseline_forecast("sine", trace, 8)
    np.testing.assert_allclose(res.timestamps, t[-1] + 5e-4 * np.arange(1, 9))
    np.testing.assert_allclose(res.predictions, 539.5 + 0.05 * np.sin(2 * np.pi * 100 * res.timestamps),
                               atol=1e-9)


def test_trailing_window():
    y = np.r_[np.zeros(20), np.arange(10.0)]
    res = baseline_forecast("linear", y, 2, window=10)
    np.testing.assert_allclose(res.predictions, [10, 11], atol=1e-12)


@pytest.mark.parametrize("kind, n", [("linear", 1), ("poly5", 5), ("sine", 3)])
def test_minimum_history(kind, n):
    with pytest.raises(ValidationError):
        baseline_forecast(kind, np.arange(float(n)), 8)


def test_baseline_errors():
    with pytest.raises(ValidationError):
        baseline_forecast("arima", np.arange(10.0))
    with pytest.raises(ValidationError, match="singular"):
        fit_polynomial(np.ones(8), np.arange(8.0), 1)


TINY = SearchSpace(hidden_size=(4, 6), seq_len=(6, 10), num_layers=(1, 1), dropout=(0.0, 0.2),
                   learning_rate=(1e-3, 1e-2))


@pytest.fixture(scope="module")
def fixture_trace():
    return sinusoid_ou_trace(300, 0)


def test_search_space_validation():
    with pytest.raises(ValidationError):
        SearchSpace(hidden_size=(10, 5))
    with pytest.raises(ValidationError):
        SearchSpace(dropout=(0.0, 1.0))
    with pytest.raises(ValidationError):
        SearchSpace(learning_rate=(0.0, 1e-2))
    assert SearchSpace.from_dict(TINY.to_dict()) == TINY


def test_sampler_stays_in_space():
    rng = np.random.default_rng(0)
    space = SearchSpace()
    hps = [random_sampler(space, rng) for _ in range(500)]
    assert {h.num_layers for h in hps} == {1, 2, 3}
    assert min(h.hidden_size for h in hps) >= 8 and max(h.hidden_size for h in hps) <= 128
    assert min(h.seq_len for h in hps) >= 8 and max(h.seq_len for h in hps) <= 64
    lr = np.log10([h.learning_rate for h in hps])
    assert -4 <= lr.min() and lr.max() <= -2
    # log-uniform: about half the draws fall below the geometric midpoint
    assert abs(np.mean(lr < -3) - 0.5) < 0.1


def test_single_trial_equals_train(fixture_trace):
    best, log = hyperparameter_search(fixture_trace, TINY, 1, (8, 1, 1), seed=3, max_epochs=4)
    rec = log[0]
    ref = train(fixture_trace, Hyperparams(**rec["hp"]), (8, 1, 1), seed=rec["train_seed"],
                max_epochs=4)
    assert best.hp == ref.hp
    assert all(np.array_equal(best.params[k], ref.params[k]) for k in ref.params)


def test_search_is_deterministic_and_best_beats_median(fixture_trace):
    a = hyperparameter_search(fixture_trace, TINY, 10, "8:1:1", seed=11, max_epochs=4)
    b = hyperparameter_search(fixture_trace, TINY, 10, "8:1:1", seed=11, max_epochs=4)
    assert a[1] == b[1]
    vals = [r["val_rmse"] for r in a[1] if r["status"] == "ok"]
    assert len(vals) == 10
    assert a[0].train_meta["best_val_rmse"] == min(vals) <= np.median(vals)


def test_trial_seeds_are_distinct():
    seeds = trial_seeds(0, 25)
    assert len(set(seeds)) == 25
    assert seeds == trial_seeds(0, 25)


def test_invalid_and_failed_trials(fixture_trace):
    too_long = SearchSpace(seq_len=(400, 400), hidden_size=(4, 4), num_layers=(1, 1))
    with pytest.raises(TrainingDivergedError):
        hyperparameter_search(fixture_trace, too_long, 2, seed=0, max_epochs=2)
    with pytest.raises(ValidationError):
        hyperparameter_search(fixture_trace, TINY, 0)
