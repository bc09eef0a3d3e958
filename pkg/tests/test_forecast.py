import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specdiff.core import ValidationError, ZplTrace
from specdiff.forecast import (ForecastResult, Hyperparams, Normalizer, TrainedForecaster,
                               TrainingDivergedError, autoregressive_forecast, forward,
                               gradient_check, parse_split, split_sizes, train)
from specdiff.forecast import model as M
from specdiff.forecast.train import effective_length, make_windows
from specdiff.simulator import preset, simulate_fluctuator_bath

SMALL = Hyperparams(hidden_size=4, seq_len=5, num_layers=1, dropout=0.0, learning_rate=1e-3)


def _random_model(hp, seed=0):
    params = M.init_params(hp, np.random.default_rng(seed))
    return TrainedForecaster(params, Normalizer(539.5, 0.0, 0.1), hp, {"sigma_ref": 1.0})


def test_hyperparams_validation():
    for kw in ({"hidden_size": 0}, {"seq_len": 1}, {"dropout": 1.0}, {"learning_rate": 0.0}):
        with pytest.raises(ValueError):
            Hyperparams(**kw)


def test_init_ranges_and_forget_bias():
    hp = Hyperparams(hidden_size=6, seq_len=8, num_layers=2)
    p = M.init_params(hp, np.random.default_rng(1))
    assert {k: v.shape for k, v in p.items()} == M.param_shapes(hp)
    assert np.all(np.abs(p["W0f"]) <= 1 / np.sqrt(7))
    assert np.all(np.abs(p["W1b"]) <= 1 / np.sqrt(18))
    for k in ("b0f", "b0b", "b1f", "b1b"):
        assert np.all(p[k][6:12] == 1.0)


@pytest.mark.parametrize("hp", [
    SMALL,
    Hyperparams(hidden_size=3, seq_len=4, num_layers=2, dropout=0.3),
    Hyperparams(hidden_size=8, seq_len=6, num_layers=1),
])
def test_gradient_check(hp):
    assert gradient_check(hp, seed=7) < 1e-4


def test_gradient_check_needs_small_model():
    with pytest.raises(ValidationError):
        gradient_check(Hyperparams(hidden_size=16, seq_len=6))


def test_finite_difference_error_is_second_order():
    # central differences: the error scales with step**2, so 10x the step
    # gives roughly 100x the discrepancy
    _, d1 = gradient_check(SMALL, seed=3, step=1e-3, return_details=True)
    _, d2 = gradient_check(SMALL, seed=3, step=1e-2, return_details=True)
    e1 = np.array([abs(a - n) for _, _, a, n, _ in d1])
    e2 = np.array([abs(a - n) for _, _, a, n, _ in d2])
    ok = e1 > 1e-14
    ratio = np.median(e2[ok] / e1[ok])
    assert 30 < ratio < 300


def test_zero_loss_batch_has_finite_gradients():
    p = M.init_params(SMALL, np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal((4, SMALL.seq_len))
    y, _, _ = M.forward_batch(p, SMALL, x)
    loss, grads = M.mse_and_grads(p, SMALL, x, y)
    assert loss == 0.0
    assert all(np.all(np.isfinite(g)) and np.all(g == 0) for g in grads.values())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12))
def test_attention_simplex(seed, T):
    hp = Hyperparams(hidden_size=5, seq_len=12, num_layers=1 + seed % 2)
    model = _random_model(hp, seed)
    w = np.random.default_rng(seed).standard_normal(T) * 3
    _, a = forward(model, w)
    assert a.shape == (T,)
    assert np.all(a >= 0) and abs(a.sum() - 1) <= 1e-12


def test_context_invariant_to_joint_permutation():
    hp = Hyperparams(hidden_size=4, seq_len=7)
    _, alpha, cache = M.forward_batch(M.init_params(hp, np.random.default_rng(2)), hp,
                                      np.random.default_rng(3).standard_normal((1, 7)))
    H = cache["H"][0]
    perm = np.random.default_rng(4).permutation(7)
    np.testing.assert_allclose(alpha[0][perm] @ H[perm], cache["C"][0], rtol=1e-14, atol=1e-15)


def test_forward_checks_and_determinism():
    model = _random_model(SMALL)
    w = np.linspace(-1, 1, 5)
    assert forward(model, w)[0] == forward(model, w)[0]
    with pytest.raises(ValidationError):
        forward(model, np.zeros(6))
    with pytest.raises(ValidationError):
        forward(model, np.zeros(1))
    with pytest.raises(ValidationError):
        forward(model, np.array([0.0, np.nan, 0.0]))


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-10, 10), st.floats(1e-6, 1e3),
       st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20))
def test_denormalize_roundtrip(anchor, offset, sigma, values):
    norm = Normalizer(anchor + 539.0, offset, sigma)
    x = np.asarray(values) + 539.0
    back = norm.denormalize(norm.normalize(x))
    np.testing.assert_allclose(back, x, rtol=1e-10, atol=0)


def test_normalizer_fit_matches_training_moments(rng):
    x = 539.5 + 0.02 * rng.standard_normal(200)
    n = Normalizer.fit(x)
    assert n.mu == pytest.approx(x.mean(), rel=1e-14)
    assert n.sigma == pytest.approx(x.std(), rel=1e-12)
    with pytest.raises(ValidationError):
        Normalizer.fit(np.ones(10))


def test_split_parsing():
    assert parse_split("8:1:1") == (8, 1, 1)
    assert parse_split([5, 4, 1]) == (5, 4, 1)
    assert split_sizes(1200, "7:2:1") == (840, 240, 120)
    for bad in ("8:1", "8:2:1", "9:1:0", "a:b:c"):
        with pytest.raises(ValidationError):
            parse_split(bad)


def test_make_windows():
    z = np.arange(10.0)
    X, y = make_windows(z, 3, [3, 9])
    np.testing.assert_array_equal(X, [[0, 1, 2], [6, 7, 8]])
    np.testing.assert_array_equal(y, [3, 9])


def test_train_input_checks():
    hp = Hyperparams(hidden_size=4, seq_len=16)
    with pytest.raises(ValidationError, match="seq_len"):
        train(np.arange(30.0), hp)
    with pytest.raises(ValidationError):
        train(np.r_[np.arange(100.0), np.nan], hp)


def test_train_on_constants(constant_model):
    model, trace, noise = constant_model
    n_train, n_val = model.train_meta["n_train"], model.train_meta["n_val"]
    x = trace.values
    # white noise cannot be predicted: the best possible validation RMSE is
    # that of the training mean
    floor = np.sqrt(np.mean((x[n_train:n_train + n_val] - x[:n_train].mean()) ** 2))
    assert model.train_meta["best_val_rmse_nm"] <= 1.05 * floor
    assert model.train_meta["best_val_rmse_nm"] <= 1.2 * noise


def test_constant_history_forecast(constant_model):
    model, _, _ = constant_model
    res = autoregressive_forecast(model, np.full(20, 539.55), 8)
    assert np.max(np.abs(res.predictions - 539.55)) < 1e-3


def test_loss_decreases_early():
    trace = simulate_fluctuator_bath(preset("stable", n_frames=600), 0)
    m = train(trace, Hyperparams(32, 16, 1, 0.0, 1e-3), seed=0, max_epochs=5)
    tr = np.asarray(m.train_meta["train_rmse"])
    smooth = np.convolve(tr, np.ones(2) / 2, mode="valid")
    assert np.all(np.diff(smooth) < 0)
    assert m.train_meta["epochs"] == 5


def test_noiseless_sinusoid_fit():
    n = 400
    x = 539.55 + 0.05 * np.sin(2 * np.pi * np.arange(n) / 25)
    hp = Hyperparams(32, 16, 1, 0.0, 1e-3)
    model = train(ZplTrace.uniform(x, 5e-4), hp, (8, 1, 1), seed=0)
    z = model.norm.normalize(x)
    n_train, n_val, _ = split_sizes(n, (8, 1, 1))
    X, y = make_windows(z, 16, np.arange(n_train + n_val, n))
    pred = M.forward_batch(model.params, hp, X)[0]
    assert np.sqrt(np.mean((pred - y) ** 2)) < 0.05


def test_training_is_seeded():
    trace = simulate_fluctuator_bath(preset("stable", n_frames=300), 1)
    hp = Hyperparams(6, 8, 1, 0.2, 3e-3)
    a = train(trace, hp, seed=5, max_epochs=4)
    b = train(trace, hp, seed=5, max_epochs=4)
    c = train(trace, hp, seed=6, max_epochs=4)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert not np.array_equal(a.params["out_w"], c.params["out_w"])


def test_divergence_is_reported(monkeypatch):
    def nan_loss(params, hp, x, target, masks=None):
        return float("nan"), {k: np.zeros_like(v) for k, v in params.items()}

    monkeypatch.setattr(M, "mse_and_grads", nan_loss)
    with pytest.raises(TrainingDivergedError, match="learning_rate"):
        train(np.sin(np.arange(100.0)), SMALL, max_epochs=3)


def test_shift_equivariance():
    trace = simulate_fluctuator_bath(preset("stable", n_frames=300), 2)
    hp = Hyperparams(6, 8, 1, 0.0, 3e-3)
    shifted = trace.with_values(trace.values + 1.0)
    a = train(trace, hp, seed=1, max_epochs=5)
    b = train(shifted, hp, seed=1, max_epochs=5)
    fa = autoregressive_forecast(a, trace.slice(0, 250), 8).predictions
    fb = autoregressive_forecast(b, shifted.slice(0, 250), 8).predictions
    assert np.max(np.abs((fb - fa) - 1.0)) < 1e-8


def test_forecast_horizon_spans_4ms(constant_model):
    model, trace, _ = constant_model
    res = autoregressive_forecast(model, trace.slice(0, 100), 8)
    assert res.horizon == 8 and len(res.attention_maps) == 8
    assert res.timestamps[-1] - trace.timestamps[99] == pytest.approx(4e-3, rel=1e-9)
    with pytest.raises(ValidationError):
        autoregressive_forecast(model, trace.slice(0, 5), 8)
    with pytest.raises(ValidationError):
        autoregressive_forecast(model, trace, 0)


def test_adapt_inactive_on_stationary_series(constant_model):
    model, trace, _ = constant_model
    hist = trace.slice(0, model.train_meta["n_train"])
    a = autoregressive_forecast(model, hist, 8, adapt=False)
    b = autoregressive_forecast(model, hist, 8, adapt=True)
    assert np.array_equal(a.predictions, b.predictions)
    assert all(m.size == model.hp.seq_len for m in b.attention_maps)


def test_adapt_shortens_window_when_volatile(constant_model):
    model, _, noise = constant_model
    L = model.hp.seq_len
    volatile = 539.55 + 50 * noise * (-1.0) ** np.arange(3 * L)
    z = model.norm.normalize(volatile[-L:])
    assert 4 <= effective_length(model, z) < L
    res = autoregressive_forecast(model, volatile, 3, adapt=True)
    assert res.attention_maps[0].size == effective_length(model, z)


def test_checkpoint_roundtrip(tmp_path, constant_model):
    model, trace, _ = constant_model
    path = tmp_path / "m.json"
    model.save(path)
    back = TrainedForecaster.load(path)
    assert back.hp == model.hp and back.norm == model.norm
    a = autoregressive_forecast(model, trace, 8).predictions
    b = autoregressive_forecast(back, trace, 8).predictions
    assert np.array_equal(a, b)
    d = json.loads(path.read_text())
    d["version"] = 99
    with pytest.raises(ValidationError):
        TrainedForecaster.from_dict(d)
    d["version"] = 1
    d["shapes"]["out_w"] = [3]
    with pytest.raises(ValidationError):
        TrainedForecaster.from_dict(d)


def test_forecast_result_validation():
    with pytest.raises(ValidationError):
        ForecastResult(np.zeros(3), 4, (), "linear")
    with pytest.raises(ValidationError):
        ForecastResult(np.zeros(1), 1, (np.array([0.5, 0.4]),), "bi-attn-lstm")
