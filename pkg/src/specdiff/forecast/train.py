"""Training, inference, checkpointing and gradient verification."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from ..core import ValidationError, ZplTrace
from . import model as M
from .model import Hyperparams

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
MIN_DELTA = 1e-5
L_MIN = 4


class TrainingDivergedError(RuntimeError):
    pass


def as_seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def parse_split(split):
    """Accept ``(8, 1, 1)`` or ``"8:1:1"``; parts are integers >= 1 summing to 10."""
    if isinstance(split, str):
        split = split.split(":")
    try:
        parts = tuple(int(s) for s in split)
    except (TypeError, ValueError):
        raise ValidationError(f"bad partition scheme {split!r}") from None
    if len(parts) != 3 or sum(parts) != 10 or min(parts) < 1:
        raise ValidationError(f"partition {parts} must be three parts >= 1 summing to 10")
    return parts


def split_sizes(n, split):
    a, b, _ = parse_split(split)
    n_train = n * a // 10
    n_val = n * b // 10
    return n_train, n_val, n - n_train - n_val


@dataclass(frozen=True)
class Normalizer:
    """z-score map with offsets taken relative to an anchor sample.

    ``mu = anchor + offset`` and ``sigma`` are the training-split mean and
    standard deviation.  Subtracting the anchor first makes the normalised
    series of ``x + c`` bit-identical to that of ``x`` whenever the shift is
    exact in floating point, so trained models shift exactly with the data.
    """

    anchor: float
    offset: float
    sigma: float

    @classmethod
    def fit(cls, x):
        x = np.asarray(x, dtype=float)
        anchor = float(x[0])
        d = x - anchor
        sigma = float(np.std(d))
        if not sigma > 0:
            raise ValidationError("training split has zero variance")
        return cls(anchor, float(np.mean(d)), sigma)

    @property
    def mu(self):
        return self.anchor + self.offset

    def normalize(self, x):
        return ((np.asarray(x, dtype=float) - self.anchor) - self.offset) / self.sigma

    def denormalize(self, z):
        return (np.asarray(z, dtype=float) * self.sigma + self.offset) + self.anchor


def make_windows(z, L, targets):
    """Inputs ``z[j-L:j]`` and targets ``z[j]`` for each index in ``targets``."""
    targets = np.asarray(targets, dtype=int)
    idx = targets[:, None] + np.arange(-L, 0)[None, :]
    return z[idx], z[targets]


def window_reference_std(z, L):
    """Largest standard deviation of any length-``L`` window of ``z``."""
    w = np.lib.stride_tricks.sliding_window_view(z, L)
    return float(w.std(axis=1).max())


@dataclass
class TrainedForecaster:
    params: dict
    norm: Normalizer
    hp: Hyperparams
    train_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, shape in M.param_shapes(self.hp).items():
            if name not in self.params or self.params[name].shape != shape:
                raise ValidationError(f"parameter {name} missing or mis-shaped")
        if not self.norm.sigma > 0:
            raise ValidationError("sigma_orig must be > 0")

    @property
    def sigma_ref(self):
        return float(self.train_meta.get("sigma_ref", 1.0))

    def to_dict(self):
        shapes = M.param_shapes(self.hp)
        return {
            "format": "specdiff-forecaster",
            "version": CHECKPOINT_VERSION,
            "hp": self.hp.to_dict(),
            "norm": {"anchor": self.norm.anchor, "offset": self.norm.offset,
                     "sigma": self.norm.sigma},
            "shapes": {k: list(v) for k, v in shapes.items()},
            "params": {k: self.params[k].ravel().tolist() for k in shapes},
            "train_meta": self.train_meta,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "specdiff-forecaster":
            raise ValidationError("not a forecaster checkpoint")
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValidationError(f"unsupported checkpoint version {d.get('version')}")
        hp = Hyperparams(**d["hp"])
        params = {}
        for k, shape in M.param_shapes(hp).items():
            if list(shape) != list(d["shapes"].get(k, [])):
                raise ValidationError(f"checkpoint shape mismatch for {k}")
            params[k] = np.asarray(d["params"][k], dtype=float).reshape(shape)
        return cls(params, Normalizer(**d["norm"]), hp, dict(d.get("train_meta", {})))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class ForecastResult:
    predictions: np.ndarray
    horizon: int
    attention_maps: tuple
    model_kind: str
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        if len(self.predictions) != self.horizon:
            raise ValidationError("predictions length differs from horizon")
        for a in self.attention_maps:
            if abs(float(np.sum(a)) - 1.0) > 1e-9:
                raise ValidationError("attention map does not sum to 1")


def forward(model: TrainedForecaster, window):
    """One-step prediction from a normalised window of length ``2 <= L_eff <= L``."""
    w = np.asarray(window, dtype=float)
    if w.ndim != 1 or w.size < 2:
        raise ValidationError("window must be 1-D with at least 2 values")
    if w.size > model.hp.seq_len:
        raise ValidationError(f"window longer than seq_len={model.hp.seq_len}")
    if not np.all(np.isfinite(w)):
        raise ValidationError("non-finite value in window")
    y, alpha, _ = M.forward_batch(model.params, model.hp, w[None, :])
    a = alpha[0]
    assert np.all(a >= 0) and abs(a.sum() - 1.0) <= 1e-9
    return float(y[0]), a


def predict_batch(model, windows):
    y, _, _ = M.forward_batch(model.params, model.hp, windows)
    return y


def _rmse(a, b):
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def train(trace, hp: Hyperparams, split=(8, 1, 1), seed=0, max_epochs=500,
          patience=20, batch_size=32, min_delta=MIN_DELTA, horizon=8):
    """Fit a forecaster on the training split with early stopping on validation.

    Parameters
    ----------
    trace : ZplTrace or array_like
        Values in nm.
    split : triple summing to 10
        Train:validation:test; only train and validation are used here.

    Returns
    -------
    TrainedForecaster
        Parameters from the epoch with the lowest validation RMSE.
    """
    x = trace.values if isinstance(trace, ZplTrace) else np.asarray(trace, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValidationError("non-finite value in trace")
    L = hp.seq_len
    if x.size < L + horizon + 10:
        raise ValidationError(f"trace length {x.size} < seq_len + horizon + 10 = {L + horizon + 10}")
    n_train, n_val, _ = split_sizes(x.size, split)
    if n_train <= L:
        raise ValidationError(f"training split ({n_train}) must exceed seq_len ({L})")
    if n_val < 1:
        raise ValidationError("validation split is empty")
    norm = Normalizer.fit(x[:n_train])
    z = norm.normalize(x)
    Xtr, ytr = make_windows(z, L, np.arange(L, n_train))
    Xva, yva = make_windows(z, L, np.arange(n_train, n_train + n_val))

    s_init, s_shuffle, s_drop = as_seed_sequence(seed).spawn(3)
    params = M.init_params(hp, np.random.default_rng(s_init))
    rng_shuffle = np.random.default_rng(s_shuffle)
    rng_drop = np.random.default_rng(s_drop)
    m1 = {k: np.zeros_like(v) for k, v in params.items()}
    m2 = {k: np.zeros_like(v) for k, v in params.items()}
    b1, b2 = ADAM_BETAS
    step = 0

    best = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch = 0
    history = []
    since = 0
    n = ytr.size
    for epoch in range(1, max_epochs + 1):
        order = rng_shuffle.permutation(n)
        sq = 0.0
        for s in range(0, n, batch_size):
            idx = order[s:s + batch_size]
            masks = M.dropout_masks(hp, idx.size, L, rng_drop)
            loss, grads = M.mse_and_grads(params, hp, Xtr[idx], ytr[idx], masks)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch}, batch {s // batch_size} "
                    f"(learning_rate={hp.learning_rate})")
            sq += loss * idx.size
            step += 1
            c1 = 1 - b1 ** step
            c2 = 1 - b2 ** step
            for k in params:
                g = grads[k]
                m1[k] = b1 * m1[k] + (1 - b1) * g
                m2[k] = b2 * m2[k] + (1 - b2) * g * g
                params[k] -= hp.learning_rate * (m1[k] / c1) / (np.sqrt(m2[k] / c2) + ADAM_EPS)
        train_rmse = float(np.sqrt(sq / n))
        val_rmse = _rmse(M.forward_batch(params, hp, Xva)[0], yva)
        if not (np.isfinite(train_rmse) and np.isfinite(val_rmse)):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
        history.append((train_rmse, val_rmse))
        if val_rmse < best - min_delta:
            best, best_epoch, since = val_rmse, epoch, 0
            best_params = {k: v.copy() for k, v in params.items()}
        else:
            since += 1
            if since >= patience:
                break
    log.info("trained %d epochs, best val RMSE %.5g at epoch %d", len(history), best, best_epoch)
    meta = {
        "epochs": len(history),
        "best_epoch": best_epoch,
        "best_val_rmse": best,
        "best_val_rmse_nm": best * norm.sigma,
        "train_rmse": [h[0] for h in history],
        "val_rmse": [h[1] for h in history],
        "split": list(parse_split(split)),
        "seed": int(seed) if np.isscalar(seed) else None,
        "horizon": int(horizon),
        "n_train": int(n_train),
        "n_val": int(n_val),
        # reference volatility for the adaptive window: the largest std of any
        # L-window in the training split
        "sigma_ref": window_reference_std(z[:n_train], L),
    }
    return TrainedForecaster(best_params, norm, hp, meta)


def effective_length(model: TrainedForecaster, recent):
    """Adaptive window length from the std of the most recent ``L`` values."""
    L = model.hp.seq_len
    lo = min(L_MIN, L)
    s = float(np.std(recent))
    if s <= model.sigma_ref or s == 0:
        return L
    return int(np.clip(round(L * model.sigma_ref / s), lo, L))


def autoregressive_forecast(model: TrainedForecaster, history, horizon=8, adapt=False):
    """Recursive multi-step forecast in nm.

    Each prediction is appended to the window for the next step.  With
    ``adapt`` the window is shortened when recent volatility exceeds the
    training reference.
    """
    if horizon < 1:
        raise ValidationError("horizon must be >= 1")
    if isinstance(history, ZplTrace):
        values, ts = history.values, history.timestamps
        step = history.step if len(history) > 1 else None
    else:
        values, ts, step = np.asarray(history, dtype=float), None, None
    L = model.hp.seq_len
    if values.size < L:
        raise ValidationError(f"history length {values.size} < seq_len {L}")
    buf = list(model.norm.normalize(values[-L:]))
    preds, maps = [], []
    for _ in range(horizon):
        recent = np.asarray(buf[-L:])
        L_eff = effective_length(model, recent) if adapt else L
        y, a = forward(model, recent[-L_eff:])
        preds.append(y)
        maps.append(a)
        buf.append(y)
    out_ts = None
    if ts is not None and step is not None:
        out_ts = ts[-1] + step * np.arange(1, horizon + 1)
    return ForecastResult(model.norm.denormalize(np.array(preds)), horizon,
                          tuple(maps), "bi-attn-lstm", out_ts)


def gradient_check(hp: Hyperparams, seed=0, n_params_sampled=None, step=1e-5,
                   batch=3, return_details=False):
    """Compare backprop gradients with central differences of the loss.

    The finite differences are evaluated in ``longdouble`` so rounding in the
    loss does not swamp small gradient entries.  The relative error of an
    entry is ``|a - n| / max(|a|, |n|)``; entries where both are below
    ``1e-12`` are compared absolutely.
    """
    if hp.hidden_size > 8 or hp.seq_len > 6:
        raise ValidationError("gradient_check expects a small model (h <= 8, L <= 6)")
    rng = np.random.default_rng(seed)
    params = M.init_params(hp, rng)
    x = rng.standard_normal((batch, hp.seq_len))
    t = rng.standard_normal(batch)
    masks = M.dropout_masks(hp, batch, hp.seq_len, rng)
    _, grads = M.mse_and_grads(params, hp, x, t, masks)

    pl = {k: v.astype(np.longdouble) for k, v in params.items()}
    xl, tl = x.astype(np.longdouble), t.astype(np.longdouble)
    ml = None if masks is None else [m.astype(np.longdouble) for m in masks]

    def loss():
        y, _, _ = M.forward_batch(pl, hp, xl, ml)
        return np.mean((y - tl) ** 2)

    entries = [(k, i) for k in sorted(pl) for i in np.ndindex(pl[k].shape)]
    if n_params_sampled is not None and n_params_sampled < len(entries):
        pick = rng.choice(len(entries), size=n_params_sampled, replace=False)
        entries = [entries[j] for j in sorted(pick)]
    worst = 0.0
    details = []
    h = np.longdouble(step)
    for k, i in entries:
        orig = pl[k][i]
        pl[k][i] = orig + h
        up = loss()
        pl[k][i] = orig - h
        dn = loss()
        pl[k][i] = orig
        num = float((up - dn) / (2 * h))
        ana = float(grads[k][i])
        scale = max(abs(num), abs(ana))
        err = abs(num - ana) / scale if scale > 1e-12 else abs(num - ana)
        worst = max(worst, err)
        details.append((k, i, ana, num, err))
    return (worst, details) if return_details else worst
