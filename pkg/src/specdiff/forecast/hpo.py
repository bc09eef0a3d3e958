"""Random hyperparameter search with seeded, independent trials."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..core import ValidationError
from .model import Hyperparams
from .train import TrainingDivergedError, as_seed_sequence, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchSpace:
    hidden_size: tuple = (8, 128)  # integer, inclusive
    seq_len: tuple = (8, 64)  # integer, inclusive
    num_layers: tuple = (1, 3)  # integer, inclusive
    dropout: tuple = (0.0, 0.5)  # uniform
    learning_rate: tuple = (1e-4, 1e-2)  # log-uniform

    def __post_init__(self):
        for name in ("hidden_size", "seq_len", "num_layers", "dropout", "learning_rate"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValidationError(f"empty interval for {name}: ({lo}, {hi})")
            object.__setattr__(self, name, (lo, hi))
        if self.learning_rate[0] <= 0:
            raise ValidationError("learning_rate interval must be positive")
        if self.seq_len[0] < 2 or self.hidden_size[0] < 1 or self.num_layers[0] < 1:
            raise ValidationError("integer intervals below their minimum")
        if not (0 <= self.dropout[0] and self.dropout[1] < 1):
            raise ValidationError("dropout interval must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: tuple(v) for k, v in d.items()})

    def to_dict(self):
        return {k: list(getattr(self, k)) for k in
                ("hidden_size", "seq_len", "num_layers", "dropout", "learning_rate")}


def random_sampler(space: SearchSpace, rng):
    """Integers uniform on their closed interval, dropout uniform, rate log-uniform."""
    def integer(iv):
        return int(rng.integers(iv[0], iv[1] + 1))

    lr_lo, lr_hi = np.log(space.learning_rate)
    return Hyperparams(
        hidden_size=integer(space.hidden_size),
        seq_len=integer(space.seq_len),
        num_layers=integer(space.num_layers),
        dropout=float(rng.uniform(*space.dropout)),
        learning_rate=float(np.exp(rng.uniform(lr_lo, lr_hi))),
    )


def trial_seeds(seed, trials):
    """Per-trial (sampler seed, training seed) pairs from one root seed."""
    out = []
    for child in as_seed_sequence(seed).spawn(trials):
        a, b = child.generate_state(2)
        out.append((int(a), int(b)))
    return out


def hyperparameter_search(trace, space=None, trials=25, split=(8, 1, 1), seed=0,
                          sampler=random_sampler, **train_kw):
    """Sample, train and validate ``trials`` configurations; keep the best.

    Returns
    -------
    best : TrainedForecaster
    log : list of dict
        One entry per trial: hp, seeds, status, best validation RMSE, epochs.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    space = space or SearchSpace()
    best = None
    records = []
    for k, (s_sample, s_train) in enumerate(trial_seeds(seed, trials)):
        hp = sampler(space, np.random.default_rng(s_sample))
        rec = {"trial": k, "hp": hp.to_dict(), "train_seed": s_train}
        try:
            model = train(trace, hp, split, seed=s_train, **train_kw)
        except TrainingDivergedError as exc:
            rec.update(status="diverged", val_rmse=None, epochs=None, message=str(exc))
            log.warning("trial %d diverged: %s", k, exc)
        except ValidationError as exc:
            # e.g. a sampled seq_len too long for the training split
            rec.update(status="invalid", val_rmse=None, epochs=None, message=str(exc))
            log.warning("trial %d invalid: %s", k, exc)
        else:
            val = model.train_meta["best_val_rmse"]
            rec.update(status="ok", val_rmse=val, epochs=model.train_meta["epochs"])
            if best is None or val < best.train_meta["best_val_rmse"]:
                best = model
        records.append(rec)
    if best is None:
        raise TrainingDivergedError(f"all {trials} trials diverged or were invalid")
    return best, records
