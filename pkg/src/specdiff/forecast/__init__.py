"""Bidirectional attention LSTM forecaster, baselines and search."""

from .baselines import BASELINE_KINDS, SineFit, baseline_forecast, fit_polynomial, fit_sine
from .hpo import SearchSpace, hyperparameter_search, random_sampler
from .model import Hyperparams
from .train import (ForecastResult, Normalizer, TrainedForecaster, TrainingDivergedError,
                    autoregressive_forecast, forward, gradient_check, parse_split,
                    split_sizes, train)

__all__ = [
    "BASELINE_KINDS", "ForecastResult", "Hyperparams", "Normalizer", "SearchSpace",
    "SineFit", "TrainedForecaster", "TrainingDivergedError", "autoregressive_forecast",
    "baseline_forecast", "fit_polynomial", "fit_sine", "forward", "gradient_check",
    "hyperparameter_search", "parse_split", "random_sampler", "split_sizes", "train",
]
