"""Spectral-diffusion analysis and forecasting for single quantum emitters.

Modules
-------
core        validated data types and CSV I/O
lsq         bounded trust-region least squares
peakfit     per-frame Lorentzian extraction and g2 fits
replica     replica overlap statistics
noise       autocorrelation, periodogram and power-law segmentation
simulator   fluctuator-bath emitter and spectrum renderer
forecast    bidirectional attention LSTM, baselines and random search
evaluation  GHz mismatch arithmetic and partition benchmarks
plotting    report figures
cli         command-line entry point
"""

__version__ = "0.1.0"

from .core import SpectralSeries, ValidationError, ZplTrace  # noqa: E402

__all__ = ["SpectralSeries", "ValidationError", "ZplTrace", "__version__"]
