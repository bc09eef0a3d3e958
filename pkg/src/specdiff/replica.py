"""Replica overlap statistics over spectral frames.

Each frame (one intensity vector) is a replica.  Within an analysis window
the deviation of replica ``i`` from the mean trajectory is
``delta_i = frame_i - mean(frames)`` and the overlap between two replicas is
the cosine of their deviations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Histogram, SpectralSeries, ValidationError

DEFAULT_BINS = 50


@dataclass(frozen=True)
class OverlapMatrix:
    q: np.ndarray
    window_start: int = 0
    window_len: int = 0
    excluded_pairs: int = 0
    excluded: np.ndarray | None = None  # boolean mask of degenerate replicas

    @property
    def n(self):
        return self.q.shape[0]

    def upper_values(self):
        """``q_ab`` for ``a < b`` with degenerate pairs removed."""
        iu = np.triu_indices(self.n, k=1)
        vals = self.q[iu]
        if self.excluded is not None and self.excluded.any():
            bad = self.excluded[iu[0]] | self.excluded[iu[1]]
            vals = vals[~bad]
        return vals


def mean_trajectory(frames):
    """Element-wise mean across replicas (rows)."""
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 2 or frames.shape[0] == 0 or frames.shape[1] == 0:
        raise ValidationError("mean_trajectory needs a non-empty [replica x bin] matrix")
    return frames.mean(axis=0)


def overlap_matrix(frames, eps=None, window_start=0):
    """Cosine overlap between replica deviations from the mean trajectory.

    Parameters
    ----------
    frames : array_like, shape (n, bins)
    eps : float, optional
        Norm floor; deviations with smaller norm are excluded.  Defaults to
        ``1e-9`` times the largest frame norm.

    Returns
    -------
    OverlapMatrix
        Excluded pairs have ``q = 0``; the diagonal is 1.
    """
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 2:
        raise ValidationError("frames must be a [replica x bin] matrix")
    n = frames.shape[0]
    if n < 2:
        raise ValidationError("overlap needs at least 2 replicas")
    if not np.all(np.isfinite(frames)):
        raise ValidationError("non-finite frame")
    if n == 2:
        # same deviations, written so that delta[1] == -delta[0] bit for bit
        half = 0.5 * (frames[0] - frames[1])
        delta = np.stack([half, -half])
    else:
        delta = frames - mean_trajectory(frames)
    scale = max(np.abs(delta).max(), np.abs(frames).max(), 1e-300)
    assert np.all(np.abs(delta.sum(axis=0)) <= 1e-10 * n * scale)
    if eps is None:
        eps = 1e-9 * float(np.linalg.norm(frames, axis=1).max())
    norms = np.linalg.norm(delta, axis=1)
    bad = norms <= eps
    # normalise the Gram matrix rather than the rows: sqrt(fl(s * s)) == s, so
    # the diagonal is exactly 1 and antipodal pairs exactly -1
    d = np.where(bad[:, None], 0.0, delta)
    g = d @ d.T
    sq = np.where(bad, 1.0, np.diag(g))
    q = g / np.sqrt(np.outer(sq, sq))
    q = 0.5 * (q + q.T)
    np.clip(q, -1.0, 1.0, out=q)
    np.fill_diagonal(q, 1.0)
    n_bad = int(bad.sum())
    excluded_pairs = n_bad * (n - n_bad) + n_bad * (n_bad - 1) // 2
    q.flags.writeable = False
    return OverlapMatrix(q, window_start, n, excluded_pairs, bad)


def overlap_histogram(m: OverlapMatrix, bins=DEFAULT_BINS):
    """Histogram of ``|q_ab|`` over included upper-triangle pairs on ``[0, 1]``."""
    if bins < 2:
        raise ValidationError("need at least 2 bins")
    vals = np.abs(m.upper_values())
    if vals.size == 0:
        raise ValidationError("no included replica pairs to histogram")
    counts, edges = np.histogram(vals, bins=bins, range=(0.0, 1.0))
    return Histogram(edges, counts, int(vals.size))


@dataclass(frozen=True)
class OverlapEvolution:
    histograms: tuple
    window_len: int
    stride: int
    bin_edges: np.ndarray
    window_starts: np.ndarray

    def matrix(self):
        """Counts as a [window x bin] array."""
        return np.array([h.counts for h in self.histograms])

    def max_abs_q(self):
        """Upper edge of the highest occupied bin in each window."""
        out = []
        for h in self.histograms:
            nz = np.nonzero(h.counts)[0]
            out.append(h.bin_edges[nz[-1] + 1] if nz.size else 0.0)
        return np.array(out)


def n_windows(n, window_len, stride):
    return (n - window_len) // stride + 1


def sliding_overlap_evolution(series, window_len=100, stride=10,
                              bins=DEFAULT_BINS, wavelength_window=None):
    """Per-window overlap histograms over a spectral series.

    ``series`` may be a :class:`SpectralSeries` or a bare [frame x bin] array.
    ``wavelength_window`` restricts the frames to ``(lo, hi)`` nm first.
    """
    if isinstance(series, SpectralSeries):
        if wavelength_window is not None:
            series = series.restrict(*wavelength_window)
        frames = series.frames
    else:
        frames = np.asarray(series, dtype=float)
    if window_len < 3:
        raise ValidationError("window_len must be >= 3")
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    n = frames.shape[0]
    if n < window_len:
        raise ValidationError(f"series has {n} frames, shorter than window {window_len}")
    starts = np.arange(n_windows(n, window_len, stride)) * stride
    hists = []
    for s in starts:
        m = overlap_matrix(frames[s:s + window_len], window_start=int(s))
        hists.append(overlap_histogram(m, bins))
    return OverlapEvolution(tuple(hists), window_len, stride,
                            hists[0].bin_edges, starts)
