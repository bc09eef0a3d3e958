import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from specdiff.core import SpectralSeries, ValidationError
from specdiff.replica import (mean_trajectory, n_windows, overlap_histogram, overlap_matrix,
                              sliding_overlap_evolution)
from specdiff.simulator import FluctuatorBathConfig, FrameRenderConfig
from specdiff.simulator import simulate_fluctuator_bath, synthesize_spectra


def test_mean_trajectory_examples(rng):
    f = rng.standard_normal(5)
    np.testing.assert_array_equal(mean_trajectory(np.tile(f, (4, 1))), f)
    np.testing.assert_array_equal(mean_trajectory([[1, 2], [3, 4]]), [2, 3])
    frames = rng.standard_normal((100, 7))
    naive = [sum(frames[i, j] for i in range(100)) / 100 for j in range(7)]
    np.testing.assert_allclose(mean_trajectory(frames), naive, rtol=0, atol=1e-12)


def test_two_replicas_are_antipodal(rng):
    m = overlap_matrix(rng.standard_normal((2, 9)))
    assert m.q[0, 1] == -1.0 and m.q[1, 0] == -1.0


def test_identical_replicas_are_excluded():
    m = overlap_matrix(np.ones((5, 4)))
    assert m.excluded_pairs == 10
    assert np.all(m.q[~np.eye(5, dtype=bool)] == 0)
    with pytest.raises(ValidationError):
        overlap_histogram(m)


def test_three_replicas_hand_oracle():
    m = overlap_matrix(np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]))
    # the mean is zero, so the deviations are the rows themselves
    d = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
    for a in range(3):
        for b in range(3):
            want = d[a] @ d[b] / (np.linalg.norm(d[a]) * np.linalg.norm(d[b]))
            assert m.q[a, b] == pytest.approx(want, abs=1e-15)
    assert m.q[0, 1] == 0.0
    assert m.q[0, 2] == pytest.approx(-1 / np.sqrt(2))


def test_histogram_examples(rng):
    h = overlap_histogram(overlap_matrix(rng.standard_normal((2, 5))))
    assert h.counts[-1] == 1 and h.total == 1
    h = overlap_histogram(overlap_matrix(rng.standard_normal((10, 30))), bins=20)
    assert h.total == 45 and h.counts.size == 20
    with pytest.raises(ValidationError):
        overlap_histogram(overlap_matrix(rng.standard_normal((3, 5))), bins=1)


frame_sets = st.integers(2, 12).flatmap(
    lambda n: arrays(np.float64, (n, 6), elements=st.floats(0, 1e4)))


@settings(max_examples=150, deadline=None)
@given(frame_sets, st.floats(1e-3, 1e3))
def test_overlap_properties(frames, c):
    m = overlap_matrix(frames)
    q = m.q
    assert np.array_equal(q, q.T)
    assert np.all(np.diag(q) == 1.0)
    assert np.all(np.abs(q) <= 1.0)
    delta = frames - frames.mean(axis=0)
    assert np.all(np.abs(delta.sum(axis=0)) <= 1e-10 * max(1.0, np.abs(frames).max()) * len(frames))
    if (~m.excluded).sum() >= 2:
        assert overlap_histogram(m).total == m.upper_values().size
    # cosine overlap ignores a global intensity scale
    if not m.excluded.any():
        np.testing.assert_allclose(overlap_matrix(c * frames).q, q, atol=1e-9)


def test_evolution_window_counts(rng):
    f = rng.uniform(0, 10, (190, 16))
    assert len(sliding_overlap_evolution(f[:100], 100, 10).histograms) == 1
    evo = sliding_overlap_evolution(f, 100, 10)
    assert len(evo.histograms) == 10 == n_windows(190, 100, 10)
    np.testing.assert_array_equal(evo.window_starts, np.arange(10) * 10)
    assert evo.matrix().shape == (10, 50)
    assert all(h.total == 100 * 99 // 2 for h in evo.histograms)


def test_evolution_rejects_short_series(rng):
    with pytest.raises(ValidationError):
        sliding_overlap_evolution(rng.standard_normal((50, 4)), 100, 10)


def test_quasi_quenched_contrast():
    # a weak line parked at one wavelength with rare, window-length excursions:
    # inside a window holding an excursion the deviations are coherent and |q|
    # is high, while over the whole run shot noise keeps most pairs near 0
    cfg = FluctuatorBathConfig(n_fluctuators=1, rate_range=(22.0, 22.0), coupling_scale=0.4,
                               asymmetry=0.1, n_frames=2000, label="excursions")
    trace = simulate_fluctuator_bath(cfg, 3)
    series = synthesize_spectra(trace, FrameRenderConfig(zpl_amplitude=100.0), 3)
    frames = series.restrict(538.0, 541.5).frames
    evo = sliding_overlap_evolution(series, 100, 10, wavelength_window=(538.0, 541.5))
    assert len(evo.histograms) == 191
    upper = [np.quantile(np.abs(overlap_matrix(frames[a:a + 100]).upper_values()), 0.9)
             for a in evo.window_starts]
    assert max(upper) >= 0.7
    assert np.median(np.abs(overlap_matrix(frames).upper_values())) < 0.2


def test_spectral_series_input(rng):
    s = SpectralSeries(np.linspace(538, 541, 8), rng.uniform(0, 5, (120, 8)), 5e-4)
    evo = sliding_overlap_evolution(s, 100, 10)
    assert len(evo.histograms) == 3
