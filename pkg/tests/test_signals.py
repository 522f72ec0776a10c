from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pairnilm.dataio import Measurement, RecordingTooShort
from pairnilm.signals import (
    apply_decimation,
    build_feature,
    design_decimation,
    expand_measurement,
    feature_matrix,
    normalize_segment,
    resample_channel,
    samples_per_period,
    steady_state_window,
    window_origins,
)

from conftest import sine_measurement


def test_samples_per_period():
    assert samples_per_period(30000, 60) == 500
    assert samples_per_period(1000, 50) == 20
    with pytest.raises(ValueError):
        samples_per_period(30000, 70)


def test_normalize_examples():
    out, bad = normalize_segment([0, 5, 10])
    assert out.tolist() == [-1.0, 0.0, 1.0] and not bad
    out, bad = normalize_segment([3, 3, 3])
    assert out.tolist() == [0.0, 0.0, 0.0] and bad


def test_normalize_sinusoid_scale_offset():
    t = np.arange(500)
    unit = np.sin(2 * np.pi * t / 500)
    a, _ = normalize_segment(7.3 * unit + 1.1)
    b, _ = normalize_segment(unit)
    assert np.max(np.abs(a - b)) < 1e-12


segments = arrays(np.float64, st.integers(2, 64), elements=st.floats(-1e3, 1e3))


@settings(max_examples=200, deadline=None)
@given(segments, st.floats(1e-3, 1e3), st.floats(-1e3, 1e3))
def test_normalize_invariance_property(seg, a, b):
    if np.ptp(seg) < 1e-6 * max(1.0, np.abs(seg).max()):
        return
    x, _ = normalize_segment(seg)
    y, _ = normalize_segment(a * seg + b)
    assert np.max(np.abs(x - y)) < 1e-9
    assert x.max() == 1.0 and x.min() == -1.0


def test_build_feature_layout_and_bounds():
    m = sine_measurement(n_periods=3, d=500, fg=60.0)
    f = build_feature(m, 0, 500)
    assert f.values.shape == (1000,)
    assert (f.label, f.house_id) == (m.category, m.house_id)
    expected, _ = normalize_segment(m.current[:500])
    assert np.array_equal(f.values[:500], expected)
    build_feature(m, len(m) - 500, 500)
    with pytest.raises(IndexError):
        build_feature(m, len(m) - 499, 500)


@pytest.mark.parametrize("d,eps", [(500, 10), (500, 7), (500, 500), (20, 3)])
def test_expansion_counts_match_enumeration(d, eps):
    m = sine_measurement(n_periods=2, d=d, fg=60.0)
    tau0 = steady_state_window(m, d)
    # whole steps that fit inside one period
    expected = [tau0 + i * eps for i in range(d) if (i + 1) * eps <= d]
    feats = expand_measurement(m, tau0, eps, d)
    assert [f.tau for f in feats] == expected
    assert len(feats) == {(500, 10): 50, (500, 7): 71, (500, 500): 1}.get((d, eps), d // eps)


def test_expansion_overrun_names_window():
    m = sine_measurement(n_periods=2, d=100)
    with pytest.raises(IndexError, match="window 1"):
        expand_measurement(m, 100, 50, 100)
    with pytest.raises(ValueError):
        window_origins(0, 0, 100)


def test_feature_matrix_matches_build_feature(rng):
    m = Measurement(rng.normal(size=400), rng.normal(size=400), 1000, 50, 1, "A", 1)
    taus = [0, 13, 380]
    X, bad = feature_matrix(m, taus, 20)
    for row, tau in zip(X, taus):
        assert np.array_equal(row, build_feature(m, tau, 20).values)
    assert not bad.any()


def test_steady_state_window():
    assert steady_state_window(sine_measurement(n_periods=60, d=500), 500) == 29000
    assert steady_state_window(sine_measurement(n_periods=2, d=500), 500) == 0
    short = Measurement(np.ones(999), np.ones(999), 1000, 50, 1, "A", 1)
    with pytest.raises(RecordingTooShort):
        steady_state_window(short, 500)


def test_periodic_windows_are_identical():
    m = sine_measurement(n_periods=4, d=50, current=lambda p: np.sin(p) + 0.3 * np.sin(3 * p))
    X, _ = feature_matrix(m, [0, 50, 100, 150], 50)
    assert np.max(np.abs(X - X[0])) < 1e-12


@pytest.mark.parametrize("fs_out,up,down", [(2500, 1, 12), (4000, 2, 15), (15000, 1, 2)])
def test_design_factors(fs_out, up, down):
    plan = design_decimation(30000, fs_out)
    ratio = Fraction(fs_out, 30000)
    assert (plan.up_factor, plan.down_factor) == (ratio.numerator, ratio.denominator) == (up, down)
    assert plan.fs_out == fs_out
    assert plan.fir_taps.size % 2 == 1


def test_design_rejects_non_decimation():
    for bad in (30000, 40000, 0):
        with pytest.raises(ValueError):
            design_decimation(30000, bad)


def _tone(freq, fs=30000.0, seconds=0.5):
    t = np.arange(int(fs * seconds)) / fs
    return np.sin(2 * np.pi * freq * t)


def _rms(x):
    return float(np.sqrt(np.mean(x**2)))


def test_passband_tone_preserved():
    plan = design_decimation(30000, 2500)
    y = resample_channel(_tone(60), plan)
    assert abs(_rms(y) / (1 / np.sqrt(2)) - 1) < 0.01


@pytest.mark.parametrize("freq", [1300, 2000, 5000])
def test_stopband_tone_attenuated(freq):
    plan = design_decimation(30000, 2500)
    y = resample_channel(_tone(freq), plan)
    assert 20 * np.log10(_rms(_tone(freq)) / _rms(y)) >= 40


def test_resampling_aligns_with_input_grid():
    # a slow tone survives with the delay compensated: output k sits on input sample
    plan = design_decimation(30000, 2500)
    x = _tone(60)
    y = resample_channel(x, plan)
    first = plan.delay // plan.down_factor * plan.down_factor
    k0 = -(-(plan.fir_taps.size - 1) // plan.down_factor)
    times = (k0 + np.arange(y.size)) * plan.down_factor - plan.delay
    assert times[0] >= 0 and first >= 0
    assert np.max(np.abs(y - x[times])) < 0.01


def test_resampling_is_linear(rng):
    plan = design_decimation(30000, 4000)
    a, b = rng.normal(size=3000), rng.normal(size=3000)
    lhs = resample_channel(2.0 * a - 3.0 * b, plan)
    rhs = 2.0 * resample_channel(a, plan) - 3.0 * resample_channel(b, plan)
    assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_apply_decimation():
    m = sine_measurement(n_periods=30, d=600, fg=50.0)
    out = apply_decimation(m, design_decimation(30000, 2500))
    assert out.sample_rate_hz == 2500 and out.grid_freq_hz == 50 and out.period == 50
    assert (out.house_id, out.category) == (m.house_id, m.category)
    m60 = sine_measurement(n_periods=30, d=500, fg=60.0)
    with pytest.raises(ValueError):
        apply_decimation(m60, design_decimation(30000, 5000))
    with pytest.raises(ValueError, match="designed for"):
        apply_decimation(m60, design_decimation(15000, 7500))
