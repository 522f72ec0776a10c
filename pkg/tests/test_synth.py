import numpy as np
import pytest

from pairnilm import harness, synth
from pairnilm.signals import normalize_segment
from pairnilm.synth import Family, SynthSpec


def test_default_spec_cardinality():
    ds = synth.generate(SynthSpec(periods=2, noise_sigma=0.0))
    assert len(ds) == 144
    assert {m.period for m in ds} == {500}
    assert len(ds.houses) == 12
    assert ds.label_space == ("Heater", "Fan", "Incandescent Light Bulb", "Laptop")
    assert all(len(m) >= 2 * m.period for m in ds)


def test_resistive_current_matches_voltage():
    spec = SynthSpec(categories=(Family("R", "resistive"), Family("X", "reactive")),
                     houses=2, instances_per_house=2, periods=3, noise_sigma=0.0)
    for m in (m for m in synth.generate(spec) if m.category == "R"):
        i_hat, _ = normalize_segment(m.current[:500])
        v_hat, _ = normalize_segment(m.voltage[:500])
        assert np.max(np.abs(i_hat - v_hat)) < 1e-9


def test_deterministic_per_seed():
    spec = SynthSpec(houses=3, periods=3, sample_rate_hz=3000, grid_freq_hz=50)
    a, b = synth.generate(spec), synth.generate(spec)
    assert all(np.array_equal(x.current, y.current) and np.array_equal(x.voltage, y.voltage)
               for x, y in zip(a, b))
    c = synth.generate(SynthSpec(houses=3, periods=3, sample_rate_hz=3000, grid_freq_hz=50, seed=1))
    assert not np.array_equal(a.measurements[0].current, c.measurements[0].current)


def test_missing_categories():
    spec = SynthSpec(houses=3, periods=2, sample_rate_hz=3000, grid_freq_hz=50, missing={2: ["Fan"]})
    ds = synth.generate(spec)
    assert "Fan" not in ds.inventory(2)
    assert "Fan" in ds.inventory(1)
    assert len(ds) == 36 - 3


def test_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(houses=1)
    with pytest.raises(ValueError):
        Family("Q", "inductive")
    with pytest.raises(ValueError):
        SynthSpec(sample_rate_hz=30000, grid_freq_hz=70)


def _align_to_voltage(X):
    """Rotate each window so its voltage fundamental starts at a rising zero crossing."""
    d = X.shape[1] // 2
    out = np.empty_like(X)
    for n, x in enumerate(X):
        phase = np.angle(np.fft.rfft(x[d:])[1])
        s = int(round((phase + np.pi / 2) / (2 * np.pi) * d)) % d
        out[n, :d], out[n, d:] = np.roll(x[:d], s), np.roll(x[d:], s)
    return out


def test_families_separable_by_nearest_centroid():
    ds = synth.generate(SynthSpec(sample_rate_hz=3000, grid_freq_hz=50, noise_sigma=0.05, seed=1))
    f = harness.extract(ds, 10)
    X = _align_to_voltage(f.X)
    correct = 0
    for h in ds.houses:
        held = f.house == h
        centroids = np.stack([X[~held & (f.y == c)].mean(axis=0) for c in range(4)])
        dist = ((X[held][:, None, :] - centroids[None]) ** 2).sum(axis=-1)
        correct += int((dist.argmin(axis=1) == f.y[held]).sum())
    assert correct / len(f) >= 0.99
