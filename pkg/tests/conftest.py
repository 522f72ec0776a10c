import numpy as np
import pytest

from pairnilm import synth
from pairnilm.dataio import Dataset, Measurement
from pairnilm.mlp import TrainOptions

FAST_OPTS = TrainOptions(max_iterations=30, patience=3, hidden_dim=8)


def sine_measurement(n_periods=4, d=50, fg=50.0, house=1, category="A", appliance=1, phase=0.0,
                     current=None):
    t = np.arange(n_periods * d)
    v = np.sin(2 * np.pi * t / d + phase)
    i = v if current is None else current(2 * np.pi * t / d + phase)
    return Measurement(i, 100 * v, d * fg, fg, house, category, appliance)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_corpus() -> Dataset:
    """Four houses, low sample rate: fast enough for end-to-end unit tests."""
    spec = synth.SynthSpec(
        houses=4, instances_per_house=2, periods=6, sample_rate_hz=3000.0,
        grid_freq_hz=50.0, noise_sigma=0.02, seed=3,
    )
    return synth.generate(spec)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
