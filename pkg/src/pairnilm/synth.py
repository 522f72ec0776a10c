"""Seeded synthetic corpora of steady-state appliance waveforms.

Voltage is a clean mains sinusoid. Current shapes come from four families:

    resistive   in phase with the voltage
    reactive    lagging by a per-instance angle
    phase_cut   triac-chopped sinusoid with a per-instance firing angle
    rectifier   narrow current pulses around the voltage peaks

Noise is added to the unit-amplitude waveforms before they are scaled to
physical units, so ``noise_sigma`` is relative to the waveform peak.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import Dataset, Measurement, period_length

FAMILIES = ("resistive", "reactive", "phase_cut", "rectifier")

VOLTAGE_PEAK = 170.0


@dataclass(frozen=True)
class Family:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise ValueError(f"unknown waveform family {self.kind!r}; choose from {FAMILIES}")


DEFAULT_CATEGORIES = (
    Family("Heater", "resistive"),
    Family("Fan", "reactive"),
    Family("Incandescent Light Bulb", "phase_cut"),
    Family("Laptop", "rectifier"),
)


@dataclass(frozen=True)
class SynthSpec:
    categories: tuple[Family, ...] = DEFAULT_CATEGORIES
    houses: int = 12
    instances_per_house: int = 3
    periods: int = 20
    sample_rate_hz: float = 30_000.0
    grid_freq_hz: float = 60.0
    noise_sigma: float = 0.03
    seed: int = 0
    # per-house lists of category names to leave out of that house
    missing: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        if self.houses < 2 or len(self.categories) < 2 or self.periods < 2:
            raise ValueError("need >= 2 houses, >= 2 categories and >= 2 periods")
        if self.instances_per_house < 1 or self.noise_sigma < 0:
            raise ValueError("instances_per_house >= 1 and noise_sigma >= 0 required")
        period_length(self.sample_rate_hz, self.grid_freq_hz)

    @property
    def label_space(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.categories)


def _current_shape(kind: str, phase: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Unit-peak current for one instance; ``phase`` is the mains angle in radians."""
    if kind == "resistive":
        return np.sin(phase)
    if kind == "reactive":
        lag = np.deg2rad(rng.uniform(20.0, 70.0))
        return np.sin(phase - lag)
    if kind == "phase_cut":
        firing = np.deg2rad(rng.uniform(30.0, 120.0))
        conducting = np.mod(phase, np.pi) >= firing
        return np.where(conducting, np.sin(phase), 0.0)
    if kind == "rectifier":
        width = 0.10 * 2 * np.pi
        offset = np.deg2rad(rng.uniform(-8.0, 8.0))
        # signed angle to the nearest (shifted) voltage peak
        dist = np.mod(phase - offset, np.pi) - np.pi / 2
        pulse = np.where(np.abs(dist) < width / 2, np.cos(np.pi * dist / width) ** 2, 0.0)
        return pulse * np.sign(np.sin(phase - offset))
    raise ValueError(kind)


def generate(spec: SynthSpec = SynthSpec()) -> Dataset:
    """Build the corpus described by ``spec``; bitwise deterministic per seed."""
    d = period_length(spec.sample_rate_hz, spec.grid_freq_hz)
    n = spec.periods * d
    root = np.random.SeedSequence(spec.seed)
    house_seqs = root.spawn(spec.houses)
    measurements = []
    appliance_id = 0
    for h, hseq in enumerate(house_seqs, start=1):
        house_rng = np.random.default_rng(hseq)
        gain = house_rng.uniform(0.5, 2.0)
        skip = set(spec.missing.get(h, ()))
        inst_seqs = hseq.spawn(len(spec.categories) * spec.instances_per_house)
        for c, fam in enumerate(spec.categories):
            for k in range(spec.instances_per_house):
                appliance_id += 1
                if fam.name in skip:
                    continue
                rng = np.random.default_rng(inst_seqs[c * spec.instances_per_house + k])
                phase0 = rng.uniform(0, 2 * np.pi)
                phase = phase0 + 2 * np.pi * np.arange(n) / d
                current = _current_shape(fam.kind, phase, rng)
                voltage = np.sin(phase)
                if spec.noise_sigma > 0:
                    current = current + rng.normal(0.0, spec.noise_sigma, n)
                    voltage = voltage + rng.normal(0.0, spec.noise_sigma, n)
                amp = gain * rng.uniform(0.2, 10.0)
                measurements.append(
                    Measurement(
                        amp * current,
                        VOLTAGE_PEAK * voltage,
                        spec.sample_rate_hz,
                        spec.grid_freq_hz,
                        h,
                        fam.name,
                        appliance_id,
                        source=f"synth-h{h}-a{appliance_id}",
                    )
                )
    return Dataset(tuple(measurements), spec.label_space)
