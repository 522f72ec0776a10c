"""Measurement containers, the on-disk corpus layout, and household splits.

A corpus directory holds one headerless two-column CSV per recording
(``current,voltage``) and a ``metadata.json`` index::

    [{"file": "0001.csv", "house": 1, "category": "Fan",
      "appliance_id": 12, "fs": 30000, "fg": 60}, ...]

The index layout is our own adapter format; PLAID ships its metadata
differently and needs a small conversion script.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

METADATA_FILE = "metadata.json"

# PLAID constants
PLAID_SAMPLE_RATE_HZ = 30_000.0
PLAID_GRID_FREQ_HZ = 60.0
PLAID_CATEGORIES = (
    "Air Conditioner",
    "Compact Fluorescent Lamp",
    "Fan",
    "Fridge",
    "Hairdryer",
    "Heater",
    "Incandescent Light Bulb",
    "Laptop",
    "Microwave",
    "Vacuum",
    "Washing Machine",
)


class CorpusError(ValueError):
    """Raised for malformed measurement files or metadata."""


class RecordingTooShort(CorpusError):
    pass


def period_length(sample_rate_hz: float, grid_freq_hz: float) -> int:
    """Samples per grid period; the ratio must be a whole number."""
    if sample_rate_hz <= 0 or grid_freq_hz <= 0:
        raise ValueError("sample and grid frequencies must be positive")
    ratio = sample_rate_hz / grid_freq_hz
    d = round(ratio)
    if d < 1 or not math.isclose(ratio, d, rel_tol=0.0, abs_tol=1e-9 * max(1.0, ratio)):
        raise ValueError(
            f"sample rate {sample_rate_hz:g} Hz is not an integer multiple of "
            f"the grid frequency {grid_freq_hz:g} Hz (ratio {ratio:.6g})"
        )
    return int(d)


@dataclass(frozen=True, eq=False)
class Measurement:
    """One steady-state appliance recording."""

    current: np.ndarray
    voltage: np.ndarray
    sample_rate_hz: float
    grid_freq_hz: float
    house_id: int
    category: str
    appliance_id: int
    source: str = ""

    def __post_init__(self):
        current = np.ascontiguousarray(self.current, dtype=np.float64)
        voltage = np.ascontiguousarray(self.voltage, dtype=np.float64)
        if current.ndim != 1 or voltage.ndim != 1:
            raise CorpusError("current and voltage must be one-dimensional")
        if current.shape != voltage.shape:
            raise CorpusError(
                f"current/voltage length mismatch ({current.size} vs {voltage.size})"
            )
        d = period_length(self.sample_rate_hz, self.grid_freq_hz)
        if current.size < 2 * d:
            raise RecordingTooShort(
                f"{self.source or 'measurement'}: {current.size} samples, need at "
                f"least two periods ({2 * d})"
            )
        current.setflags(write=False)
        voltage.setflags(write=False)
        object.__setattr__(self, "current", current)
        object.__setattr__(self, "voltage", voltage)

    def __len__(self):
        return self.current.size

    @property
    def period(self) -> int:
        return period_length(self.sample_rate_hz, self.grid_freq_hz)

    @property
    def n_periods(self) -> int:
        return len(self) // self.period


@dataclass(frozen=True)
class Dataset:
    """An immutable collection of measurements over an ordered label space."""

    measurements: tuple[Measurement, ...]
    label_space: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "measurements", tuple(self.measurements))
        labels = tuple(self.label_space) or tuple(
            sorted({m.category for m in self.measurements})
        )
        if len(set(labels)) != len(labels):
            raise CorpusError(f"duplicate labels in label space: {labels}")
        unknown = {m.category for m in self.measurements} - set(labels)
        if unknown:
            raise CorpusError(f"categories outside the label space: {sorted(unknown)}")
        object.__setattr__(self, "label_space", labels)

    def __len__(self):
        return len(self.measurements)

    def __iter__(self):
        return iter(self.measurements)

    @property
    def houses(self) -> list[int]:
        return sorted({m.house_id for m in self.measurements})

    def inventory(self, house_id: int) -> tuple[str, ...]:
        """Categories present in one house, in label-space order."""
        present = {m.category for m in self.measurements if m.house_id == house_id}
        return tuple(c for c in self.label_space if c in present)

    def select(self, keep: Iterable[Measurement]) -> Dataset:
        return Dataset(tuple(keep), self.label_space)

    def with_houses(self, houses: Iterable[int]) -> Dataset:
        wanted = set(houses)
        return self.select(m for m in self.measurements if m.house_id in wanted)


def _parse_rows(lines: Iterable[str], path: str) -> tuple[np.ndarray, np.ndarray]:
    current, voltage = [], []
    for lineno, row in enumerate(csv.reader(lines), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 2:
            raise CorpusError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
        try:
            i, v = float(row[0]), float(row[1])
        except ValueError:
            raise CorpusError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
        current.append(i)
        voltage.append(v)
    return np.asarray(current, dtype=np.float64), np.asarray(voltage, dtype=np.float64)


def load_measurement(
    csv_path,
    house_id: int,
    category: str,
    appliance_id: int,
    sample_rate_hz: float = PLAID_SAMPLE_RATE_HZ,
    grid_freq_hz: float = PLAID_GRID_FREQ_HZ,
) -> Measurement:
    """Read a headerless ``current,voltage`` CSV into a :class:`Measurement`.

    Raises :class:`CorpusError` with the offending line number for
    malformed rows and :class:`RecordingTooShort` when fewer than two
    grid periods are present.
    """
    path = Path(csv_path)
    with path.open(newline="") as fh:
        current, voltage = _parse_rows(fh, str(path))
    return Measurement(
        current,
        voltage,
        float(sample_rate_hz),
        float(grid_freq_hz),
        int(house_id),
        str(category),
        int(appliance_id),
        source=path.name,
    )


def write_measurement(m: Measurement, csv_path) -> None:
    # 17 significant digits round-trips float64 exactly
    with Path(csv_path).open("w", newline="") as fh:
        for i, v in zip(m.current.tolist(), m.voltage.tolist()):
            fh.write(f"{i:.17g},{v:.17g}\n")


_META_KEYS = {"file": str, "house": int, "category": str, "appliance_id": int}


def load_corpus(directory, label_space: Sequence[str] | None = None) -> Dataset:
    """Load every recording listed in ``<directory>/metadata.json``."""
    root = Path(directory)
    meta_path = root / METADATA_FILE
    if not meta_path.exists():
        raise CorpusError(f"{meta_path}: metadata index not found")
    try:
        entries = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{meta_path}: {exc}") from None
    if not isinstance(entries, list):
        raise CorpusError(f"{meta_path}: expected a JSON array")
    measurements = []
    for k, entry in enumerate(entries):
        missing = [key for key in (*_META_KEYS, "fs", "fg") if key not in entry]
        if missing:
            raise CorpusError(f"{meta_path}: entry {k} lacks {missing}")
        try:
            measurements.append(
                load_measurement(
                    root / entry["file"],
                    entry["house"],
                    entry["category"],
                    entry["appliance_id"],
                    entry["fs"],
                    entry["fg"],
                )
            )
        except (CorpusError, ValueError, OSError) as exc:
            raise CorpusError(f"{entry['file']}: {exc}") from None
    return Dataset(tuple(measurements), tuple(label_space or ()))


def save_corpus(ds: Dataset, directory) -> list[Path]:
    """Write ``ds`` in the CSV + ``metadata.json`` layout; returns written paths."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    entries, written = [], []
    for k, m in enumerate(ds.measurements):
        name = f"{k + 1:05d}.csv"
        write_measurement(m, root / name)
        written.append(root / name)
        entries.append(
            {
                "file": name,
                "house": m.house_id,
                "category": m.category,
                "appliance_id": m.appliance_id,
                "fs": m.sample_rate_hz,
                "fg": m.grid_freq_hz,
            }
        )
    (root / METADATA_FILE).write_text(json.dumps(entries, indent=1) + "\n")
    written.append(root / METADATA_FILE)
    return written


def corpus_digest(directory) -> str:
    """SHA-256 over the metadata index and every file it lists."""
    root = Path(directory)
    h = hashlib.sha256()
    meta = (root / METADATA_FILE).read_bytes()
    h.update(meta)
    for entry in json.loads(meta):
        h.update(entry["file"].encode())
        h.update((root / entry["file"]).read_bytes())
    return h.hexdigest()


def partition_by_house(ds: Dataset, test_house: int) -> tuple[Dataset, Dataset]:
    """Split into (everything else, the given house)."""
    if test_house not in {m.house_id for m in ds.measurements}:
        raise KeyError(f"house {test_house} not in dataset")
    train = [m for m in ds.measurements if m.house_id != test_house]
    test = [m for m in ds.measurements if m.house_id == test_house]
    return ds.select(train), ds.select(test)


def subsample_houses(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Keep ``ceil(fraction * n_houses)`` houses drawn uniformly without replacement."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    houses = ds.houses
    if fraction == 1.0:
        return ds
    # tolerance keeps e.g. 0.1 * 30 from rounding up to 4
    n_keep = math.ceil(fraction * len(houses) - 1e-9)
    rng = np.random.default_rng(seed)
    keep = rng.choice(np.asarray(houses), size=n_keep, replace=False)
    return ds.with_houses(int(h) for h in keep)
