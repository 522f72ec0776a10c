"""One-period waveform signatures and rational-rate FIR decimation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal as sps

from .dataio import Measurement, RecordingTooShort, period_length


def samples_per_period(sample_rate_hz: float, grid_freq_hz: float) -> int:
    return period_length(sample_rate_hz, grid_freq_hz)


def normalize_segment(seg) -> tuple[np.ndarray, bool]:
    """Map a segment affinely onto [-1, 1].

    Returns ``(normalized, degenerate)``. A constant segment has no shape
    to keep and comes back as zeros with ``degenerate=True``.
    """
    seg = np.asarray(seg, dtype=np.float64)
    if seg.size == 0:
        raise ValueError("empty segment")
    hi, lo = seg.max(), seg.min()
    span = hi - lo
    if not span > 0:
        return np.zeros_like(seg), True
    out = (2.0 * seg - (hi + lo)) / span
    # rounding can leave the extremes a few ulp off +-1
    np.clip(out, -1.0, 1.0, out=out)
    out[seg == hi] = 1.0
    out[seg == lo] = -1.0
    return out, False


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    label: str
    house_id: int
    tau: int = 0
    degenerate: bool = False

    @property
    def period(self) -> int:
        return self.values.size // 2


def build_feature(m: Measurement, tau: int, d: int) -> FeatureVector:
    """Normalized current period followed by normalized voltage period at ``tau``."""
    if tau < 0 or tau + d > len(m):
        raise IndexError(f"window [{tau}, {tau + d}) outside recording of {len(m)} samples")
    i_hat, bad_i = normalize_segment(m.current[tau : tau + d])
    v_hat, bad_v = normalize_segment(m.voltage[tau : tau + d])
    return FeatureVector(
        np.concatenate([i_hat, v_hat]), m.category, m.house_id, tau, bad_i or bad_v
    )


def window_origins(tau0: int, epsilon: int, d: int) -> range:
    if epsilon < 1:
        raise ValueError("sliding step must be >= 1")
    return range(tau0, tau0 + (d // epsilon) * epsilon, epsilon)


def expand_measurement(m: Measurement, tau0: int, epsilon: int, d: int) -> list[FeatureVector]:
    """Features at phases ``tau0 + i*epsilon`` for ``0 <= i < d // epsilon``."""
    origins = window_origins(tau0, epsilon, d)
    for i, tau in enumerate(origins):
        if tau < 0 or tau + d > len(m):
            raise IndexError(
                f"window {i} at tau={tau} overruns recording of {len(m)} samples"
            )
    return [build_feature(m, tau, d) for tau in origins]


def feature_matrix(m: Measurement, taus, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`build_feature` over many origins.

    Returns ``(X, degenerate)`` with ``X`` of shape ``(len(taus), 2d)``.
    """
    taus = np.asarray(list(taus), dtype=np.int64)
    if taus.size and (taus.min() < 0 or taus.max() + d > len(m)):
        raise IndexError(f"window outside recording of {len(m)} samples")
    idx = taus[:, None] + np.arange(d)[None, :]
    out = np.empty((taus.size, 2 * d))
    bad = np.zeros(taus.size, dtype=bool)
    for half, channel in enumerate((m.current, m.voltage)):
        segs = channel[idx]
        hi = segs.max(axis=1, keepdims=True)
        lo = segs.min(axis=1, keepdims=True)
        span = hi - lo
        flat = ~(span[:, 0] > 0)
        bad |= flat
        safe = np.where(flat[:, None], 1.0, span)
        norm = (2.0 * segs - (hi + lo)) / safe
        np.clip(norm, -1.0, 1.0, out=norm)
        norm[segs == hi] = 1.0
        norm[segs == lo] = -1.0
        norm[flat] = 0.0
        out[:, half * d : (half + 1) * d] = norm
    return out, bad


def steady_state_window(m: Measurement, d: int) -> int:
    """Start of the final two-period window of a recording."""
    if len(m) < 2 * d:
        raise RecordingTooShort(f"{len(m)} samples, need at least {2 * d}")
    return len(m) - 2 * d


@dataclass(frozen=True)
class DecimationPlan:
    up_factor: int
    down_factor: int
    fir_taps: np.ndarray
    fs_in: float
    fs_out: float

    def __post_init__(self):
        if math.gcd(self.up_factor, self.down_factor) != 1:
            raise ValueError("up/down factors must be coprime")
        taps = np.asarray(self.fir_taps, dtype=np.float64)
        if taps.size % 2 != 1 or not np.allclose(taps, taps[::-1], rtol=0, atol=0):
            raise ValueError("FIR taps must be symmetric with odd length")
        object.__setattr__(self, "fir_taps", taps)

    @property
    def delay(self) -> int:
        """Group delay in samples of the upsampled stream."""
        return (self.fir_taps.size - 1) // 2


def design_decimation(
    fs_in: float,
    fs_out: float,
    atten_db: float = 60.0,
    transition: float = 0.10,
    max_denominator: int = 10_000,
) -> DecimationPlan:
    """Kaiser-windowed sinc low-pass for resampling ``fs_in`` down to ``fs_out``.

    The stopband begins at the output Nyquist frequency and the transition
    band is ``transition`` times that Nyquist wide.
    """
    if not (0 < fs_out < fs_in):
        raise ValueError(f"need 0 < fs_out < fs_in, got {fs_out:g} and {fs_in:g}")
    ratio = Fraction(fs_out / fs_in).limit_denominator(max_denominator)
    if ratio <= 0 or not math.isclose(float(ratio), fs_out / fs_in, rel_tol=1e-12):
        raise ValueError(f"rate ratio {fs_out:g}/{fs_in:g} is not a usable rational")
    up, down = ratio.numerator, ratio.denominator
    fs_up = fs_in * up
    nyq_out = fs_out / 2.0
    width = transition * nyq_out
    cutoff = nyq_out - width / 2.0
    numtaps, beta = sps.kaiserord(atten_db, width / (fs_up / 2.0))
    # delay must be a whole number of output samples to keep outputs on the input grid
    half = math.ceil((numtaps - 1) / 2 / down) * down
    numtaps = 2 * half + 1
    taps = sps.firwin(numtaps, cutoff, window=("kaiser", beta), fs=fs_up)
    taps = 0.5 * (taps + taps[::-1])
    return DecimationPlan(up, down, taps * up, float(fs_in), float(fs_in) * up / down)


def resample_channel(x, plan: DecimationPlan) -> np.ndarray:
    """Filter and resample one channel, keeping only fully supported outputs.

    Output ``k`` sits at input time ``(k0 + k) * down / up - delay / up``
    where ``k0`` is the first output whose filter span lies inside the input;
    warm-up and run-out samples are dropped.
    """
    x = np.asarray(x, dtype=np.float64)
    up, down = plan.up_factor, plan.down_factor
    y = sps.upfirdn(plan.fir_taps, x, up=up, down=down)
    n_taps = plan.fir_taps.size
    len_up = (x.size - 1) * up + 1
    first = -(-(n_taps - 1) // down)
    last = (len_up - 1) // down
    return np.ascontiguousarray(y[first : last + 1])


def apply_decimation(m: Measurement, plan: DecimationPlan) -> Measurement:
    """Resample both channels of ``m`` identically."""
    if not math.isclose(m.sample_rate_hz, plan.fs_in, rel_tol=1e-12):
        raise ValueError(
            f"plan designed for {plan.fs_in:g} Hz, measurement is at {m.sample_rate_hz:g} Hz"
        )
    fs_new = plan.fs_out
    period_length(fs_new, m.grid_freq_hz)
    return Measurement(
        resample_channel(m.current, plan),
        resample_channel(m.voltage, plan),
        fs_new,
        m.grid_freq_hz,
        m.house_id,
        m.category,
        m.appliance_id,
        source=m.source,
    )
