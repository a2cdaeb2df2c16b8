"""Frequency-snapshot extraction from the receiver time series.

Each snapshot window spans an integer number of coding periods, so the
coding harmonics land exactly on FFT bins. The window is transformed
with a 1/Q-scaled length-Q DFT, centered, and sampled at the harmonic
bins, giving one (2P+1)-vector per snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ValidationError
from .surface import HarmonicMatrix
from .waveform import SamplingPlan, TimeSeries


def frequency_indices(plan: SamplingPlan, max_harmonic: int) -> np.ndarray:
    """0-based centered-spectrum bins of harmonics -P..P.

    With Q points per snapshot and k0 coding periods per snapshot,
    harmonic p sits at centered bin Q/2 + k0*p. Q must be even so the
    spectrum has a center bin, and k0*P must stay below Q/2 so the top
    harmonic fits in the sampled band (equivalently the sample rate
    must exceed 2*P coding rates).
    """
    if max_harmonic < 0:
        raise ValidationError("max_harmonic must be nonnegative")
    q_len = plan.points_per_snapshot
    k0 = plan.periods_per_snapshot
    if q_len % 2 != 0:
        raise ConfigurationError(
            f"points per snapshot must be even for a centered spectrum; got {q_len}"
        )
    if k0 * max_harmonic >= q_len // 2:
        raise ConfigurationError(
            f"harmonic {max_harmonic} maps to centered bin offset "
            f"{k0 * max_harmonic}, outside the +/-{q_len // 2} band; "
            "raise the sample rate or lower max_harmonic"
        )
    orders = np.arange(-max_harmonic, max_harmonic + 1)
    return q_len // 2 + k0 * orders


@dataclass(eq=False)
class FrequencySnapshot:
    """Harmonic-bin values of one snapshot window."""

    values: np.ndarray
    t_index: int
    max_harmonic: int


@dataclass(eq=False)
class MultiSnapshot:
    """Harmonic-bin values of all snapshot windows, columns = snapshots."""

    matrix: np.ndarray
    harmonics: HarmonicMatrix
    plan: SamplingPlan

    def __post_init__(self):
        rows = 2 * self.harmonics.max_harmonic + 1
        if self.matrix.shape != (rows, self.plan.num_snapshots):
            raise ValidationError(
                f"matrix shape {self.matrix.shape} does not match "
                f"({rows}, {self.plan.num_snapshots})"
            )

    def snapshot(self, i: int) -> FrequencySnapshot:
        return FrequencySnapshot(self.matrix[:, i], i, self.harmonics.max_harmonic)


def extract_snapshots(
    series: TimeSeries, plan: SamplingPlan, harmonics: HarmonicMatrix
) -> MultiSnapshot:
    """Slice the series into snapshots and sample their harmonic bins.

    Uses the first Q*I samples; the series must be at least that long
    and carry the plan's sample rate.
    """
    if abs(series.sample_rate_hz - plan.sample_rate_hz) > 1e-9 * plan.sample_rate_hz:
        raise ValidationError(
            f"series sample rate {series.sample_rate_hz} does not match "
            f"the plan's {plan.sample_rate_hz}"
        )
    q_len = plan.points_per_snapshot
    needed = plan.total_points
    if series.samples.size < needed:
        raise ValidationError(
            f"series has {series.samples.size} samples but the plan needs {needed}"
        )
    idx = frequency_indices(plan, harmonics.max_harmonic)
    windows = series.samples[:needed].reshape(plan.num_snapshots, q_len)
    spectra = np.fft.fftshift(np.fft.fft(windows, axis=1), axes=1) / q_len
    return MultiSnapshot(spectra[:, idx].T.copy(), harmonics, plan)


def write_snapshots_csv(snapshots: MultiSnapshot, path: str) -> None:
    """Write snapshots as CSV rows (snapshot_index, p, re, im)."""
    orders = snapshots.harmonics.harmonic_orders
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("snapshot_index,p,re,im\n")
        for i in range(snapshots.plan.num_snapshots):
            for row, p in enumerate(orders):
                v = snapshots.matrix[row, i]
                fh.write(f"{i},{p},{v.real:.10g},{v.imag:.10g}\n")
