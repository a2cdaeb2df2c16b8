"""Received-signal synthesis for the switched-surface receiver.

Builds the single-channel time series seen by the receiver: each
incident plane wave is multiplied element-wise by the +/-1 coding
schedule, summed over the surface, scaled by per-snapshot source
amplitudes, and buried in circular complex Gaussian noise. Two signal
models are available: ``full`` evaluates the exact schedule sample by
sample, ``ideal`` keeps only coding harmonics up to a chosen order
(a band-limited idealization with no spectral folding).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .surface import Doa, SurfaceConfig, harmonic_matrix, steering_vector

_MODES = ("full", "ideal")
_AMPLITUDE_MODELS = ("gaussian", "constant_modulus")
_COHERENCE = ("incoherent", "coherent")


@dataclass(frozen=True)
class SourceScene:
    """Incident sources: directions, powers, and amplitude statistics.

    ``coherent_gains`` are the fixed unit-modulus ratios tying every
    source amplitude to the first one in coherent mode; ``None`` means
    "draw once per experiment from the experiment seed" and is resolved
    by :func:`resolve_gains` before synthesis.
    """

    doas: tuple[Doa, ...]
    powers: tuple[float, ...]
    coherence: str = "incoherent"
    coherent_gains: tuple[complex, ...] | None = None
    amplitude_model: str = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "doas", tuple(self.doas))
        object.__setattr__(self, "powers", tuple(float(p) for p in self.powers))
        if len(self.powers) != len(self.doas):
            raise ValidationError("powers must match the number of sources")
        if any(p <= 0 for p in self.powers):
            raise ValidationError("source powers must be positive")
        if self.coherence not in _COHERENCE:
            raise ValidationError(f"coherence must be one of {_COHERENCE}")
        if self.amplitude_model not in _AMPLITUDE_MODELS:
            raise ValidationError(f"amplitude_model must be one of {_AMPLITUDE_MODELS}")
        if self.coherent_gains is not None:
            if self.coherence != "coherent":
                raise ValidationError("coherent_gains require coherence='coherent'")
            gains = tuple(complex(g) for g in self.coherent_gains)
            object.__setattr__(self, "coherent_gains", gains)
            if len(gains) != len(self.doas):
                raise ValidationError("coherent_gains must match the number of sources")
            if abs(gains[0] - 1.0) > 1e-9:
                raise ValidationError("the first coherent gain must be exactly 1")
            if any(abs(abs(g) - 1.0) > 1e-9 for g in gains):
                raise ValidationError("coherent gains must have unit modulus")

    @property
    def num_sources(self) -> int:
        return len(self.doas)


def make_coherent_gains(num_sources: int, rng_seed) -> tuple[complex, ...]:
    """Unit-modulus gains with seeded uniform-random phases, first = 1."""
    rng = np.random.default_rng(rng_seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=num_sources)
    gains = np.exp(1j * phases)
    gains[0] = 1.0
    return tuple(complex(g) for g in gains)


def resolve_gains(scene: SourceScene, rng_seed) -> SourceScene:
    """Fill in coherent gains from a seed when the scene left them unset."""
    if scene.coherence != "coherent" or scene.coherent_gains is not None:
        return scene
    from dataclasses import replace

    return replace(scene, coherent_gains=make_coherent_gains(scene.num_sources, rng_seed))


@dataclass(frozen=True)
class SamplingPlan:
    """Receiver sampling grid: rate, snapshot length, snapshot count.

    A snapshot spans ``periods_per_snapshot`` whole coding periods, so
    every coding harmonic lands exactly on a discrete frequency bin.
    The sample rate must be an integer multiple of the coding rate.
    """

    sample_rate_hz: float
    periods_per_snapshot: int
    num_snapshots: int
    coding_period_s: float

    def __post_init__(self):
        if self.sample_rate_hz <= 0 or self.coding_period_s <= 0:
            raise ValidationError("sample_rate_hz and coding_period_s must be positive")
        if self.periods_per_snapshot < 1:
            raise ValidationError("periods_per_snapshot must be at least 1")
        if self.num_snapshots < 1:
            raise ValidationError("num_snapshots must be at least 1")
        ratio = self.sample_rate_hz * self.coding_period_s
        if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio) or round(ratio) < 1:
            raise ValidationError(
                "sample_rate_hz times coding_period_s must be a positive "
                f"integer so coding harmonics fall on FFT bins; got {ratio!r}"
            )

    @property
    def points_per_period(self) -> int:
        """Samples in one coding period."""
        return int(round(self.sample_rate_hz * self.coding_period_s))

    @property
    def points_per_snapshot(self) -> int:
        """Samples in one snapshot window."""
        return self.periods_per_snapshot * self.points_per_period

    @property
    def snapshot_duration_s(self) -> float:
        return self.periods_per_snapshot * self.coding_period_s

    @property
    def total_points(self) -> int:
        return self.points_per_snapshot * self.num_snapshots


@dataclass(frozen=True)
class NoiseSpec:
    """Per-element noise variance, optionally derived from an SNR.

    ``variance`` is the per-element power sigma^2; the aggregate noise
    added to the single receiver stream has variance M*N*sigma^2.
    """

    variance: float
    snr_db: float | None = None

    def __post_init__(self):
        if self.variance < 0:
            raise ValidationError("noise variance must be nonnegative")

    @classmethod
    def from_snr_db(cls, snr_db: float, reference_power: float = 1.0) -> "NoiseSpec":
        """Variance giving ``snr_db = 10*log10(reference_power/variance)``."""
        if reference_power <= 0:
            raise ValidationError("reference_power must be positive")
        return cls(reference_power * 10.0 ** (-snr_db / 10.0), snr_db=float(snr_db))

    @classmethod
    def quiet(cls) -> "NoiseSpec":
        return cls(0.0)


@dataclass(eq=False)
class TimeSeries:
    """Complex baseband receiver samples on a uniform grid."""

    samples: np.ndarray
    sample_rate_hz: float
    t_origin_s: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.ndim != 1:
            raise ValidationError("samples must be one-dimensional")


def draw_source_amplitudes(scene: SourceScene, num_snapshots: int, rng_seed) -> np.ndarray:
    """Draw the (K, I) per-snapshot source amplitude matrix.

    Gaussian mode draws circular complex Gaussian entries with the
    configured powers; constant-modulus mode draws sqrt(power) times a
    uniform random phase. In coherent mode only the first row is drawn
    and the rest are tied to it by the scene's unit-modulus gains, so
    the matrix has rank one.
    """
    if num_snapshots < 1:
        raise ValidationError("num_snapshots must be at least 1")
    rng = np.random.default_rng(rng_seed)
    k = scene.num_sources
    powers = np.asarray(scene.powers)

    def _draw(shape, power):
        if scene.amplitude_model == "gaussian":
            re = rng.standard_normal(shape)
            im = rng.standard_normal(shape)
            return np.sqrt(np.asarray(power) / 2.0) * (re + 1j * im)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=shape)
        return np.sqrt(np.asarray(power)) * np.exp(1j * phase)

    if scene.coherence == "coherent":
        if scene.coherent_gains is None:
            raise ValidationError(
                "coherent scene has unresolved gains; call resolve_gains first"
            )
        base = _draw(num_snapshots, powers[0])
        gains = np.asarray(scene.coherent_gains)
        return gains[:, None] * base[None, :]
    return _draw((k, num_snapshots), powers[:, None])


def _slot_indices(sample_indices: np.ndarray, points_per_period: int, size: int) -> np.ndarray:
    """Active element (row-major slot) for each integer sample index.

    Integer arithmetic keeps slot-boundary decisions exact: sample q at
    period phase r/z belongs to slot ceil(r*size/z) - 1, with phase 0
    wrapping to the last slot (the schedule is left-open in time).
    """
    r = sample_indices % points_per_period
    num = r * size
    return np.where(num == 0, size - 1, (num + points_per_period - 1) // points_per_period - 1)


def _signal_samples(cfg, doas, amplitudes, plan, mode, max_harmonic):
    n_total = plan.total_points
    q_len = plan.points_per_snapshot
    if len(doas) == 0:
        return np.zeros(n_total, dtype=complex)
    steering = np.column_stack([steering_vector(d, cfg) for d in doas])

    if mode == "full":
        z = plan.points_per_period
        idx = np.arange(n_total)
        slots = _slot_indices(idx, z, cfg.size)
        snap = idx // q_len
        col_sums = steering.sum(axis=0)
        out = np.zeros(n_total, dtype=complex)
        for k in range(len(doas)):
            out += (2.0 * steering[slots, k] - col_sums[k]) * amplitudes[k, snap]
        return out

    # Band-limited model: truncated harmonic sum. Within one snapshot
    # the sample phase of order p is 2*pi*p*q/z, and snapshots span
    # whole coding periods, so the Q x (2P+1) phase table repeats
    # exactly from snapshot to snapshot. Phases are reduced with
    # integer arithmetic before exp to stay exact for large p*q.
    harmonics = harmonic_matrix(max_harmonic, cfg)
    coeffs = harmonics.entries @ steering @ amplitudes  # (2P+1, I)
    z = plan.points_per_period
    q = np.arange(q_len)
    reduced = np.mod(np.outer(q, harmonics.harmonic_orders), z)
    table = np.exp(2j * np.pi * reduced / z)
    return (table @ coeffs).ravel(order="F")


def synthesize_received(
    cfg: SurfaceConfig,
    scene: SourceScene,
    plan: SamplingPlan,
    noise: NoiseSpec,
    mode: str = "full",
    rng_seed=0,
    max_harmonic: int | None = None,
    return_amplitudes: bool = False,
):
    """Synthesize the receiver time series for one experiment run.

    Samples sit at t_q = q / sample_rate_hz with the coding phase
    continuous across snapshot boundaries (time origin 0). The seed is
    split once for amplitudes and once for noise, so a given seed
    reproduces the run exactly.

    Parameters
    ----------
    cfg : SurfaceConfig
    scene : SourceScene
        Coherent scenes must have resolved gains.
    plan : SamplingPlan
        Its coding period must match ``cfg``.
    noise : NoiseSpec
    mode : {"full", "ideal"}
        "full" evaluates the exact +/-1 schedule; "ideal" keeps coding
        harmonics with order at most ``max_harmonic``.
    rng_seed : int, SeedSequence, or Generator seed
    max_harmonic : int, optional
        Required in ideal mode.
    return_amplitudes : bool
        Also return the drawn (K, I) amplitude matrix.

    Returns
    -------
    TimeSeries, or (TimeSeries, np.ndarray) when ``return_amplitudes``.
    """
    if mode not in _MODES:
        raise ValidationError(f"mode must be one of {_MODES}")
    if mode == "ideal" and (max_harmonic is None or max_harmonic < 0):
        raise ValidationError("ideal mode needs a nonnegative max_harmonic")
    if abs(plan.coding_period_s - cfg.coding_period_s) > 1e-12 * cfg.coding_period_s:
        raise ValidationError("plan and surface disagree on the coding period")

    rng = np.random.default_rng(rng_seed)
    amp_rng, noise_rng = rng.spawn(2)
    amplitudes = draw_source_amplitudes(scene, plan.num_snapshots, amp_rng)
    samples = _signal_samples(cfg, scene.doas, amplitudes, plan, mode, max_harmonic)
    if noise.variance > 0:
        scale = np.sqrt(cfg.size * noise.variance / 2.0)
        samples = samples + scale * (
            noise_rng.standard_normal(samples.size)
            + 1j * noise_rng.standard_normal(samples.size)
        )
    series = TimeSeries(samples, plan.sample_rate_hz)
    if return_amplitudes:
        return series, amplitudes
    return series


def write_time_series(series: TimeSeries, plan: SamplingPlan, path: str, seed=None) -> None:
    """Write samples as little-endian float64 (re, im) pairs plus a sidecar.

    The sidecar ``<path>.hdr`` records sample rate, points per snapshot,
    snapshot count, and the seed as ``key=value`` lines.
    """
    data = np.empty(2 * series.samples.size, dtype="<f8")
    data[0::2] = series.samples.real
    data[1::2] = series.samples.imag
    data.tofile(path)
    with open(f"{path}.hdr", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"sample_rate_hz={series.sample_rate_hz!r}\n")
        fh.write(f"points_per_snapshot={plan.points_per_snapshot}\n")
        fh.write(f"num_snapshots={plan.num_snapshots}\n")
        fh.write(f"seed={seed}\n")


def read_time_series(path: str) -> TimeSeries:
    """Read a series written by :func:`write_time_series`."""
    header = {}
    with open(f"{path}.hdr", "r", encoding="utf-8") as fh:
        for line in fh:
            key, _, value = line.strip().partition("=")
            header[key] = value
    raw = np.fromfile(path, dtype="<f8")
    return TimeSeries(raw[0::2] + 1j * raw[1::2], float(header["sample_rate_hz"]))
