"""Seeded Monte Carlo harness over experiment configs.

Per-trial seeds derive from (experiment seed, sweep index, trial index)
alone, so results are identical for identical configs regardless of how
trials are distributed over workers. Trials fail fast: any estimator
error aborts the sweep with context rather than emitting partial rows.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .config import ExperimentConfig, apply_sweep_value, config_digest
from .crb import crb
from .errors import MsdoaError, ValidationError
from .estimator import estimate_doa, write_spectrum_csv
from .metrics import AggregateResult, ResolutionPolicy, TrialOutcome, aggregate, resolve_and_score
from .snapshot import extract_snapshots, frequency_indices, write_snapshots_csv
from .surface import harmonic_matrix
from .waveform import resolve_gains, synthesize_received, write_time_series

# Fixed tag mixed into the seed stream for experiment-level draws
# (coherent gains), distinct from any (sweep, trial) pair.
_GAIN_SEED_TAG = 0x6761696E


def trial_seed_sequence(seed: int, sweep_index: int, trial_index: int) -> np.random.SeedSequence:
    """Counter-based seed for one trial; independent of worker layout."""
    return np.random.SeedSequence(entropy=(int(seed), int(sweep_index), int(trial_index)))


def resolve_experiment(cfg: ExperimentConfig) -> ExperimentConfig:
    """Resolve per-experiment randomness (coherent gains) from the seed."""
    scene = resolve_gains(
        cfg.scene, np.random.SeedSequence(entropy=(int(cfg.seed), _GAIN_SEED_TAG))
    )
    return replace(cfg, scene=scene)


def run_trial(
    cfg: ExperimentConfig,
    sweep_index: int,
    trial_index: int,
    policy: ResolutionPolicy = ResolutionPolicy(),
) -> tuple[TrialOutcome, tuple[float, ...]]:
    """One synthesize/extract/estimate/score pass plus its angle bound.

    Returns the trial outcome and the per-source square-root bound in
    degrees, computed from the amplitudes this trial actually drew.
    """
    seq = trial_seed_sequence(cfg.seed, sweep_index, trial_index)
    synth_seed, weight_seed = seq.spawn(2)
    series, amplitudes = synthesize_received(
        cfg.surface,
        cfg.scene,
        cfg.plan,
        cfg.noise,
        mode=cfg.mode,
        rng_seed=synth_seed,
        max_harmonic=cfg.max_harmonic,
        return_amplitudes=True,
    )
    harmonics = harmonic_matrix(cfg.max_harmonic, cfg.surface)
    snapshots = extract_snapshots(series, cfg.plan, harmonics)
    params = replace(cfg.estimator, weight_seed=weight_seed)
    result = estimate_doa(snapshots, cfg.surface, params)
    outcome = resolve_and_score(result, cfg.scene.doas, policy)
    bound = crb(
        cfg.surface,
        cfg.scene,
        cfg.plan,
        cfg.max_harmonic,
        cfg.noise.variance,
        amplitudes,
        check_full=False,
        # The azimuth-only search treats elevation as given; bounding it
        # jointly would be singular for in-plane scenes.
        known_elevations=cfg.estimator.kind == "1d",
    )
    sqrt_crb_deg = tuple(float(np.rad2deg(np.sqrt(b))) for b in bound.theta_bounds)
    return outcome, sqrt_crb_deg


def _trial_task(args):
    cfg, sweep_index, trial_index, policy = args
    return run_trial(cfg, sweep_index, trial_index, policy)


def run_trials(
    cfg: ExperimentConfig,
    sweep_index: int = 0,
    workers: int = 1,
    policy: ResolutionPolicy = ResolutionPolicy(),
):
    """All trials of one config point, in trial order."""
    tasks = [(cfg, sweep_index, t, policy) for t in range(cfg.trials)]
    if workers <= 1:
        return [_trial_task(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_trial_task, tasks))


@dataclass(frozen=True)
class PointRow:
    """Aggregated results of one sweep value."""

    variable: str
    value: object
    pr: float
    rmse_deg: float
    sqrt_crb_deg: tuple[float, ...]
    wall_s: float


@dataclass(eq=False)
class SweepResult:
    """All sweep rows plus the provenance needed to reproduce them."""

    rows: list
    config_sha256: str
    seed: int
    version: str


def run_sweep(
    cfg: ExperimentConfig,
    workers: int = 1,
    policy: ResolutionPolicy = ResolutionPolicy(),
) -> SweepResult:
    """Run every sweep point and aggregate (PR, RMSE, mean bound)."""
    if cfg.sweep is None:
        raise ValidationError("config has no sweep; use run_single instead")
    cfg = resolve_experiment(cfg)
    digest = config_digest(replace(cfg, scene=replace(cfg.scene, coherent_gains=None)))
    rows = []
    for sweep_index, value in enumerate(cfg.sweep.values):
        point = apply_sweep_value(cfg, value)
        start = time.perf_counter()
        try:
            results = run_trials(point, sweep_index, workers, policy)
        except (MsdoaError, np.linalg.LinAlgError) as exc:
            raise type(exc)(
                f"sweep {cfg.sweep.variable}={value} (index {sweep_index}): {exc}"
            ) from exc
        wall = time.perf_counter() - start
        outcomes = [r[0] for r in results]
        bounds = np.array([r[1] for r in results])
        agg = aggregate(outcomes, cfg.scene.doas)
        rows.append(
            PointRow(
                cfg.sweep.variable,
                value,
                agg.pr,
                agg.rmse_deg,
                tuple(float(b) for b in bounds.mean(axis=0)),
                wall,
            )
        )
    return SweepResult(rows, digest, cfg.seed, __version__)


def _fmt_value(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value)
    return f"{value:.10g}"


def write_sweep_csv(result: SweepResult, path: str) -> None:
    """Write sweep rows as CSV (UTF-8, LF).

    The file is a pure function of config and seed: byte-identical across
    runs and worker counts.  Wall times live on the in-memory rows only;
    the CLI reports them separately so the artifact stays deterministic.
    """
    if not result.rows:
        raise ValidationError("sweep result has no rows")
    num_sources = len(result.rows[0].sqrt_crb_deg)
    crb_cols = ",".join(f"sqrt_crb_deg_{k + 1}" for k in range(num_sources))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# schema=msdoa-sweep-v1\n")
        fh.write(f"# version={result.version}\n")
        fh.write(f"# config_sha256={result.config_sha256}\n")
        fh.write(f"# seed={result.seed}\n")
        if num_sources:
            fh.write(f"sweep_var,value,pr,rmse_deg,{crb_cols}\n")
        else:
            fh.write("sweep_var,value,pr,rmse_deg\n")
        for row in result.rows:
            crb_vals = "".join(f",{b:.10g}" for b in row.sqrt_crb_deg)
            fh.write(
                f"{row.variable},{_fmt_value(row.value)},{row.pr:.10g},"
                f"{row.rmse_deg:.10g}{crb_vals}\n"
            )


def run_single(cfg: ExperimentConfig, out_prefix: str | None = None) -> dict:
    """One seeded end-to-end run with CSV dumps of both spectra.

    Writes ``<prefix>_frequency.csv`` (centered FFT magnitude averaged
    over snapshots, selected harmonic bins flagged), and, when sources
    are configured, ``<prefix>_spatial.csv`` with the search spectrum
    and peak estimates. Also dumps the raw series and the snapshot
    matrix for downstream tools.
    """
    cfg = resolve_experiment(cfg)
    prefix = out_prefix if out_prefix is not None else cfg.output
    seq = trial_seed_sequence(cfg.seed, 0, 0)
    synth_seed, weight_seed = seq.spawn(2)
    series = synthesize_received(
        cfg.surface,
        cfg.scene,
        cfg.plan,
        cfg.noise,
        mode=cfg.mode,
        rng_seed=synth_seed,
        max_harmonic=cfg.max_harmonic,
    )
    harmonics = harmonic_matrix(cfg.max_harmonic, cfg.surface)
    snapshots = extract_snapshots(series, cfg.plan, harmonics)

    q_len = cfg.plan.points_per_snapshot
    windows = series.samples[: cfg.plan.total_points].reshape(-1, q_len)
    magnitude = np.abs(np.fft.fftshift(np.fft.fft(windows, axis=1), axes=1) / q_len).mean(axis=0)
    selected = np.zeros(q_len, dtype=int)
    selected[frequency_indices(cfg.plan, cfg.max_harmonic)] = 1
    freq_axis = (np.arange(q_len) - q_len // 2) * cfg.plan.sample_rate_hz / q_len

    paths = {"frequency": f"{prefix}_frequency.csv"}
    with open(paths["frequency"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write("bin_index,freq_hz,magnitude,selected\n")
        for b in range(q_len):
            fh.write(f"{b},{freq_axis[b]:.10g},{magnitude[b]:.10g},{selected[b]}\n")

    paths["series"] = f"{prefix}_series.f64"
    write_time_series(series, cfg.plan, paths["series"], seed=cfg.seed)
    paths["snapshots"] = f"{prefix}_snapshots.csv"
    write_snapshots_csv(snapshots, paths["snapshots"])

    result = None
    if cfg.scene.num_sources > 0:
        params = replace(cfg.estimator, weight_seed=weight_seed)
        result = estimate_doa(snapshots, cfg.surface, params)
        paths["spatial"] = f"{prefix}_spatial.csv"
        write_spectrum_csv(result, paths["spatial"])
    return {"paths": paths, "result": result}
