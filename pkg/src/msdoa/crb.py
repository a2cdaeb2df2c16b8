"""Deterministic Cramer-Rao bounds for the harmonic snapshot model.

The observation stacks the harmonic-bin vectors of all snapshots; its
mean is linear in the (known-realization) source amplitudes through the
harmonic matrix and the steering vectors, and the noise is white across
bins and snapshots with per-bin variance M*N*sigma^2/Q. The bound on
the angle block treats the amplitudes as deterministic nuisance
parameters and projects the angle sensitivities onto the orthogonal
complement of the amplitude sensitivities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UnidentifiableParameterError, ValidationError
from .surface import (
    Doa,
    SurfaceConfig,
    element_positions,
    harmonic_matrix,
    steering_vector,
    wave_vector,
)
from .waveform import SamplingPlan, SourceScene

_FORM_AGREEMENT_RTOL = 1e-8
_SINGULAR_RTOL = 1e-12


def steering_derivatives(doa: Doa, cfg: SurfaceConfig) -> np.ndarray:
    """Partial derivatives of the steering vector, columns (d/dtheta, d/dphi).

    Each entry is the steering entry times j*w0/c times the projection
    of the element position on the direction derivative. At phi = 0 the
    azimuth column vanishes (azimuth is unidentifiable there); at
    phi = pi/2 the elevation column vanishes for a planar surface.
    """
    pos = element_positions(cfg)
    vec = steering_vector(doa, cfg)
    st, ct = np.sin(doa.theta), np.cos(doa.theta)
    sp, cp = np.sin(doa.phi), np.cos(doa.phi)
    dk_dtheta = np.array([-sp * st, sp * ct, 0.0])
    dk_dphi = np.array([cp * ct, cp * st, -sp])
    scale = 1j * cfg.omega0 / cfg.wave_speed
    return np.column_stack(
        [vec * (scale * (pos @ dk_dtheta)), vec * (scale * (pos @ dk_dphi))]
    )


@dataclass(eq=False)
class CrbResult:
    """Angle-block bound: covariance floor in radians^2.

    Parameter order is all azimuths then all elevations (azimuths only
    when the elevations were declared known). ``theta_bounds`` are the
    azimuth diagonal entries. ``noise_fisher`` is the decoupled Fisher
    information of the noise variance, (2P+1)*I/sigma^4, reported for
    completeness.
    """

    matrix: np.ndarray
    theta_bounds: np.ndarray
    noise_fisher: float


def _guarded_inverse(real_matrix: np.ndarray) -> np.ndarray:
    sym = 0.5 * (real_matrix + real_matrix.T)
    vals = np.linalg.eigvalsh(sym)
    if vals[-1] <= 0 or vals[0] <= _SINGULAR_RTOL * vals[-1]:
        raise UnidentifiableParameterError(
            "projected Fisher information is singular "
            f"(eigenvalues {vals[0]:.3e} .. {vals[-1]:.3e}); at least one "
            "angle is unidentifiable in this geometry (for example azimuth "
            "at zero elevation)"
        )
    return np.linalg.inv(sym)


def crb(
    cfg: SurfaceConfig,
    scene: SourceScene,
    plan: SamplingPlan,
    max_harmonic: int,
    noise_variance: float,
    amplitudes: np.ndarray,
    check_full: bool = True,
    known_elevations: bool = False,
) -> CrbResult:
    """Angle-block Cramer-Rao bound for one amplitude realization.

    Parameters
    ----------
    cfg, scene, plan : model under test
    max_harmonic : int
        Harmonic truncation order P of the snapshot model.
    noise_variance : float
        Per-element sigma^2.
    amplitudes : (K, I) complex
        The deterministic source amplitudes of the run.
    check_full : bool
        Also build the stacked-observation form explicitly and assert
        it matches the per-snapshot Hadamard form; the stacked form is
        cubic in (2P+1)*I, so sweeps disable this. The returned matrix
        is always the per-snapshot form, so both settings agree bitwise.
    known_elevations : bool
        Bound azimuths only, treating every elevation as known (the
        azimuth-only search). Required for in-plane scenes: at 90-degree
        elevation a flat surface carries no first-order elevation
        information, so the joint bound does not exist there.

    Returns
    -------
    CrbResult
        ``matrix`` is K x K over azimuths when ``known_elevations``,
        otherwise 2K x 2K over azimuths then elevations.
    """
    k = scene.num_sources
    if k < 1:
        raise ValidationError("bound needs at least one source")
    amps = np.asarray(amplitudes, dtype=complex)
    num_snap = plan.num_snapshots
    if amps.shape != (k, num_snap):
        raise ValidationError(
            f"amplitudes must be ({k}, {num_snap}); got {amps.shape}"
        )
    if noise_variance < 0:
        raise ValidationError("noise_variance must be nonnegative")

    harmonics = harmonic_matrix(max_harmonic, cfg).entries
    steer = np.column_stack([steering_vector(d, cfg) for d in scene.doas])
    derivs = [steering_derivatives(d, cfg) for d in scene.doas]
    # Columns: d/dtheta_1..K, then d/dphi_1..K unless elevations are known.
    theta_cols = np.column_stack([d[:, 0] for d in derivs])
    if known_elevations:
        sens = theta_cols
        groups = 1
    else:
        phi_cols = np.column_stack([d[:, 1] for d in derivs])
        sens = np.column_stack([theta_cols, phi_cols])
        groups = 2

    mixed_steer = harmonics @ steer  # (2P+1, K)
    mixed_sens = harmonics @ sens  # (2P+1, groups*K)

    sing = np.linalg.svd(mixed_steer, compute_uv=False)
    if sing[-1] <= 1e-10 * sing[0]:
        raise ConfigurationError(
            "mixed steering matrix is rank deficient; amplitude nuisance "
            "directions are not separable (coincident sources?)"
        )

    lines = 2 * max_harmonic + 1
    q_len = plan.points_per_snapshot
    proj = np.eye(lines) - mixed_steer @ np.linalg.pinv(mixed_steer)
    core = mixed_sens.conj().T @ proj @ mixed_sens
    sample_cov = amps @ amps.conj().T / num_snap
    hadamard = np.kron(np.ones((groups, groups)), sample_cov).T
    fisher_core = np.real(core * hadamard)
    prefactor = cfg.size * noise_variance / (2.0 * q_len * num_snap)
    bound = prefactor * _guarded_inverse(fisher_core)

    if check_full:
        # Stacked-observation form: block-diagonal amplitude
        # sensitivities, angle sensitivities replicated per snapshot and
        # scaled by that snapshot's amplitudes.
        eye_snap = np.eye(num_snap)
        amp_sens = np.kron(eye_snap, mixed_steer)
        scale = np.kron(np.ones((1, groups)), np.kron(amps.T, np.ones((lines, 1))))
        angle_sens = np.kron(np.ones((num_snap, 1)), mixed_sens) * scale
        proj_big = np.eye(lines * num_snap) - amp_sens @ np.linalg.pinv(amp_sens)
        fisher_big = np.real(angle_sens.conj().T @ proj_big @ angle_sens)
        bound_big = (cfg.size * noise_variance / (2.0 * q_len)) * _guarded_inverse(
            fisher_big
        )
        scale_ref = max(np.max(np.abs(bound)), np.max(np.abs(bound_big)))
        if scale_ref > 0 and np.max(np.abs(bound - bound_big)) > _FORM_AGREEMENT_RTOL * scale_ref:
            raise ConfigurationError(
                "stacked and per-snapshot bound forms disagree beyond "
                f"{_FORM_AGREEMENT_RTOL:g} relative; the model is too "
                "ill-conditioned to bound reliably"
            )

    bound = 0.5 * (bound + bound.T)
    noise_fisher = np.inf if noise_variance == 0 else lines * num_snap / noise_variance**2
    return CrbResult(bound, np.diagonal(bound)[:k].copy(), noise_fisher)
