"""Trial scoring: peak-to-truth matching, resolution, and aggregates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .estimator import MusicResult
from .surface import Doa

UNMATCHED_ERROR_DEG = 180.0


@dataclass(frozen=True)
class ResolutionPolicy:
    """How a trial counts as resolved.

    A trial resolves when the search produced exactly as many peaks as
    sources and every matched error is at most the threshold: half the
    minimum pairwise true separation for multiple sources, or
    ``single_source_threshold_deg`` for one source. A fixed
    ``threshold_deg`` overrides both.
    """

    single_source_threshold_deg: float = 2.0
    threshold_deg: float | None = None

    def __post_init__(self):
        if self.single_source_threshold_deg <= 0:
            raise ValidationError("single_source_threshold_deg must be positive")
        if self.threshold_deg is not None and self.threshold_deg <= 0:
            raise ValidationError("threshold_deg must be positive when given")


@dataclass(frozen=True)
class TrialOutcome:
    """Per-trial scoring record: one error entry per true source."""

    estimates: tuple[Doa, ...]
    errors_deg: tuple[float, ...]
    matched: tuple[bool, ...]
    resolved: bool


def _distance_deg(est: Doa, truth: Doa, two_d: bool) -> float:
    d_theta = abs(est.theta_deg - truth.theta_deg)
    if not two_d:
        return d_theta
    return max(d_theta, abs(est.phi_deg - truth.phi_deg))


def resolve_and_score(
    result: MusicResult, truth, policy: ResolutionPolicy = ResolutionPolicy()
) -> TrialOutcome:
    """Match estimates to true directions and score the trial.

    Matching is greedy one-to-one nearest neighbor on the angle error
    (the larger of the per-axis errors when elevation is searched too).
    Unmatched sources score 180 degrees.
    """
    truth = tuple(truth)
    k = len(truth)
    if k < 1:
        raise ValidationError("need at least one true source to score against")
    two_d = result.phi_grid_deg is not None
    estimates = tuple(result.estimates)

    pairs = sorted(
        ((_distance_deg(e, t, two_d), ei, ti)
         for ei, e in enumerate(estimates)
         for ti, t in enumerate(truth)),
        key=lambda item: (item[0], item[1], item[2]),
    )
    est_free = [True] * len(estimates)
    truth_err = [None] * k
    for dist, ei, ti in pairs:
        if est_free[ei] and truth_err[ti] is None:
            est_free[ei] = False
            truth_err[ti] = dist

    if policy.threshold_deg is not None:
        tau = policy.threshold_deg
    elif k == 1:
        tau = policy.single_source_threshold_deg
    else:
        tau = 0.5 * min(
            _distance_deg(truth[i], truth[j], two_d)
            for i in range(k)
            for j in range(i + 1, k)
        )

    matched = tuple(err is not None for err in truth_err)
    errors = tuple(
        float(err) if err is not None else UNMATCHED_ERROR_DEG for err in truth_err
    )
    resolved = len(estimates) == k and all(
        m and e <= tau for m, e in zip(matched, errors)
    )
    return TrialOutcome(estimates, errors, matched, resolved)


@dataclass(frozen=True)
class AggregateResult:
    """Probability of resolution and root-mean-square error over trials."""

    pr: float
    rmse_deg: float
    num_trials: int


def aggregate(outcomes, truth) -> AggregateResult:
    """Combine trial outcomes into (PR, RMSE).

    RMSE pools the per-source errors of every trial, with unmatched
    sources already carrying the 180-degree penalty; an all-unresolved
    batch reports exactly 180.
    """
    outcomes = list(outcomes)
    k = len(tuple(truth))
    if not outcomes:
        raise ValidationError("need at least one trial outcome")
    for out in outcomes:
        if len(out.errors_deg) != k:
            raise ValidationError("trial outcome source count does not match truth")
    pr = sum(1 for out in outcomes if out.resolved) / len(outcomes)
    if pr == 0.0:
        return AggregateResult(0.0, UNMATCHED_ERROR_DEG, len(outcomes))
    errs = np.array([out.errors_deg for out in outcomes], dtype=float)
    return AggregateResult(pr, float(np.sqrt(np.mean(errs**2))), len(outcomes))
