"""Shared fixtures: the baseline 5x6 surface and its sampling plan."""

import numpy as np
import pytest

from msdoa import SamplingPlan, SurfaceConfig

C0 = 299792458.0


@pytest.fixture(scope="session")
def table1_cfg() -> SurfaceConfig:
    # 5 rows x 6 cols, 1 GHz carrier, half-wavelength spacing, receiver
    # one wavelength behind the centre.
    return SurfaceConfig(
        rows=5,
        cols=6,
        carrier_hz=1e9,
        coding_period_s=1.6e-5,
        receiver_offset_m=2 * C0 / 2e9,
    )


@pytest.fixture(scope="session")
def table1_plan() -> SamplingPlan:
    # fs * dT = 800 samples per period, 2 periods per snapshot, 5 snapshots.
    return SamplingPlan(
        sample_rate_hz=50e6,
        periods_per_snapshot=2,
        num_snapshots=5,
        coding_period_s=1.6e-5,
    )


@pytest.fixture(scope="session")
def small_cfg() -> SurfaceConfig:
    # 2x3 surface keeps brute-force oracles cheap.
    return SurfaceConfig(
        rows=2,
        cols=3,
        carrier_hz=1e9,
        coding_period_s=1.6e-5,
        receiver_offset_m=2 * C0 / 2e9,
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20260814)
