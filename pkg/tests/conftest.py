import numpy as np
import pytest

from spiroflow import (
    CohortSpec,
    differentiate_flow,
    gaussian_smooth,
    generate_synthetic_cohort,
    volume_flow_curve,
)


@pytest.fixture(scope="session")
def small_cohort():
    return generate_synthetic_cohort(CohortSpec(n_per_class=6, noise=0.1, seed=42))


@pytest.fixture(scope="session")
def small_cohort_series(small_cohort):
    """Per-record (flow series, Volume-Flow curve, binary label, horizon)."""
    out = []
    for rec in small_cohort:
        smoothed = gaussian_smooth(rec.curve)
        vf = volume_flow_curve(smoothed, differentiate_flow(smoothed))
        out.append((vf.flows, vf, rec.copd, rec.horizon))
    return out
