import os

import numpy as np
import pytest

from merton2d import PayoffKind, SetId, parameter_set


def acceptance_profile() -> str:
    profile = os.environ.get("MERTON2D_ACCEPTANCE_PROFILE", "ci").lower()
    if profile not in ("ci", "full"):
        raise ValueError(f"unknown acceptance profile {profile!r}")
    return profile


@pytest.fixture(scope="session")
def profile() -> dict:
    """Resolution knobs of the acceptance suite.

    The ci profile trades the reference quality (600 steps instead of 3000)
    and grid size (m=50 instead of 75) for runtime.
    """
    if acceptance_profile() == "full":
        return {"name": "full", "m": 75, "reference_steps": 3000}
    return {"name": "ci", "m": 50, "reference_steps": 600}


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260823)


@pytest.fixture(params=[SetId.SET1, SetId.SET2, SetId.SET3],
                ids=["set1", "set2", "set3"])
def any_pset(request):
    return parameter_set(request.param)


@pytest.fixture(params=[PayoffKind.PUT_ON_MIN, PayoffKind.PUT_ON_AVERAGE],
                ids=["min", "avg"])
def payoff_kind(request):
    return request.param
