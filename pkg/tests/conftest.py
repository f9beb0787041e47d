import numpy as np
import pytest
from hypothesis import settings

from cegrl.env import Coord, HazardTemplate, Scenario

settings.register_profile("suite", max_examples=60, deadline=None)
settings.load_profile("suite")


def line_world(width=3, horizon=2, slip=0.0, goal=True, hazards=(), bounds=((0.0, 1.0),), slip_coord=None, **kw):
    """A 1-row world; the default config coordinate is unused unless a hazard or slip consumes it."""
    if not hazards and slip_coord is None:
        hazards = (HazardTemplate(Coord(0), 50.0, 0.5),)
    return Scenario(
        "line", width, 1, (0, 0), (width - 1, 0) if goal else None, bounds,
        horizon=horizon, slip_base=slip, hazards=hazards, slip_coord=slip_coord, **kw,
    )


@pytest.fixture
def corridor():
    from cegrl.config import load_scenario

    return load_scenario("corridor-8x8")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
