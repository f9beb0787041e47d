import math

import pytest

from cegrl.config import bundled_scenario, load_config, load_scenario, parse_config
from cegrl.env import Coord
from cegrl.errors import ConfigError
from cegrl.loop import LOOP_POLISH_EVALS

BASE = """
[scenario]
name = "t"
grid_width = 3
grid_height = 2
start = [0, 0]
goal = [2, 1]
horizon = 5

[[scenario.config]]
name = "hx"
bounds = [0.0, 3.0]

[[scenario.hazards]]
center_x = "hx"
center_y = 1.5
radius = 0.4
"""


def field_of(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value.field


def test_minimal_config():
    run = parse_config(BASE)
    sc = run.scenario
    assert (sc.grid_width, sc.grid_height, sc.horizon) == (3, 2, 5)
    assert sc.hazards[0].center_x == Coord(0) and sc.hazards[0].center_y == 1.5
    assert run.loop.falsifier.polish_evals == LOOP_POLISH_EVALS
    assert run.source == BASE


def test_sections_override_defaults():
    run = parse_config(BASE + '\n[loop]\nmax_outer_iters = 3\nseed = 9\n[falsifier]\nbudget = 12\n[refiner]\nstep_cap = "inf"\nlam = 0.1\n[safety]\ngoal_deadline = 4\n')
    assert run.loop.max_outer_iters == 3 and run.loop.seed == 9
    assert run.loop.falsifier.budget == 12 and run.loop.falsifier.polish_evals == LOOP_POLISH_EVALS
    assert math.isinf(run.loop.refiner.step_cap) and run.lam == 0.1
    assert run.spec.goal_deadline == 4


@pytest.mark.parametrize(
    "text, field",
    [
        ("[scenario\n", "syntax"),
        (BASE + "[bogus]\n", "bogus"),
        (BASE.replace('name = "t"', 'name = "t"\ncolour = 1'), "scenario.colour"),
        (BASE.replace("horizon = 5", ""), "scenario.horizon"),
        (BASE.replace("horizon = 5", 'horizon = "five"'), "scenario.horizon"),
        (BASE.replace("horizon = 5", "horizon = 5.5"), "scenario.horizon"),
        (BASE.replace("start = [0, 0]", "start = [0]"), "scenario.start"),
        (BASE.replace("bounds = [0.0, 3.0]", "bounds = [3.0, 0.0]"), "scenario.config[0].bounds"),
        (BASE.replace('center_x = "hx"', 'center_x = "hy"'), "scenario.hazards[0].center_x"),
        (BASE.replace("radius = 0.4\n", ""), "scenario.hazards[0].radius"),
        (BASE.replace("goal = [2, 1]", "goal = [5, 1]"), "scenario"),
        (BASE + "[loop]\nmax_outer_iters = 0\n", "loop"),
        (BASE + "[loop]\nmonotone_gate = 1\n", "loop.monotone_gate"),
        (BASE + "[loop]\nfalsifier = 3\n", "loop.falsifier"),
        (BASE + "[falsifier]\nbudget = 1.5\n", "falsifier.budget"),
        (BASE + "[falsifier]\nacq_kind = 3\n", "falsifier.acq_kind"),
        (BASE + "[refiner]\nlam = -1.0\n", "refiner"),
        (BASE + "[refiner]\nwhat = 1\n", "refiner.what"),
        (BASE + "[safety]\ngoal_deadline = 2.5\n", "safety.goal_deadline"),
        (BASE + "[safety]\nother = 1\n", "safety"),
    ],
)
def test_errors_name_the_field(text, field):
    assert field_of(text) == field


def test_bundled_scenarios_load():
    for name in ("corridor-8x8", "tiny-2state", "open-5x5"):
        run = load_scenario(name)
        assert run.scenario.name == name
        assert load_config(bundled_scenario(name)).scenario == run.scenario
    with pytest.raises(FileNotFoundError):
        load_scenario("nope")


def test_unreadable_path(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_config(tmp_path / "missing.toml")
    assert info.value.field == "path"
