import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cegrl.env import ACTIONS, Coord, EnvConfig, HazardTemplate, Scenario, Trajectory, rollout, seed_schedule
from cegrl.policy import PolicyParams
from cegrl.robustness import (
    ROBUSTNESS_CAP,
    SafetySpec,
    policy_robustness,
    robustness_batch,
    trajectory_robustness,
    violating_steps,
    witness_seed,
)

from conftest import line_world


def fixed_traj(states):
    states = np.asarray(states)
    n = len(states) - 1
    return Trajectory(states, np.zeros(n, dtype=int), np.zeros(n), 0)


def hazard_world(cx, cy, r, width=4):
    sc = Scenario("h", width, 1, (0, 0), None, ((0.0, 1.0),), horizon=3, hazards=(HazardTemplate(cx, cy, r),), slip_coord=0)
    return sc, SafetySpec.for_scenario(sc)


def test_closest_approach_examples():
    # cell (0, 0) has center (0.5, 0.5)
    sc, spec = hazard_world(0.8, 0.5, 0.1)
    v = trajectory_robustness(spec, fixed_traj([0, 0]), EnvConfig((0.0,)))
    assert v.value == pytest.approx(0.2, abs=1e-12) and not v.violating
    sc, spec = hazard_world(0.55, 0.5, 0.1)
    v = trajectory_robustness(spec, fixed_traj([0, 0]), EnvConfig((0.0,)))
    assert v.value == pytest.approx(-0.05, abs=1e-12) and v.violating


def test_no_hazards_gives_cap():
    sc = Scenario("none", 3, 1, (0, 0), (2, 0), ((0.0, 1.0),), horizon=2, slip_coord=0)
    spec = SafetySpec.for_scenario(sc)
    v = trajectory_robustness(spec, fixed_traj([0, 1, 2]), EnvConfig((0.0,)))
    assert v.value == ROBUSTNESS_CAP and not v.violating


def test_minimum_taken_over_steps():
    sc, spec = hazard_world(3.5, 0.5, 0.5)
    v = trajectory_robustness(spec, fixed_traj([0, 1, 2, 1]), EnvConfig((0.0,)))
    assert v.value == pytest.approx(0.5, abs=1e-12)
    mask = violating_steps(spec, fixed_traj([0, 3, 2]), EnvConfig((0.0,)))
    assert mask.tolist() == [False, True, False]


def test_empty_trajectory_rejected():
    sc, spec = hazard_world(0.8, 0.5, 0.1)
    with pytest.raises(ValueError):
        trajectory_robustness(spec, Trajectory(np.array([], dtype=int), np.array([]), np.array([]), 0), EnvConfig((0.0,)))


def test_nonpositive_radius_rejected():
    sc = line_world(hazards=(HazardTemplate(1.0, 0.5, Coord(0)),), bounds=((0.0, 1.0),))
    spec = SafetySpec.for_scenario(sc)
    with pytest.raises(ValueError):
        trajectory_robustness(spec, fixed_traj([0]), EnvConfig((0.0,)))


def test_goal_deadline_margin():
    sc = line_world(width=3, horizon=4)
    spec = SafetySpec.for_scenario(sc, goal_deadline=3)
    cfg = sc.nominal_config()
    v = trajectory_robustness(spec, fixed_traj([0, 1, 2, 2, 2]), cfg)
    assert v.value == pytest.approx((3 - 2) / 4)
    v = trajectory_robustness(spec, fixed_traj([0, 0, 0, 0, 0]), cfg)
    assert v.value == -1.0


@given(st.lists(st.integers(0, 3), min_size=1, max_size=6), st.floats(0.0, 4.0), st.floats(0.05, 1.0), st.floats(0.01, 2.0))
def test_radius_shift_is_exact(states, cx, r, delta):
    _, spec_a = hazard_world(cx, 0.5, r)
    _, spec_b = hazard_world(cx, 0.5, r + delta)
    traj = fixed_traj(states)
    a = trajectory_robustness(spec_a, traj, EnvConfig((0.0,))).value
    b = trajectory_robustness(spec_b, traj, EnvConfig((0.0,))).value
    assert b == pytest.approx(a - delta, abs=1e-12)
    assert (a < 0) == trajectory_robustness(spec_a, traj, EnvConfig((0.0,))).violating


def _slippy():
    sc = Scenario("s", 4, 4, (0, 0), (3, 3), ((1.0, 3.0), (1.0, 3.0)), horizon=6, slip_base=0.4,
                  hazards=(HazardTemplate(Coord(0), Coord(1), 0.5),))
    return sc, SafetySpec.for_scenario(sc)


def test_policy_robustness_is_min_over_seed_set():
    sc, spec = _slippy()
    pol = PolicyParams.uniform(sc)
    cfg = EnvConfig((2.0, 2.0))
    per = [trajectory_robustness(spec, rollout(sc, cfg, pol, s), cfg).value for s in seed_schedule(10, 5)]
    g = policy_robustness(sc, spec, cfg, pol, 5, 10).value
    assert g == min(per)
    assert all(g <= v for v in per)
    w = witness_seed(sc, spec, cfg, pol, 5, 10)
    assert per[w - 10] == g


def test_single_rollout_equals_trajectory_value():
    sc, spec = _slippy()
    pol = PolicyParams.uniform(sc)
    cfg = EnvConfig((1.5, 2.5))
    assert policy_robustness(sc, spec, cfg, pol, 1, 3).value == trajectory_robustness(spec, rollout(sc, cfg, pol, 3), cfg).value


def test_deterministic_policy_independent_of_m():
    sc = Scenario("d", 4, 4, (0, 0), (3, 3), ((1.0, 3.0), (1.0, 3.0)), horizon=6,
                  hazards=(HazardTemplate(Coord(0), Coord(1), 0.5),))
    spec = SafetySpec.for_scenario(sc)
    pol = PolicyParams.deterministic(sc, ACTIONS.index("up"))
    cfg = EnvConfig((1.2, 2.7))
    vals = {policy_robustness(sc, spec, cfg, pol, m, 0).value for m in (1, 2, 5, 9)}
    assert len(vals) == 1


def test_batch_matches_pointwise():
    sc, spec = _slippy()
    pol = PolicyParams(np.random.default_rng(0).normal(size=(16, 5)))
    X = np.random.default_rng(1).uniform(1.0, 3.0, size=(7, 2))
    batch = robustness_batch(sc, spec, X, pol, 4, 2)
    for x, v in zip(X, batch.values):
        assert v == policy_robustness(sc, spec, EnvConfig(tuple(x)), pol, 4, 2).value


def test_m_rollouts_must_be_positive():
    sc, spec = _slippy()
    with pytest.raises(ValueError):
        policy_robustness(sc, spec, EnvConfig((2.0, 2.0)), PolicyParams.uniform(sc), 0, 0)
