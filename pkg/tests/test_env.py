import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cegrl.env import (
    ACTIONS,
    STAY,
    Coord,
    EnvConfig,
    HazardTemplate,
    Scenario,
    crn_uniforms,
    expected_return,
    make_env_config,
    return_samples,
    rollout,
    simulate,
)
from cegrl.errors import DimensionMismatch, OutOfBounds
from cegrl.policy import PolicyParams

from conftest import line_world

RIGHT = ACTIONS.index("right")


def box_world(bounds=((0.0, 1.0), (0.0, 1.0))):
    return Scenario("box", 4, 4, (0, 0), (3, 3), bounds, horizon=5, hazards=(HazardTemplate(Coord(0), Coord(1), 0.3),))


def test_make_env_config_interior_and_boundary():
    sc = box_world()
    assert make_env_config(sc, [0.5, 0.5]).values == (0.5, 0.5)
    assert make_env_config(sc, [0.0, 1.0]).values == (0.0, 1.0)


def test_make_env_config_errors():
    sc = box_world()
    with pytest.raises(OutOfBounds) as info:
        make_env_config(sc, [1.5, 0.5])
    assert info.value.coordinates == [0]
    with pytest.raises(DimensionMismatch):
        make_env_config(sc, [0.5])


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario("bad", 3, 1, (0, 0), (0, 0), ((0.0, 1.0),), horizon=2, hazards=(HazardTemplate(Coord(0), 5.0, 0.5),))
    with pytest.raises(ValueError):
        Scenario("bad", 3, 1, (0, 0), (5, 0), ((0.0, 1.0),), horizon=2, hazards=(HazardTemplate(Coord(0), 5.0, 0.5),))
    with pytest.raises(ValueError):
        Scenario("bad", 3, 1, (0, 0), (2, 0), ((1.0, 1.0),), horizon=2, hazards=(HazardTemplate(Coord(0), 5.0, 0.5),))
    # a declared coordinate that nothing consumes
    with pytest.raises(ValueError):
        Scenario("bad", 3, 1, (0, 0), (2, 0), ((0.0, 1.0), (0.0, 1.0)), horizon=2, hazards=(HazardTemplate(Coord(0), 5.0, 0.5),))


def test_deterministic_right_walk():
    sc = line_world(width=4, horizon=2, goal=False)
    pol = PolicyParams.deterministic(sc, RIGHT)
    traj = rollout(sc, sc.nominal_config(), pol, seed=0)
    assert traj.cells(sc) == [(0, 0), (1, 0), (2, 0)]
    assert len(traj.states) == len(traj.actions) + 1 == len(traj.rewards) + 1


def test_stay_policy_pays_step_cost():
    sc = line_world(width=3, horizon=3)
    traj = rollout(sc, sc.nominal_config(), PolicyParams.deterministic(sc, STAY), seed=1)
    assert traj.cells(sc) == [(0, 0)] * 4
    assert list(traj.rewards) == [sc.step_cost] * 3


def test_goal_is_absorbing_and_rewarded_once():
    sc = line_world(width=3, horizon=5)
    traj = rollout(sc, sc.nominal_config(), PolicyParams.deterministic(sc, RIGHT), seed=0)
    assert [s for s in traj.states] == [0, 1, 2, 2, 2, 2]
    assert list(traj.actions[2:]) == [STAY] * 3
    assert traj.total_reward == pytest.approx(2 * sc.step_cost + sc.goal_reward, abs=1e-15)


def test_walls_clip_movement():
    sc = box_world()
    for a in range(len(ACTIONS)):
        traj = rollout(sc, sc.nominal_config(), PolicyParams.deterministic(sc, a), seed=3)
        assert all(sc.in_grid(c) for c in traj.cells(sc))
    left = rollout(sc, sc.nominal_config(), PolicyParams.deterministic(sc, ACTIONS.index("left")), seed=0)
    assert set(left.states) == {0}


def test_rollout_determinism():
    sc = line_world(width=5, horizon=8, slip=0.3)
    pol = PolicyParams.uniform(sc)
    a = rollout(sc, sc.nominal_config(), pol, 42)
    b = rollout(sc, sc.nominal_config(), pol, 42)
    assert a == b


def test_policy_shape_mismatch():
    sc = line_world()
    with pytest.raises(DimensionMismatch):
        rollout(sc, sc.nominal_config(), PolicyParams(np.zeros((7, 5))), 0)


@given(st.integers(0, 2**31), st.floats(0.0, 1.0), st.integers(0, 4))
def test_vectorized_matches_single(seed, slip, a):
    sc = line_world(width=4, horizon=6, slip=0.0, slip_coord=0, hazards=(HazardTemplate(9.0, 9.0, 0.5),))
    pol = PolicyParams(np.random.default_rng(seed).normal(size=(sc.n_states, 5)))
    seeds = [seed, seed + 1, seed + 2]
    states, actions, _, returns = simulate(sc, pol, np.array([slip, 0.0]), crn_uniforms(sc.horizon, seeds))
    for i, s in enumerate(seeds):
        t = rollout(sc, EnvConfig((slip,)), pol, s)
        assert np.array_equal(states[0, i], t.states)
        assert np.array_equal(actions[0, i], t.actions)
        assert returns[0, i] == pytest.approx(t.total_reward, abs=1e-12)


@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_states_stay_in_grid(seed, slip):
    sc = Scenario("g", 3, 2, (1, 1), (0, 0), ((0.0, 1.0),), horizon=7, slip_base=0.0, slip_coord=0)
    pol = PolicyParams(np.random.default_rng(seed).normal(size=(sc.n_states, 5)))
    traj = rollout(sc, EnvConfig((slip,)), pol, seed)
    assert all(sc.in_grid(c) for c in traj.cells(sc))


def _exact_return(sc: Scenario, pol: PolicyParams, slip: float) -> float:
    """Enumerate every executed-action sequence and its probability."""
    probs = pol.probabilities()
    w, h = sc.grid_width, sc.grid_height
    moves = {0: (0, 1), 1: (0, -1), 2: (-1, 0), 3: (1, 0), 4: (0, 0)}
    goal = sc.goal_index

    def step(s, b):
        x, y = s % w, s // w
        dx, dy = moves[b]
        return min(max(y + dy, 0), h - 1) * w + min(max(x + dx, 0), w - 1)

    def rec(s, t):
        if t == sc.horizon:
            return 0.0
        if s == goal:
            return 0.0
        total = 0.0
        for b in range(5):
            p = (1 - slip) * probs[s, b] + slip / 5
            nxt = step(s, b)
            r = sc.step_cost + (sc.goal_reward if nxt == goal else 0.0)
            total += p * (r + rec(nxt, t + 1))
        return total

    return rec(sc.start_index, 0)


def test_expected_return_matches_enumeration():
    sc = line_world(width=2, horizon=3, slip=0.2)
    pol = PolicyParams(np.array([[0.3, -0.2, 0.1, 1.0, 0.0], [0.0] * 5]))
    exact = _exact_return(sc, pol, 0.2)
    samples = return_samples(sc, sc.nominal_config(), pol, 10_000, 7)
    se = samples.std(ddof=1) / math.sqrt(samples.size)
    assert abs(samples.mean() - exact) <= 3 * se


def test_expected_return_three_state_horizon_two():
    sc = line_world(width=3, horizon=2, slip=0.1)
    pol = PolicyParams(np.random.default_rng(5).normal(size=(3, 5)))
    exact = _exact_return(sc, pol, 0.1)
    samples = return_samples(sc, sc.nominal_config(), pol, 20_000, 11)
    assert abs(samples.mean() - exact) <= 3 * samples.std(ddof=1) / math.sqrt(samples.size)


def test_expected_return_single_rollout_and_zero_reward():
    sc = line_world(width=4, horizon=3, goal=False)
    pol = PolicyParams.deterministic(sc, RIGHT)
    traj = rollout(sc, sc.nominal_config(), pol, 9)
    assert expected_return(sc, sc.nominal_config(), pol, 1, 9) == traj.total_reward
    free = line_world(width=4, horizon=3, goal=False, step_cost=0.0)
    assert expected_return(free, free.nominal_config(), PolicyParams.uniform(free), 50, 0) == 0.0


def test_transition_probs_are_stochastic():
    sc = box_world()
    for slip in (0.0, 0.25, 1.0):
        P = sc.transition_probs(slip)
        np.testing.assert_allclose(P.sum(axis=2), 1.0, atol=1e-15)
        assert (P[sc.goal_index, :, sc.goal_index] == 1.0).all()
