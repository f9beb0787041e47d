"""Parameterized gridworld scenarios and seeded rollouts.

Cells are ``(x, y)`` pairs with ``0 <= x < width`` and ``0 <= y < height``;
the state index of a cell is ``y * width + x``.  Cell ``(x, y)`` occupies the
unit square ``[x, x+1] x [y, y+1]`` of the continuous plane, so its center is
``(x + 0.5, y + 0.5)``.  Hazard centers and radii live in the same plane.

Rollouts use common random numbers: a seed fixes a ``(T, 3)`` block of
uniforms (action sample, slip coin, slip action), independent of the policy
and the configuration.  Batched and single rollouts consume identical
numbers and therefore produce bit-identical trajectories.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .errors import DimensionMismatch, OutOfBounds

ACTIONS = ("up", "down", "left", "right", "stay")
N_ACTIONS = len(ACTIONS)
STAY = 4
MOVES = np.array([(0, 1), (0, -1), (-1, 0), (1, 0), (0, 0)], dtype=np.int64)


@dataclass(frozen=True)
class Coord:
    """Reference to coordinate ``index`` of the configuration vector."""

    index: int


Param = Union[float, Coord]


@dataclass(frozen=True)
class HazardTemplate:
    center_x: Param
    center_y: Param
    radius: Param

    def coords(self) -> list[int]:
        return [p.index for p in (self.center_x, self.center_y, self.radius) if isinstance(p, Coord)]


def _resolve(param: Param, values: np.ndarray) -> np.ndarray:
    if isinstance(param, Coord):
        return values[:, param.index]
    return np.full(values.shape[0], float(param))


def hazard_params(templates: Sequence[HazardTemplate], values) -> np.ndarray:
    """Instantiate hazard ``(cx, cy, r)`` per config row, shape ``(n, H, 3)``."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if not templates:
        return np.zeros((values.shape[0], 0, 3))
    cols = [
        np.stack([_resolve(h.center_x, values), _resolve(h.center_y, values), _resolve(h.radius, values)], axis=1)
        for h in templates
    ]
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class Scenario:
    """A gridworld family indexed by a configuration vector in a box."""

    name: str
    grid_width: int
    grid_height: int
    start_state: tuple[int, int]
    goal_state: tuple[int, int] | None
    config_bounds: tuple[tuple[float, float], ...]
    horizon: int
    slip_base: float = 0.0
    hazards: tuple[HazardTemplate, ...] = ()
    slip_coord: int | None = None
    step_cost: float = -0.01
    goal_reward: float = 1.0
    nominal: tuple[float, ...] | None = None
    description: str = field(default="", compare=False)

    def __post_init__(self):
        if self.grid_width < 1 or self.grid_height < 1:
            raise ValueError("grid dimensions must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if not 0.0 <= self.slip_base <= 1.0:
            raise ValueError("slip_base must lie in [0, 1]")
        if not self.in_grid(self.start_state):
            raise ValueError(f"start_state {self.start_state} outside the grid")
        if self.goal_state is not None:
            if not self.in_grid(self.goal_state):
                raise ValueError(f"goal_state {self.goal_state} outside the grid")
            if tuple(self.goal_state) == tuple(self.start_state):
                raise ValueError("start_state and goal_state must differ")
        if len(self.config_bounds) < 1:
            raise ValueError("config_dim must be positive")
        for j, (lo, hi) in enumerate(self.config_bounds):
            if not lo < hi:
                raise ValueError(f"config_bounds[{j}] must satisfy lo < hi")
        used = [c for h in self.hazards for c in h.coords()]
        if self.slip_coord is not None:
            used.append(self.slip_coord)
        if sorted(used) != list(range(self.config_dim)):
            raise ValueError(
                f"config coordinates consumed {sorted(used)} do not match config_dim={self.config_dim}"
            )
        if self.nominal is not None and len(self.nominal) != self.config_dim:
            raise ValueError("nominal config has the wrong dimension")

    # --- geometry -------------------------------------------------------
    @property
    def config_dim(self) -> int:
        return len(self.config_bounds)

    @property
    def n_states(self) -> int:
        return self.grid_width * self.grid_height

    @property
    def bounds_array(self) -> np.ndarray:
        return np.asarray(self.config_bounds, dtype=float)

    def in_grid(self, cell) -> bool:
        x, y = cell
        return 0 <= x < self.grid_width and 0 <= y < self.grid_height

    def index(self, cell) -> int:
        x, y = cell
        return int(y) * self.grid_width + int(x)

    def cell(self, index: int) -> tuple[int, int]:
        return int(index) % self.grid_width, int(index) // self.grid_width

    @property
    def start_index(self) -> int:
        return self.index(self.start_state)

    @property
    def goal_index(self) -> int:
        """State index of the goal, or -1 when the scenario has none."""
        return -1 if self.goal_state is None else self.index(self.goal_state)

    @cached_property
    def centers(self) -> np.ndarray:
        """Continuous ``(x, y)`` center of every state, shape ``(S, 2)``."""
        idx = np.arange(self.n_states)
        return np.stack([idx % self.grid_width + 0.5, idx // self.grid_width + 0.5], axis=1)

    @cached_property
    def transitions(self) -> np.ndarray:
        """Deterministic successor table ``(S, 5)``; walls clip movement."""
        idx = np.arange(self.n_states)
        x = idx % self.grid_width
        y = idx // self.grid_width
        nx = np.clip(x[:, None] + MOVES[None, :, 0], 0, self.grid_width - 1)
        ny = np.clip(y[:, None] + MOVES[None, :, 1], 0, self.grid_height - 1)
        return ny * self.grid_width + nx

    def nominal_config(self) -> "EnvConfig":
        if self.nominal is not None:
            return make_env_config(self, self.nominal)
        return EnvConfig(tuple(float(v) for v in self.bounds_array.mean(axis=1)))

    # --- config-controlled quantities ----------------------------------
    def hazard_params(self, values) -> np.ndarray:
        return hazard_params(self.hazards, values)

    def slip(self, values) -> np.ndarray:
        """Slip probability per config, clipped to [0, 1]."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        slip = np.full(values.shape[0], self.slip_base)
        if self.slip_coord is not None:
            slip = slip + values[:, self.slip_coord]
        return np.clip(slip, 0.0, 1.0)

    def transition_probs(self, slip: float) -> np.ndarray:
        """Stochastic transition tensor ``P[s, a, s']`` for a given slip."""
        S = self.n_states
        nxt = self.transitions
        P = np.zeros((S, N_ACTIONS, S))
        rows = np.arange(S)
        P[rows[:, None], np.arange(N_ACTIONS)[None, :], nxt] += 1.0 - slip
        for b in range(N_ACTIONS):
            P[rows, :, nxt[:, b]] += slip / N_ACTIONS
        g = self.goal_index
        if g >= 0:
            P[g] = 0.0
            P[g, :, g] = 1.0
        return P

    def task_rewards(self) -> np.ndarray:
        """State rewards used by the planner: step cost everywhere but the goal."""
        r = np.full(self.n_states, float(self.step_cost))
        if self.goal_index >= 0:
            r[self.goal_index] = 0.0
        return r


@dataclass(frozen=True)
class EnvConfig:
    values: tuple[float, ...]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def __len__(self):
        return len(self.values)


def make_env_config(scenario: Scenario, values: Sequence[float]) -> EnvConfig:
    values = [float(v) for v in values]
    if len(values) != scenario.config_dim:
        raise DimensionMismatch(f"expected {scenario.config_dim} config values, got {len(values)}")
    bad = [j for j, (v, (lo, hi)) in enumerate(zip(values, scenario.config_bounds)) if not lo <= v <= hi]
    if bad:
        raise OutOfBounds(bad)
    return EnvConfig(tuple(values))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A rollout: ``T+1`` state indices, ``T`` executed actions and rewards."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    seed: int

    def cells(self, scenario: Scenario) -> list[tuple[int, int]]:
        return [scenario.cell(s) for s in self.states]

    @property
    def total_reward(self) -> float:
        total = 0.0
        for r in self.rewards:
            total += float(r)
        return total

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.seed == other.seed
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.rewards, other.rewards)
        )

    __hash__ = None


def crn_uniforms(horizon: int, seeds: Sequence[int]) -> np.ndarray:
    """The common-random-number block for each seed, shape ``(m, T, 3)``."""
    return np.stack([np.random.default_rng(int(s)).random((horizon, 3)) for s in seeds])


def seed_schedule(base_seed: int, n: int) -> list[int]:
    return [int(base_seed) + i for i in range(n)]


def _check_policy(scenario: Scenario, policy) -> None:
    if policy.logits.shape != (scenario.n_states, N_ACTIONS):
        raise DimensionMismatch(
            f"policy shape {policy.logits.shape} does not match scenario ({scenario.n_states}, {N_ACTIONS})"
        )


def simulate(scenario: Scenario, policy, slips: np.ndarray, uniforms: np.ndarray):
    """Vectorized rollouts for ``n`` slip values and ``m`` seeds.

    Returns ``states (n, m, T+1)``, ``actions (n, m, T)``, ``rewards (n, m, T)``
    and ``returns (n, m)``.
    """
    _check_policy(scenario, policy)
    slips = np.asarray(slips, dtype=float).reshape(-1)
    n = slips.shape[0]
    m, T, _ = uniforms.shape
    cum = np.cumsum(policy.probabilities(), axis=1)[:, : N_ACTIONS - 1]
    nxt = scenario.transitions
    goal = scenario.goal_index
    slip_action = np.minimum((uniforms[:, :, 2] * N_ACTIONS).astype(np.int64), N_ACTIONS - 1)

    s = np.full((n, m), scenario.start_index, dtype=np.int64)
    states = np.empty((n, m, T + 1), dtype=np.int64)
    actions = np.empty((n, m, T), dtype=np.int64)
    rewards = np.empty((n, m, T))
    returns = np.zeros((n, m))
    states[:, :, 0] = s
    for t in range(T):
        u = uniforms[:, t, :]
        a = (cum[s] <= u[None, :, 0, None]).sum(axis=-1)
        np.minimum(a, N_ACTIONS - 1, out=a)
        slipped = u[None, :, 1] < slips[:, None]
        a = np.where(slipped, slip_action[None, :, t], a)
        done = s == goal
        a = np.where(done, STAY, a)
        s_next = nxt[s, a]
        r = np.where(done, 0.0, scenario.step_cost + scenario.goal_reward * (s_next == goal))
        actions[:, :, t] = a
        rewards[:, :, t] = r
        returns += r
        states[:, :, t + 1] = s_next
        s = s_next
    return states, actions, rewards, returns


def rollout(scenario: Scenario, config: EnvConfig, policy, seed: int) -> Trajectory:
    """One seeded rollout of exactly ``horizon`` steps."""
    slips = scenario.slip(config.as_array())
    states, actions, rewards, _ = simulate(scenario, policy, slips, crn_uniforms(scenario.horizon, [seed]))
    return Trajectory(states[0, 0].copy(), actions[0, 0].copy(), rewards[0, 0].copy(), int(seed))


def return_samples(scenario: Scenario, config: EnvConfig, policy, n_rollouts: int, base_seed: int) -> np.ndarray:
    """Per-rollout summed task reward over seeds ``base_seed .. base_seed+n-1``."""
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    uniforms = crn_uniforms(scenario.horizon, seed_schedule(base_seed, n_rollouts))
    _, _, _, returns = simulate(scenario, policy, scenario.slip(config.as_array()), uniforms)
    return returns[0]


def expected_return(scenario: Scenario, config: EnvConfig, policy, n_rollouts: int, base_seed: int) -> float:
    return float(np.mean(return_samples(scenario, config, policy, n_rollouts, base_seed)))
