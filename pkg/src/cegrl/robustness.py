"""Reach-avoid robustness of trajectories and policies.

The avoid margin of a state is its center's distance to the nearest hazard
center minus that hazard's radius; a trajectory's robustness is the minimum
margin along it, optionally min-composed with a goal-deadline margin.  A
policy's robustness ``g(theta; e)`` is the worst case over a fixed seed set.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import (
    EnvConfig,
    HazardTemplate,
    Scenario,
    Trajectory,
    crn_uniforms,
    hazard_params,
    seed_schedule,
    simulate,
)

ROBUSTNESS_CAP = 1e6
_CHUNK = 1024


@dataclass(frozen=True)
class SafetySpec:
    """Reach-avoid specification over a gridworld of width ``grid_width``."""

    grid_width: int
    horizon: int
    hazards: tuple[HazardTemplate, ...] = ()
    goal_index: int = -1
    goal_deadline: int | None = None
    kind: str = "reach-avoid"

    @classmethod
    def for_scenario(cls, scenario: Scenario, goal_deadline: int | None = None) -> "SafetySpec":
        if goal_deadline is not None and scenario.goal_state is None:
            raise ValueError("goal_deadline requires a goal state")
        return cls(scenario.grid_width, scenario.horizon, tuple(scenario.hazards), scenario.goal_index, goal_deadline)

    def hazard_disks(self, values) -> np.ndarray:
        disks = hazard_params(self.hazards, values)
        if disks.size and (disks[..., 2] <= 0).any():
            raise ValueError("hazard radius must be positive")
        return disks


@dataclass(frozen=True)
class RobustnessValue:
    value: float

    @property
    def violating(self) -> bool:
        return self.value < 0


def step_margins(spec: SafetySpec, states: np.ndarray, disks: np.ndarray) -> np.ndarray:
    """Avoid margin per visited state.

    ``states`` has shape ``(n, ..., T+1)`` and ``disks`` ``(n, H, 3)``; the
    result matches ``states``.  Without hazards every margin is the cap.
    """
    if disks.shape[1] == 0:
        return np.full(states.shape, ROBUSTNESS_CAP)
    w = spec.grid_width
    x = states % w + 0.5
    y = states // w + 0.5
    extra = (1,) * (states.ndim - 1)
    margin = None
    for h in range(disks.shape[1]):
        cx = disks[:, h, 0].reshape((-1,) + extra)
        cy = disks[:, h, 1].reshape((-1,) + extra)
        r = disks[:, h, 2].reshape((-1,) + extra)
        m_h = np.hypot(x - cx, y - cy) - r
        margin = m_h if margin is None else np.minimum(margin, m_h)
    return np.minimum(margin, ROBUSTNESS_CAP)


def _reach_margin(spec: SafetySpec, states: np.ndarray) -> np.ndarray:
    hit = states == spec.goal_index
    reached = hit.any(axis=-1)
    first = hit.argmax(axis=-1)
    return np.where(reached, (spec.goal_deadline - first) / spec.horizon, -1.0)


def trajectory_values(spec: SafetySpec, states: np.ndarray, disks: np.ndarray):
    """Robustness per trajectory plus the per-step avoid margins."""
    margins = step_margins(spec, states, disks)
    value = margins.min(axis=-1)
    if spec.goal_deadline is not None:
        value = np.minimum(value, _reach_margin(spec, states))
    return value, margins


def trajectory_robustness(spec: SafetySpec, traj: Trajectory, config: EnvConfig) -> RobustnessValue:
    if len(traj.states) == 0:
        raise ValueError("empty trajectory")
    disks = spec.hazard_disks(config.as_array())
    value, _ = trajectory_values(spec, np.asarray(traj.states)[None, :], disks)
    return RobustnessValue(float(value[0]))


@dataclass(frozen=True, eq=False)
class BatchRobustness:
    """``g`` for many configs under one seed schedule."""

    values: np.ndarray  # (n,)
    witness: np.ndarray  # (n,) index into the seed schedule of the minimizing rollout
    seeds: tuple[int, ...]


def robustness_batch(
    scenario: Scenario,
    spec: SafetySpec,
    configs,
    policy,
    m_rollouts: int,
    base_seed: int,
) -> BatchRobustness:
    """Evaluate ``g(theta; e)`` at every row of ``configs``."""
    if m_rollouts < 1:
        raise ValueError("m_rollouts must be >= 1")
    configs = np.atleast_2d(np.asarray(configs, dtype=float))
    seeds = tuple(seed_schedule(base_seed, m_rollouts))
    uniforms = crn_uniforms(scenario.horizon, seeds)
    slips = scenario.slip(configs)
    n = configs.shape[0]
    values = np.empty(n)
    witness = np.empty(n, dtype=np.int64)
    shared = None
    if np.all(slips == slips[0]):
        shared = simulate(scenario, policy, slips[:1], uniforms)[0]
    for lo in range(0, n, _CHUNK):
        hi = min(n, lo + _CHUNK)
        if shared is not None:
            states = np.broadcast_to(shared, (hi - lo,) + shared.shape[1:])
        else:
            states = simulate(scenario, policy, slips[lo:hi], uniforms)[0]
        per_traj, _ = trajectory_values(spec, states, spec.hazard_disks(configs[lo:hi]))
        values[lo:hi] = per_traj.min(axis=1)
        witness[lo:hi] = per_traj.argmin(axis=1)
    return BatchRobustness(values, witness, seeds)


def policy_robustness(
    scenario: Scenario,
    spec: SafetySpec,
    config: EnvConfig,
    policy,
    m_rollouts: int,
    base_seed: int,
) -> RobustnessValue:
    batch = robustness_batch(scenario, spec, config.as_array(), policy, m_rollouts, base_seed)
    return RobustnessValue(float(batch.values[0]))


def witness_seed(scenario, spec, config: EnvConfig, policy, m_rollouts: int, base_seed: int) -> int:
    """Seed of the rollout attaining the minimum in :func:`policy_robustness`."""
    batch = robustness_batch(scenario, spec, config.as_array(), policy, m_rollouts, base_seed)
    return batch.seeds[int(batch.witness[0])]


def violating_steps(spec: SafetySpec, traj: Trajectory, config: EnvConfig) -> np.ndarray:
    """Boolean mask of trajectory steps with a negative avoid margin."""
    disks = spec.hazard_disks(config.as_array())
    return step_margins(spec, np.asarray(traj.states)[None, :], disks)[0] < 0
