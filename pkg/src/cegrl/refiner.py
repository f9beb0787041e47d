"""Counterexample-driven reward shaping and soft replanning.

An update contrasts where counterexamples went against where safe rollouts
of the current policy go, lowers the reward of states the counterexamples
over-visit, replans with the soft planner, and moves the logits toward the
plan by at most ``step_cap`` in Euclidean norm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .env import EnvConfig, Scenario, Trajectory, rollout, seed_schedule
from .errors import DimensionMismatch, EmptyCounterexampleSet
from .falsifier import Counterexample
from .policy import PENALTY_FLOOR, PolicyParams, RewardTable, soft_value_iteration
from .robustness import SafetySpec, trajectory_robustness


@dataclass(frozen=True)
class RefinerConfig:
    lam: float = 0.005
    penalty_rate: float = 5.0
    penalty_radius: float = 0.0
    step_cap: float = math.inf
    n_safe_rollouts: int = 16
    seed: int = 0
    plan_under: str = "counterexample"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.penalty_rate >= 0:
            raise ValueError("penalty_rate must be non-negative")
        if not self.penalty_radius >= 0:
            raise ValueError("penalty_radius must be non-negative")
        if not self.step_cap > 0:
            raise ValueError("step_cap must be positive")
        if self.plan_under not in ("counterexample", "nominal"):
            raise ValueError("plan_under must be 'counterexample' or 'nominal'")


@dataclass(frozen=True, eq=False)
class RefinementResult:
    new_policy: PolicyParams
    reward: RewardTable
    step_norm: float
    penalized_states: list[tuple[int, float]]
    proposal: PolicyParams | None = None


def visitation_counts(trajectories: Sequence[Trajectory], scenario: Scenario) -> np.ndarray:
    if not trajectories:
        raise ValueError("need at least one trajectory")
    counts = np.zeros(scenario.n_states)
    for traj in trajectories:
        np.add.at(counts, np.asarray(traj.states), 1.0)
    return counts


def _counterexample_frequencies(counterexamples: Sequence[Counterexample], n_states: int) -> np.ndarray:
    # Only steps inside a hazard count; a CE violating solely through the deadline counts every step.
    counts = np.zeros(n_states)
    total = 0
    for ce in counterexamples:
        states = np.asarray(ce.trajectory.states)
        mask = np.asarray(ce.unsafe_steps, dtype=bool)
        np.add.at(counts, states[mask] if mask.any() else states, 1.0)
        total += len(states)
    return counts / total


def spread_matrix(scenario: Scenario, radius: float) -> np.ndarray:
    """Linear-decay weights ``W[c, s]``: 1 at ``s`` itself, 0 beyond ``radius``."""
    c = scenario.centers
    d = np.hypot(c[:, None, 0] - c[None, :, 0], c[:, None, 1] - c[None, :, 1])
    return np.where(d <= radius, 1.0 - d / (radius + 1.0), 0.0)


def update_reward(
    reward: RewardTable,
    counterexamples: Sequence[Counterexample],
    safe_trajectories: Sequence[Trajectory],
    cfg: RefinerConfig,
    scenario: Scenario,
) -> tuple[RewardTable, list[tuple[int, float]]]:
    """Lower the penalty where counterexamples over-visit relative to safe rollouts."""
    if not counterexamples:
        raise EmptyCounterexampleSet("update_reward needs at least one counterexample")
    S = scenario.n_states
    if reward.task.shape != (S,):
        raise DimensionMismatch("reward table does not match the scenario")
    nu_ce = _counterexample_frequencies(counterexamples, S)
    if safe_trajectories:
        counts = visitation_counts(safe_trajectories, scenario)
        nu_safe = counts / counts.sum()
    else:
        nu_safe = np.zeros(S)
    delta = cfg.penalty_rate * np.maximum(nu_ce - nu_safe, 0.0)
    if cfg.penalty_radius > 0:
        W = spread_matrix(scenario, cfg.penalty_radius)
        g = scenario.goal_index
        if g >= 0:
            # the absorbing goal collects its reward every remaining step; never penalize it by proximity
            W[g] = 0.0
            W[g, g] = 1.0
        delta = W @ delta
    penalty = np.maximum(reward.penalty - delta, PENALTY_FLOOR)
    applied = reward.penalty - penalty
    changed = [(int(s), float(applied[s])) for s in np.flatnonzero(applied > 0)]
    return RewardTable(reward.task, penalty), changed


def safe_contrast_set(
    scenario: Scenario,
    spec: SafetySpec,
    policy: PolicyParams,
    counterexamples: Sequence[Counterexample],
    cfg: RefinerConfig,
) -> list[Trajectory]:
    """Nominal-config rollouts of ``policy`` that stay safe in every counterexample's config."""
    nominal = scenario.nominal_config()
    kept = []
    for seed in seed_schedule(cfg.seed, cfg.n_safe_rollouts):
        traj = rollout(scenario, nominal, policy, seed)
        if all(not trajectory_robustness(spec, traj, ce.config).violating for ce in counterexamples):
            kept.append(traj)
    return kept


def cap_step(current: PolicyParams, proposal: PolicyParams, step_cap: float) -> tuple[PolicyParams, float]:
    diff = proposal.logits - current.logits
    norm = float(np.linalg.norm(diff))
    if norm == 0.0 or norm <= step_cap:
        return PolicyParams(proposal.logits, current.scenario_id or proposal.scenario_id), norm
    scale = step_cap / norm
    new = current.logits + scale * diff
    return PolicyParams(new, current.scenario_id), float(np.linalg.norm(new - current.logits))


def refine(
    policy: PolicyParams,
    reward: RewardTable,
    counterexamples: Sequence[Counterexample],
    scenario: Scenario,
    spec: SafetySpec,
    cfg: RefinerConfig,
) -> RefinementResult:
    if not counterexamples:
        raise EmptyCounterexampleSet("refine needs at least one counterexample")
    if policy.logits.shape[0] != scenario.n_states:
        raise DimensionMismatch("policy does not match the scenario")
    safe = safe_contrast_set(scenario, spec, policy, counterexamples, cfg)
    new_reward, penalized = update_reward(reward, counterexamples, safe, cfg, scenario)
    if cfg.plan_under == "counterexample":
        plan_config: EnvConfig = min(counterexamples, key=lambda ce: ce.g_value).config
    else:
        plan_config = scenario.nominal_config()
    proposal = soft_value_iteration(scenario, plan_config, new_reward, cfg.lam).policy
    new_policy, step_norm = cap_step(policy, proposal, cfg.step_cap)
    return RefinementResult(new_policy, new_reward, step_norm, penalized, proposal)
