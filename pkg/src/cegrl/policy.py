"""Tabular softmax policies and the entropy-regularized planner."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import N_ACTIONS, EnvConfig, Scenario
from .errors import DimensionMismatch, NumericalOverflow

PENALTY_FLOOR = -10.0


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def logsumexp_rows(x: np.ndarray) -> np.ndarray:
    if np.isnan(x).any():
        raise NumericalOverflow("NaN entering log-sum-exp")
    m = x.max(axis=-1)
    if not np.isfinite(m).all():
        raise NumericalOverflow("non-finite row maximum in log-sum-exp")
    return m + np.log(np.exp(x - m[..., None]).sum(axis=-1))


@dataclass(frozen=True, eq=False)
class PolicyParams:
    """Logit table ``(S, 5)`` bound to a scenario by name."""

    logits: np.ndarray
    scenario_id: str = ""

    def __post_init__(self):
        arr = np.array(self.logits, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != N_ACTIONS:
            raise DimensionMismatch(f"logits must have shape (S, {N_ACTIONS}), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("policy logits must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "logits", arr)

    @property
    def n_states(self) -> int:
        return self.logits.shape[0]

    def probabilities(self) -> np.ndarray:
        return softmax_rows(self.logits)

    def flat(self) -> np.ndarray:
        return self.logits.reshape(-1)

    def normalized(self) -> "PolicyParams":
        """Same distribution with each row shifted so its maximum is 0."""
        return PolicyParams(self.logits - self.logits.max(axis=1, keepdims=True), self.scenario_id)

    def distance(self, other: "PolicyParams") -> float:
        return float(np.linalg.norm(self.logits - other.logits))

    @classmethod
    def uniform(cls, scenario: Scenario) -> "PolicyParams":
        return cls(np.zeros((scenario.n_states, N_ACTIONS)), scenario.name)

    @classmethod
    def deterministic(cls, scenario: Scenario, actions, scale: float = 1e6) -> "PolicyParams":
        """Point-mass policy; ``actions`` is a single action or one per state."""
        acts = np.broadcast_to(np.asarray(actions, dtype=int), (scenario.n_states,))
        logits = np.full((scenario.n_states, N_ACTIONS), -scale)
        logits[np.arange(scenario.n_states), acts] = 0.0
        return cls(logits, scenario.name)

    # serialization: one row of logits per state index
    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "n_states": self.n_states,
            "n_actions": N_ACTIONS,
            "logits": {str(s): [float(v) for v in row] for s, row in enumerate(self.logits)},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyParams":
        n = int(data["n_states"])
        rows = [data["logits"][str(s)] for s in range(n)]
        return cls(np.asarray(rows, dtype=float), data.get("scenario_id", ""))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "PolicyParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class RewardTable:
    """Per-state reward split into the task part and a learned penalty (<= 0)."""

    task: np.ndarray
    penalty: np.ndarray = field(default=None)

    def __post_init__(self):
        task = np.array(self.task, dtype=float)
        penalty = np.zeros_like(task) if self.penalty is None else np.array(self.penalty, dtype=float)
        if task.shape != penalty.shape or task.ndim != 1:
            raise DimensionMismatch("task and penalty must be vectors of equal length")
        if not (np.isfinite(task).all() and np.isfinite(penalty).all()):
            raise ValueError("reward entries must be finite")
        if (penalty > 0).any():
            raise ValueError("penalty component must be <= 0")
        task.setflags(write=False)
        penalty.setflags(write=False)
        object.__setattr__(self, "task", task)
        object.__setattr__(self, "penalty", penalty)

    @property
    def values(self) -> np.ndarray:
        return self.task + self.penalty

    @classmethod
    def for_scenario(cls, scenario: Scenario) -> "RewardTable":
        return cls(scenario.task_rewards())

    def to_dict(self) -> dict:
        return {"task": [float(v) for v in self.task], "penalty": [float(v) for v in self.penalty]}

    @classmethod
    def from_dict(cls, data: dict) -> "RewardTable":
        return cls(np.asarray(data["task"], dtype=float), np.asarray(data["penalty"], dtype=float))


def action_distribution(policy: PolicyParams, state) -> np.ndarray:
    """Softmax of the logit row of state index ``state``."""
    row = policy.logits[int(state)]
    return softmax_rows(row[None, :])[0]


def row_entropy(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0, -probs * np.log(probs), 0.0)
    return terms.sum(axis=-1)


def policy_entropy(policy: PolicyParams, state_weights) -> float:
    w = np.asarray(state_weights, dtype=float)
    if w.shape != (policy.n_states,):
        raise DimensionMismatch("state_weights must have one entry per state")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("state_weights must sum to 1")
    return float(w @ row_entropy(policy.probabilities()))


@dataclass(frozen=True, eq=False)
class SoftVIResult:
    """Planner output.

    ``policy`` is the stationary table (the t=0 logits).  ``step_logits[t]``
    holds the exact time-indexed logits ``Q_t / lam`` and ``values[t]`` the
    soft values ``V_t``; ``values[T]`` is the terminal reward.
    """

    policy: PolicyParams
    values: np.ndarray
    step_logits: np.ndarray


def soft_value_iteration(
    scenario: Scenario,
    config: EnvConfig,
    reward: RewardTable,
    lam: float,
    tol: float = 1e-12,
    max_iters: int = 10_000,
    transition: np.ndarray | None = None,
) -> SoftVIResult:
    """Finite-horizon soft Bellman backup over ``scenario.horizon`` steps.

    ``V_T(s) = r(s)`` and ``V_t(s) = lam * log sum_a exp(Q_t(s, a) / lam)``
    with ``Q_t(s, a) = r(s) + E[V_{t+1}(s')]``.  The trajectory distribution
    of the time-indexed policy is proportional to ``exp(R(xi) / lam)`` under
    deterministic dynamics, ``R`` summing ``r`` over all ``T+1`` states.
    ``tol`` is unused by the exact finite-horizon recursion; ``max_iters``
    bounds the number of backups.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    r = reward.values
    if r.shape != (scenario.n_states,):
        raise DimensionMismatch("reward table does not match the scenario")
    if np.isnan(r).any():
        raise NumericalOverflow("NaN reward")
    T = scenario.horizon
    if T > max_iters:
        raise ValueError("horizon exceeds max_iters")
    if transition is None:
        slip = float(scenario.slip(config.as_array())[0])
        transition = scenario.transition_probs(slip)

    values = np.empty((T + 1, scenario.n_states))
    step_logits = np.empty((T, scenario.n_states, N_ACTIONS))
    values[T] = r
    for t in range(T - 1, -1, -1):
        q = r[:, None] + transition @ values[t + 1]
        z = q / lam
        v = logsumexp_rows(z)
        step_logits[t] = z - v[:, None]
        values[t] = lam * v
    policy = PolicyParams(step_logits[0] - step_logits[0].max(axis=1, keepdims=True), scenario.name)
    return SoftVIResult(policy, values, step_logits)


def initial_policy(scenario: Scenario, lam: float, config: EnvConfig | None = None) -> PolicyParams:
    """Task-optimal soft policy under the nominal (or given) configuration."""
    config = config or scenario.nominal_config()
    return soft_value_iteration(scenario, config, RewardTable.for_scenario(scenario), lam).policy
