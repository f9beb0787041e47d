"""Empirical checks on a finished loop run.

Covers the robustness lower bound along the iterate chain, an empirical
Rademacher estimate over the recorded policies, the improvement trace
``Delta_k``, sensitivity of the return to the slip model, and an exact
brute-force optimum for tiny scenarios.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .env import N_ACTIONS, STAY, EnvConfig, Scenario, crn_uniforms, return_samples, seed_schedule, simulate
from .errors import DegenerateTrace, EnumerationTooLarge, InsufficientIterations, InvalidPerturbation
from .falsifier import sobol_configs
from .loop import LoopReport, derive_seed
from .policy import PolicyParams
from .robustness import SafetySpec, robustness_batch

HOLDS_TOL = 1e-9
ENUMERATION_CAP = 10_000_000
MAX_ENUM_STATES = 25


# --- robustness lower bound -------------------------------------------------
def lipschitz_bound(g_first: float, L_hat: float, C_irl: float, n: int) -> float:
    """``g_1 - L * C * (n - 1)``."""
    return g_first - L_hat * C_irl * (n - 1)


@dataclass(frozen=True)
class LipschitzReport:
    L_hat: float
    C_irl: float
    n: int
    bound: float
    g_final: float
    holds: bool

    @classmethod
    def build(cls, g_first: float, L_hat: float, C_irl: float, n: int, g_final: float) -> "LipschitzReport":
        bound = lipschitz_bound(g_first, L_hat, C_irl, n)
        return cls(L_hat, C_irl, n, bound, g_final, g_final >= bound - HOLDS_TOL)

    def to_dict(self) -> dict:
        return asdict(self)


def check_lipschitz_bound(report: LoopReport, probe_pairs: int = 32, seed: int = 0) -> LipschitzReport:
    """Empirical Lipschitz constant of ``g`` in the logits and the implied bound.

    ``L_hat`` is the largest ``|g(a) - g(b)| / ||a - b||`` at the run's final
    worst configuration over consecutive chain iterates and ``probe_pairs``
    random pairs ``(theta, theta + u)`` with ``||u|| <= C_irl``.
    """
    records = report.records
    n = sum(1 for r in records if r.accepted)
    if n < 2:
        raise InsufficientIterations(f"need at least 2 accepted iterations, got {n}")
    scenario, spec, cfg = report.scenario, report.spec, report.config
    C = max(r.step_norm for r in records)
    e = report.worst_config.as_array()
    m = cfg.falsifier.m_rollouts

    def g(logits) -> float:
        policy = PolicyParams(logits, scenario.name)
        return float(robustness_batch(scenario, spec, e, policy, m, cfg.rollout_seed).values[0])

    chain = [p.logits for p in report.chain_policies]
    pairs = list(zip(chain, chain[1:]))
    rng = np.random.default_rng(seed)
    if C > 0:
        for _ in range(probe_pairs):
            base = chain[int(rng.integers(len(chain)))]
            u = rng.standard_normal(base.shape)
            u *= C * (1.0 - rng.random()) / np.linalg.norm(u)
            pairs.append((base, base + u))
    L_hat = 0.0
    for a, b in pairs:
        dist = float(np.linalg.norm(b - a))
        if dist > 0:
            L_hat = max(L_hat, abs(g(b) - g(a)) / dist)
    g_final = report.final_sweep.min_g if report.final_sweep is not None else records[-1].g_min_estimate
    return LipschitzReport.build(records[0].g_min_estimate, L_hat, C, n, g_final)


# --- Rademacher complexity --------------------------------------------------
def rademacher_samples(J_values, n_sigma_draws: int, seed: int) -> np.ndarray:
    """``sup_row (1/N) sum_i sigma_i J[row, i]`` for each of ``n_sigma_draws`` sign draws."""
    J = np.atleast_2d(np.asarray(J_values, dtype=float))
    if J.size == 0:
        raise ValueError("J_values must be nonempty")
    if n_sigma_draws < 1:
        raise ValueError("n_sigma_draws must be >= 1")
    rng = np.random.default_rng(seed)
    sigma = rng.integers(0, 2, size=(n_sigma_draws, J.shape[1])) * 2.0 - 1.0
    return (sigma @ J.T).max(axis=1) / J.shape[1]


def estimate_rademacher(J_values, n_sigma_draws: int, seed: int) -> float:
    """Monte-Carlo empirical Rademacher average of the candidate rows."""
    return float(rademacher_samples(J_values, n_sigma_draws, seed).mean())


def rademacher_bound(K: int, rad_hat: float, delta: float, N: int) -> float:
    return 2.0 * K * rad_hat + math.sqrt(8.0 * K * math.log(1.0 / delta) / N)


@dataclass(frozen=True)
class RademacherReport:
    N: int
    K: int
    rad_hat: float
    delta: float
    bound: float
    epsilon_hat: float

    def to_dict(self) -> dict:
        return asdict(self)


def sample_returns(scenario: Scenario, policy, configs: np.ndarray, seeds: Sequence[int]) -> np.ndarray:
    """Return of one rollout per ``(configs[i], seeds[i])`` pair."""
    configs = np.atleast_2d(configs)
    seeds = list(seeds)
    slips = scenario.slip(configs)
    uniforms = crn_uniforms(scenario.horizon, seeds)
    out = np.empty(len(seeds))
    for slip in np.unique(slips):
        idx = np.flatnonzero(slips == slip)
        out[idx] = simulate(scenario, policy, np.array([slip]), uniforms[idx])[3][0]
    return out


def rademacher_report(
    report: LoopReport, N: int = 200, delta: float = 0.05, n_sigma_draws: int = 10_000, seed: int = 0
) -> RademacherReport:
    """Rademacher estimate over the run's chain policies on ``N`` environment samples.

    Sample ``i`` is a Sobol configuration paired with one seeded rollout.
    ``epsilon_hat`` is the final policy's mean-return gap between that set
    and a disjoint holdout set of the same size.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    scenario = report.scenario
    bounds = scenario.bounds_array
    train_x = sobol_configs(bounds, N, derive_seed(seed, "rad", "train"))
    hold_x = sobol_configs(bounds, N, derive_seed(seed, "rad", "holdout"))
    train_s = seed_schedule(derive_seed(seed, "rad", "train-seeds"), N)
    hold_s = seed_schedule(derive_seed(seed, "rad", "holdout-seeds"), N)
    J = np.stack([sample_returns(scenario, p, train_x, train_s) for p in report.chain_policies])
    rad = estimate_rademacher(J, n_sigma_draws, derive_seed(seed, "rad", "sigma"))
    final = report.final_policy
    gap = abs(float(sample_returns(scenario, final, train_x, train_s).mean() - sample_returns(scenario, final, hold_x, hold_s).mean()))
    K = len(report.records)
    return RademacherReport(N, K, rad, delta, rademacher_bound(K, max(rad, 0.0), delta, N), gap)


# --- improvement trace ------------------------------------------------------
@dataclass(frozen=True)
class DeltaTrace:
    deltas: np.ndarray
    tail_ratio: float

    def to_dict(self) -> dict:
        return {"deltas": [float(d) for d in self.deltas], "tail_ratio": self.tail_ratio}


def delta_k_analysis(records) -> DeltaTrace:
    """Consecutive return differences and the tail-to-first ratio.

    Accepts iteration records or plain return estimates.
    """
    J = np.array([getattr(r, "J_estimate", r) for r in records], dtype=float)
    if J.size < 4:
        raise DegenerateTrace(f"need at least 4 records, got {J.size}")
    deltas = np.diff(J)
    tail = float(np.median(np.abs(deltas[-3:])))
    first = abs(float(deltas[0]))
    if first == 0.0:
        if tail != 0.0:
            raise DegenerateTrace("first improvement is zero but the tail is not")
        return DeltaTrace(deltas, 0.0)
    return DeltaTrace(deltas, tail / first)


# --- slip-model mismatch ----------------------------------------------------
def model_mismatch_experiment(
    scenario: Scenario, policy, perturbations: Sequence[float], n_rollouts: int, seed: int
) -> list[tuple[float, float]]:
    """``|J(slip_base + eps) - J(slip_base)|`` under common random numbers."""
    config = scenario.nominal_config()
    base_slip = float(scenario.slip(config.as_array())[0])
    for eps in perturbations:
        if not math.isfinite(eps) or not 0.0 <= base_slip + eps <= 1.0:
            raise InvalidPerturbation(f"perturbation {eps} moves the slip probability outside [0, 1]")
    base = float(return_samples(scenario, config, policy, n_rollouts, seed).mean())
    curve = []
    for eps in perturbations:
        shifted = replace(scenario, slip_base=scenario.slip_base + eps)
        J = float(return_samples(shifted, config, policy, n_rollouts, seed).mean())
        curve.append((float(eps), abs(J - base)))
    return curve


# --- brute-force optimum ----------------------------------------------------
def exact_returns(scenario: Scenario, config: EnvConfig, actions: np.ndarray) -> np.ndarray:
    """Exact expected return of deterministic policies, one per row of ``actions`` ``(n, S)``."""
    slip = float(scenario.slip(config.as_array())[0])
    P = scenario.transition_probs(slip)
    S = scenario.n_states
    n = actions.shape[0]
    rows = np.arange(S)
    Ppi = P[rows[None, :], actions]  # (n, S, S)
    r_step = np.full(S, scenario.step_cost)
    goal = scenario.goal_index
    # expected reward collected from s in one step
    expected = r_step[None, :] + np.zeros((n, S))
    if goal >= 0:
        expected = expected + scenario.goal_reward * Ppi[:, :, goal]
        expected[:, goal] = 0.0
    d = np.zeros((n, S))
    d[:, scenario.start_index] = 1.0
    total = np.zeros(n)
    for _ in range(scenario.horizon):
        total += (d * expected).sum(axis=1)
        d = np.einsum("ns,nst->nt", d, Ppi)
    return total


def oracle_j_star(
    scenario: Scenario,
    config: EnvConfig,
    spec: SafetySpec | None = None,
    m_rollouts: int = 8,
    base_seed: int = 0,
    chunk: int = 20_000,
) -> float:
    """Best exact return over deterministic stationary policies with ``g >= 0``.

    Safety is judged by ``g`` at ``config`` under the seed schedule
    ``base_seed .. base_seed + m_rollouts - 1``.  Returns ``-inf`` when no
    enumerated policy is safe.
    """
    S = scenario.n_states
    goal = scenario.goal_index
    free = [s for s in range(S) if s != goal]
    count = N_ACTIONS ** len(free)
    if S > MAX_ENUM_STATES or count > ENUMERATION_CAP:
        raise EnumerationTooLarge(f"{count} deterministic policies over {S} states exceeds the cap")
    spec = spec or SafetySpec.for_scenario(scenario)
    cands_J, cands_A = [], []
    product = itertools.product(range(N_ACTIONS), repeat=len(free))
    while True:
        block = np.array(list(itertools.islice(product, chunk)), dtype=np.int64).reshape(-1, len(free))
        if block.shape[0] == 0:
            break
        actions = np.full((block.shape[0], S), STAY, dtype=np.int64)
        actions[:, free] = block
        cands_J.append(exact_returns(scenario, config, actions))
        cands_A.append(actions)
    J = np.concatenate(cands_J)
    A = np.concatenate(cands_A)
    for i in np.argsort(-J, kind="stable"):
        g = robustness_batch(scenario, spec, config.as_array(), PolicyParams.deterministic(scenario, A[i]), m_rollouts, base_seed)
        if g.values[0] >= 0:
            return float(J[i])
    return -math.inf
