"""Bayesian-optimization falsification over the configuration box.

The search minimizes a black-box ``g`` over a box: a scrambled Sobol design
seeds a GP surrogate (inputs mapped to the unit cube, targets standardized),
then each step scores a pool of uniform candidates by the acquisition and
evaluates the best one.  :func:`falsify` plugs in ``g(theta; e)`` and turns
every negative evaluation into a :class:`Counterexample` with its witness.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr
from scipy.stats import qmc

from . import gp
from .env import EnvConfig, Scenario, Trajectory, rollout
from .errors import BudgetTooSmall
from .robustness import SafetySpec, robustness_batch, violating_steps

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class FalsifierConfig:
    init_samples: int = 8
    budget: int = 30
    acq_candidates: int = 2048
    acq_kind: str = "ei"
    lcb_kappa: float = 2.0
    stop_on_first_ce: bool = False
    seed: int = 0
    m_rollouts: int = 8
    rollout_seed: int = 0
    refit_every: int = 5
    noise_variance: float = 1e-6
    polish_evals: int = 0

    def __post_init__(self):
        if self.init_samples < 2:
            raise ValueError("init_samples must be >= 2")
        if self.acq_candidates < 1:
            raise ValueError("acq_candidates must be >= 1")
        if self.acq_kind not in ("ei", "lcb"):
            raise ValueError("acq_kind must be 'ei' or 'lcb'")
        if self.m_rollouts < 1:
            raise ValueError("m_rollouts must be >= 1")
        if self.polish_evals < 0:
            raise ValueError("polish_evals must be >= 0")


@dataclass(frozen=True, eq=False)
class Counterexample:
    config: EnvConfig
    trajectory: Trajectory
    g_value: float
    iteration_found: int
    unsafe_steps: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.g_value < 0:
            raise ValueError("a counterexample must have g < 0")
        if self.unsafe_steps is None:
            object.__setattr__(self, "unsafe_steps", np.zeros(len(self.trajectory.states), dtype=bool))

    def to_dict(self) -> dict:
        t = self.trajectory
        return {
            "config": list(self.config.values),
            "g": self.g_value,
            "iteration_found": self.iteration_found,
            "seed": t.seed,
            "states": [int(s) for s in t.states],
            "actions": [int(a) for a in t.actions],
            "rewards": [float(r) for r in t.rewards],
            "unsafe_steps": [bool(b) for b in self.unsafe_steps],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Counterexample":
        traj = Trajectory(
            np.asarray(data["states"], dtype=np.int64),
            np.asarray(data["actions"], dtype=np.int64),
            np.asarray(data.get("rewards", [0.0] * len(data["actions"])), dtype=float),
            int(data["seed"]),
        )
        return cls(
            EnvConfig(tuple(data["config"])),
            traj,
            float(data["g"]),
            int(data["iteration_found"]),
            np.asarray(data.get("unsafe_steps", [False] * len(traj.states)), dtype=bool),
        )


@dataclass(eq=False)
class SearchResult:
    inputs: np.ndarray  # (n, d) in the original box
    values: np.ndarray  # (n,)
    model: gp.SurrogateModel | None = None

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.values))


@dataclass(eq=False)
class FalsificationReport:
    counterexamples: list[Counterexample]
    best_config: EnvConfig
    best_g: float
    history_x: np.ndarray
    history_g: np.ndarray
    model: gp.SurrogateModel | None = None

    @property
    def best(self) -> tuple[EnvConfig, float]:
        return self.best_config, self.best_g

    @property
    def history(self) -> list[tuple[EnvConfig, float]]:
        return [(EnvConfig(tuple(map(float, x))), float(g)) for x, g in zip(self.history_x, self.history_g)]

    def to_dict(self) -> dict:
        return {
            "best": {"config": list(self.best_config.values), "g": self.best_g},
            "history": [{"config": [float(v) for v in x], "g": float(g)} for x, g in zip(self.history_x, self.history_g)],
            "counterexamples": [ce.to_dict() for ce in self.counterexamples],
        }


def expected_improvement(mean, std, best_g):
    """EI for minimization; exact ``max(0, best_g - mean)`` where ``std < 1e-12``."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    gap = best_g - mean
    safe = std >= 1e-12
    s = np.where(safe, std, 1.0)
    z = gap / s
    ei = gap * ndtr(z) + s * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    return np.where(safe, np.maximum(ei, 0.0), np.maximum(gap, 0.0))


def acquisition_scores(model: gp.SurrogateModel, X, best_g: float, cfg: FalsifierConfig) -> np.ndarray:
    """Larger is more promising, for every row of ``X`` (unit-box coordinates)."""
    mean, var = model.predict_many(X)
    std = np.sqrt(var)
    if cfg.acq_kind == "ei":
        return expected_improvement(mean, std, best_g)
    return -(mean - cfg.lcb_kappa * std)


def acquisition(model: gp.SurrogateModel, x, best_g: float, cfg: FalsifierConfig) -> float:
    return float(acquisition_scores(model, np.asarray(x, dtype=float)[None, :], best_g, cfg)[0])


def _sobol(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return qmc.Sobol(d, scramble=True, seed=rng).random(n)


def sobol_configs(bounds, n: int, seed: int) -> np.ndarray:
    """``n`` scrambled Sobol points scaled into ``bounds``."""
    bounds = np.asarray(bounds, dtype=float)
    u = _sobol(bounds.shape[0], n, np.random.default_rng(seed))
    return _to_box(u, bounds)


def _to_box(u: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    lo, hi = bounds[:, 0], bounds[:, 1]
    return np.clip(lo + u * (hi - lo), lo, hi)


def _standardize(y: np.ndarray):
    mu = float(y.mean())
    sd = float(y.std())
    if not sd > 0:
        sd = 1.0
    return (y - mu) / sd, mu, sd


def bo_minimize(objective, bounds, cfg: FalsifierConfig, grid: list[gp.Kernel] | None = None) -> SearchResult:
    """Minimize ``objective`` (rows of configs -> values) over ``bounds``."""
    bounds = np.asarray(bounds, dtype=float)
    if cfg.budget < cfg.init_samples:
        raise BudgetTooSmall(f"budget {cfg.budget} < init_samples {cfg.init_samples}")
    d = bounds.shape[0]
    grid = grid or gp.default_grid(d, cfg.noise_variance)
    rng = np.random.default_rng(cfg.seed)

    U = _sobol(d, cfg.init_samples, rng)
    X = _to_box(U, bounds)
    g = np.asarray(objective(X), dtype=float)
    if cfg.stop_on_first_ce and (g < 0).any():
        return SearchResult(X, g)

    kernel, last_refit, model = None, 0, None
    while len(g) < cfg.budget:
        ys, _, _ = _standardize(g)
        if kernel is None or len(g) - last_refit >= cfg.refit_every:
            kernel = gp.fit_hyperparams(U, ys, grid)
            last_refit = len(g)
        model = gp.fit(kernel, U, ys)
        cand = rng.random((cfg.acq_candidates, d))
        scores = acquisition_scores(model, cand, float(ys.min()), cfg)
        u = cand[int(np.argmax(scores))]
        x = _to_box(u[None, :], bounds)
        gx = np.asarray(objective(x), dtype=float)
        U = np.vstack([U, u[None, :]])
        X = np.vstack([X, x])
        g = np.concatenate([g, gx])
        if cfg.stop_on_first_ce and gx[0] < 0:
            break
    ys, _, _ = _standardize(g)
    if kernel is not None:
        model = gp.fit(kernel, U, ys)
    return SearchResult(X, g, model)


def polish(objective, bounds, start, max_evals: int) -> SearchResult:
    """Bounded Nelder-Mead from ``start``; every evaluation is recorded."""
    bounds = np.asarray(bounds, dtype=float)
    xs, gs = [], []

    def f(x):
        x = np.clip(x, bounds[:, 0], bounds[:, 1])
        gx = float(np.asarray(objective(x[None, :]), dtype=float)[0])
        xs.append(x)
        gs.append(gx)
        return gx

    if max_evals > 0:
        opts = {"maxfev": max_evals, "xatol": 1e-12, "fatol": 1e-14}
        minimize(f, np.asarray(start, dtype=float), method="Nelder-Mead", bounds=bounds, options=opts)
    d = bounds.shape[0]
    return SearchResult(np.array(xs).reshape(-1, d)[:max_evals], np.array(gs)[:max_evals])


def random_search(objective, bounds, budget: int, seed: int) -> SearchResult:
    """Baseline: ``budget`` i.i.d. uniform points in the box."""
    bounds = np.asarray(bounds, dtype=float)
    rng = np.random.default_rng(seed)
    X = _to_box(rng.random((budget, bounds.shape[0])), bounds)
    return SearchResult(X, np.asarray(objective(X), dtype=float))


class PolicyObjective:
    """``g(theta; e)`` as a batch objective that remembers witness seeds."""

    def __init__(self, scenario: Scenario, spec: SafetySpec, policy, m_rollouts: int, base_seed: int):
        self.scenario = scenario
        self.spec = spec
        self.policy = policy
        self.m_rollouts = m_rollouts
        self.base_seed = base_seed
        self.witness_seeds: list[int] = []

    def __call__(self, X) -> np.ndarray:
        batch = robustness_batch(self.scenario, self.spec, X, self.policy, self.m_rollouts, self.base_seed)
        self.witness_seeds.extend(batch.seeds[int(w)] for w in batch.witness)
        return batch.values

    def counterexample(self, x, g_value: float, index: int, seed: int | None = None) -> Counterexample:
        config = EnvConfig(tuple(float(v) for v in x))
        seed = self.witness_seeds[index] if seed is None else seed
        traj = rollout(self.scenario, config, self.policy, seed)
        return Counterexample(config, traj, float(g_value), index, violating_steps(self.spec, traj, config))


def _report(objective: PolicyObjective, X: np.ndarray, g: np.ndarray, model=None) -> FalsificationReport:
    ces = [objective.counterexample(x, gv, i) for i, (x, gv) in enumerate(zip(X, g)) if gv < 0]
    b = int(np.argmin(g))
    return FalsificationReport(ces, EnvConfig(tuple(float(v) for v in X[b])), float(g[b]), X, g, model)


def falsify(scenario: Scenario, spec: SafetySpec, policy, cfg: FalsifierConfig) -> FalsificationReport:
    """Search for configurations with ``g(theta; e) < 0``."""
    objective = PolicyObjective(scenario, spec, policy, cfg.m_rollouts, cfg.rollout_seed)
    result = bo_minimize(objective, scenario.bounds_array, cfg)
    X, g = result.inputs, result.values
    if cfg.polish_evals and not (cfg.stop_on_first_ce and (g < 0).any()):
        extra = polish(objective, scenario.bounds_array, X[result.best_index], cfg.polish_evals)
        X, g = np.vstack([X, extra.inputs]), np.concatenate([g, extra.values])
    return _report(objective, X, g, result.model)


def evaluate_configs(scenario: Scenario, spec: SafetySpec, policy, configs, m_rollouts: int, rollout_seed: int) -> FalsificationReport:
    """Report for ``policy`` evaluated at fixed ``configs`` (no search)."""
    X = np.atleast_2d(np.asarray(configs, dtype=float))
    objective = PolicyObjective(scenario, spec, policy, m_rollouts, rollout_seed)
    return _report(objective, X, objective(X))


def merge_reports(first: FalsificationReport, second: FalsificationReport) -> FalsificationReport:
    """Concatenate two reports for the same policy; ties keep the earlier best."""
    X = np.vstack([first.history_x, second.history_x])
    g = np.concatenate([first.history_g, second.history_g])
    offset = first.history_g.size
    shifted = [
        Counterexample(ce.config, ce.trajectory, ce.g_value, ce.iteration_found + offset, ce.unsafe_steps)
        for ce in second.counterexamples
    ]
    b = int(np.argmin(g))
    return FalsificationReport(
        list(first.counterexamples) + shifted,
        EnvConfig(tuple(float(v) for v in X[b])),
        float(g[b]),
        X,
        g,
        first.model,
    )
