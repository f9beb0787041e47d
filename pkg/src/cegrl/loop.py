"""Outer falsify/refine loop and the sampling certificate."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .env import EnvConfig, Scenario, return_samples
from .falsifier import (
    Counterexample,
    FalsificationReport,
    FalsifierConfig,
    PolicyObjective,
    evaluate_configs,
    falsify,
    merge_reports,
    sobol_configs,
)
from .policy import PolicyParams, RewardTable
from .refiner import RefinerConfig, refine
from .robustness import SafetySpec, robustness_batch

log = logging.getLogger(__name__)

CERTIFICATE = "sampling"
# local search after each BO run inside the loop; exact minima keep gate ties exact
LOOP_POLISH_EVALS = 120


def derive_seed(seed: int, *keys) -> int:
    """Independent 63-bit seed for a named stream under ``seed``."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        words.append(k if isinstance(k, int) else sum(ord(c) << (8 * (i % 7)) for i, c in enumerate(k)))
    hi, lo = (int(w) for w in np.random.SeedSequence(words).generate_state(2, dtype=np.uint32))
    return ((hi << 32) | lo) & 0x7FFFFFFFFFFFFFFF


@dataclass(frozen=True)
class LoopConfig:
    max_outer_iters: int = 20
    falsifier: FalsifierConfig = field(default_factory=lambda: FalsifierConfig(polish_evals=LOOP_POLISH_EVALS))
    refiner: RefinerConfig = field(default_factory=RefinerConfig)
    verify_samples: int = 10_000
    monotone_gate: bool = True
    gate_tol: float = 1e-9
    seed: int = 0
    j_rollouts: int = 200
    replay: int = 5
    step_decay: float = 1.0

    def __post_init__(self):
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.verify_samples < 1:
            raise ValueError("verify_samples must be >= 1")
        if not 0 < self.step_decay <= 1:
            raise ValueError("step_decay must lie in (0, 1]")

    @property
    def rollout_seed(self) -> int:
        return derive_seed(self.seed, "crn")

    @property
    def j_seed(self) -> int:
        return derive_seed(self.seed, "return")

    @property
    def sweep_seed(self) -> int:
        return derive_seed(self.seed, "sweep")

    def falsifier_for(self, k: int, attempt: int = 0) -> FalsifierConfig:
        return replace(
            self.falsifier,
            seed=derive_seed(self.seed, "bo", k, attempt),
            rollout_seed=self.rollout_seed,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("falsifier", "refiner"):
            d[key] = dict(d[key])
        if math.isinf(d["refiner"]["step_cap"]):
            d["refiner"]["step_cap"] = "inf"
        return d


@dataclass
class IterationRecord:
    index: int
    g_min_estimate: float
    step_norm: float
    J_estimate: float
    delta_k: float
    n_counterexamples: int
    accepted: bool
    J_stderr: float = 0.0


@dataclass(eq=False)
class VerifyResult:
    min_g: float
    argmin_config: EnvConfig
    n_evaluated: int

    @property
    def certified(self) -> bool:
        return self.min_g >= 0


@dataclass(eq=False)
class LoopReport:
    final_policy: PolicyParams
    records: list[IterationRecord]
    terminated_reason: str
    certified: bool
    policies: list[PolicyParams]
    counterexamples: list[Counterexample]
    final_sweep: VerifyResult | None
    reward: RewardTable
    accepted_chain: list[int]
    seeds: dict
    falsification_reports: list[FalsificationReport] = field(default_factory=list)
    error: str | None = None
    scenario: Scenario | None = None
    spec: SafetySpec | None = None
    config: LoopConfig | None = None
    worst_config: EnvConfig | None = None

    @property
    def chain_policies(self) -> list[PolicyParams]:
        return [self.policies[k] for k in self.accepted_chain]


def verify_sweep(
    scenario: Scenario,
    spec: SafetySpec,
    policy: PolicyParams,
    n_samples: int,
    seed: int,
    m_rollouts: int,
    rollout_seed: int,
    extra_configs=(),
) -> VerifyResult:
    """Exact minimum of ``g`` over a Sobol set plus ``extra_configs``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    X = sobol_configs(scenario.bounds_array, n_samples, seed)
    extra = [c.as_array() if isinstance(c, EnvConfig) else np.asarray(c, dtype=float) for c in extra_configs]
    if extra:
        X = np.vstack([X, np.stack(extra)])
    g = robustness_batch(scenario, spec, X, policy, m_rollouts, rollout_seed).values
    i = int(np.argmin(g))
    return VerifyResult(float(g[i]), EnvConfig(tuple(float(v) for v in X[i])), len(g))


def regret_trace(records, J_star: float) -> np.ndarray:
    if not math.isfinite(J_star):
        raise ValueError("J_star must be finite")
    return np.array([J_star - r.J_estimate for r in records])


def _estimate_return(scenario, policy, cfg: LoopConfig) -> tuple[float, float]:
    samples = return_samples(scenario, scenario.nominal_config(), policy, cfg.j_rollouts, cfg.j_seed)
    se = float(samples.std(ddof=1) / math.sqrt(len(samples))) if len(samples) > 1 else 0.0
    return float(samples.mean()), se


def run_loop(scenario: Scenario, spec: SafetySpec, initial_policy: PolicyParams, cfg: LoopConfig) -> LoopReport:
    """Alternate falsification and refinement until a sweep certifies ``g >= 0``."""
    policy = initial_policy
    reward = RewardTable.for_scenario(scenario)
    refiner_cfg = replace(cfg.refiner, seed=derive_seed(cfg.seed, "contrast"))
    m = cfg.falsifier.m_rollouts
    records: list[IterationRecord] = []
    policies: list[PolicyParams] = []
    all_ces: list[Counterexample] = []
    recent: list[Counterexample] = []
    chain = [0]
    reports: list[FalsificationReport] = []
    pending: FalsificationReport | None = None
    sweep: VerifyResult | None = None
    reason, certified = "budget", False
    seeds = {
        "seed": cfg.seed,
        "rollout_seed": cfg.rollout_seed,
        "return_seed": cfg.j_seed,
        "sweep_seed": cfg.sweep_seed,
        "contrast_seed": refiner_cfg.seed,
    }
    report_kwargs = dict(seeds=seeds, scenario=scenario, spec=spec, config=cfg)

    def build(error=None):
        worst = sweep.argmin_config if sweep is not None else (reports[-1].best_config if reports else None)
        return LoopReport(
            policy, records, reason, certified, policies, all_ces, sweep, reward, chain,
            falsification_reports=reports, error=error, worst_config=worst, **report_kwargs,
        )

    try:
        for k in range(1, cfg.max_outer_iters + 1):
            policies.append(policy)
            report = pending if pending is not None else falsify(scenario, spec, policy, cfg.falsifier_for(k))
            pending = None
            reports.append(report)
            J, J_se = _estimate_return(scenario, policy, cfg)
            ces = list(report.counterexamples)
            g_min = report.best_g
            if not ces:
                prior = [ce.config for ce in all_ces]
                sweep = verify_sweep(
                    scenario, spec, policy, cfg.verify_samples, cfg.sweep_seed, m, cfg.rollout_seed, prior
                )
                if sweep.certified:
                    records.append(IterationRecord(k, g_min, 0.0, J, math.nan, 0, True, J_se))
                    reason, certified = "certified", True
                    log.info("iteration %d: certified, sweep min g = %.4g", k, sweep.min_g)
                    break
                objective = PolicyObjective(scenario, spec, policy, m, cfg.rollout_seed)
                objective(sweep.argmin_config.as_array())
                ces = [objective.counterexample(sweep.argmin_config.values, sweep.min_g, report.history_g.size)]
            all_ces.extend(ces)
            batch = ces + [ce for ce in recent if ce not in ces][: cfg.replay]
            result = refine(policy, reward, batch, scenario, spec, refiner_cfg)
            reward = result.reward
            recent = (ces + recent)[: cfg.replay]
            accepted = True
            if cfg.monotone_gate:
                # the proposal is also scored where the current policy was searched
                probe = falsify(scenario, spec, result.new_policy, cfg.falsifier_for(k + 1))
                probe = merge_reports(
                    probe,
                    evaluate_configs(scenario, spec, result.new_policy, report.history_x, m, cfg.rollout_seed),
                )
                accepted = probe.best_g >= g_min - cfg.gate_tol
                if accepted:
                    pending = probe
            shrink = cfg.step_decay if accepted else cfg.step_decay / 2.0
            refiner_cfg = replace(refiner_cfg, step_cap=refiner_cfg.step_cap * shrink)
            records.append(
                IterationRecord(k, g_min, result.step_norm, J, math.nan, len(ces), accepted, J_se)
            )
            log.info(
                "iteration %d: g_min=%.4g n_ce=%d step=%.4g accepted=%s J=%.4f",
                k, g_min, len(ces), result.step_norm, accepted, J,
            )
            if accepted:
                policy = result.new_policy
                chain.append(k)  # index into policies of the next iterate
    except Exception as exc:
        log.exception("loop failed")
        report = build(error=f"{type(exc).__name__}: {exc}")
        exc.loop_report = report
        raise

    for a, b in zip(records, records[1:]):
        a.delta_k = b.J_estimate - a.J_estimate
    if not certified and records:
        if records[-1].accepted and records[-1].n_counterexamples:
            policies.append(policy)
            J, _ = _estimate_return(scenario, policy, cfg)
            records[-1].delta_k = J - records[-1].J_estimate
    chain = [c for c in chain if c < len(policies)]
    return build()
