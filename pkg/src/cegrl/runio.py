"""Run-directory layout: writers, readers and the diagnostics bundle.

A run directory holds::

    config.toml            copy of the configuration that was run
    iterations.csv         one row per outer iteration
    counterexamples.jsonl  one JSON object per counterexample
    policy_<k>.json        the policy evaluated at iteration k
    summary.json           outcome, seeds, manifest and diagnostics
    diagnostics.json       the diagnostics bundle on its own
    plots/*.csv            flat traces for plotting
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import replace
from pathlib import Path


from . import __version__
from .config import RunConfig, parse_config
from .diagnostics import (
    check_lipschitz_bound,
    delta_k_analysis,
    model_mismatch_experiment,
    oracle_j_star,
    rademacher_report,
)
from .env import EnvConfig
from .errors import CegrlError, IncompleteRun
from .falsifier import Counterexample
from .loop import CERTIFICATE, IterationRecord, LoopReport, VerifyResult
from .policy import PolicyParams, RewardTable

log = logging.getLogger(__name__)

CSV_VERSION = 1
CSV_COLUMNS = ("k", "g_min", "step_norm", "J", "delta_k", "n_ce", "accepted")
MISMATCH_EPS = (0.0, 0.01, 0.02, 0.05)
MISMATCH_ROLLOUTS = 2000


def _num(x: float) -> str:
    return repr(float(x))


def iterations_csv(records) -> str:
    buf = io.StringIO()
    buf.write(f"# cegrl iterations v{CSV_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([
            r.index, _num(r.g_min_estimate), _num(r.step_norm), _num(r.J_estimate),
            _num(r.delta_k), r.n_counterexamples, "true" if r.accepted else "false",
        ])
    return buf.getvalue()


def read_iterations_csv(path) -> list[IterationRecord]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    return [
        IterationRecord(
            int(r["k"]), float(r["g_min"]), float(r["step_norm"]), float(r["J"]),
            float(r["delta_k"]), int(r["n_ce"]), r["accepted"] == "true",
        )
        for r in rows
    ]


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=1, allow_nan=True) + "\n")


def _sweep_dict(sweep: VerifyResult | None):
    if sweep is None:
        return None
    return {
        "min_g": sweep.min_g,
        "argmin_config": list(sweep.argmin_config.values),
        "n_evaluated": sweep.n_evaluated,
        "certified": sweep.certified,
    }


def write_run(out: Path, run: RunConfig, report: LoopReport, manifest: dict) -> None:
    """Write every artifact of ``report`` except the diagnostics."""
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(run.source)
    (out / "iterations.csv").write_text(iterations_csv(report.records))
    with open(out / "counterexamples.jsonl", "w") as fh:
        for ce in report.counterexamples:
            fh.write(json.dumps(ce.to_dict()) + "\n")
    for k, policy in enumerate(report.policies, start=1):
        policy.save(out / f"policy_{k}.json")
    worst = report.worst_config
    summary = {
        "version": __version__,
        "scenario": run.scenario.name,
        "certified": report.certified,
        "certificate": CERTIFICATE,
        "terminated_reason": report.terminated_reason,
        "n_iterations": len(report.records),
        "final_sweep": _sweep_dict(report.final_sweep),
        "worst_config": None if worst is None else list(worst.values),
        "chain": [k + 1 for k in report.accepted_chain],
        "final_policy": f"policy_{len(report.policies)}.json" if report.policies else None,
        "J_stderr": [r.J_stderr for r in report.records],
        "reward": report.reward.to_dict(),
        "seeds": report.seeds,
        "loop_config": report.config.to_dict() if report.config else None,
        "manifest": manifest,
        "error": report.error,
        "diagnostics": None,
    }
    _dump(out / "summary.json", summary)


REQUIRED_FILES = ("config.toml", "iterations.csv", "counterexamples.jsonl", "summary.json")


def load_run(run_dir) -> tuple[RunConfig, LoopReport, dict]:
    """Rebuild a :class:`LoopReport` from a run directory."""
    run_dir = Path(run_dir)
    missing = [f for f in REQUIRED_FILES if not (run_dir / f).exists()]
    if missing:
        raise IncompleteRun(missing)
    summary = json.loads((run_dir / "summary.json").read_text())
    n_policies = max(summary.get("chain") or [0])
    if summary.get("final_policy"):
        n_policies = max(n_policies, int(summary["final_policy"][len("policy_"):-len(".json")]))
    missing = [f"policy_{k}.json" for k in range(1, n_policies + 1) if not (run_dir / f"policy_{k}.json").exists()]
    if missing:
        raise IncompleteRun(missing)
    run = apply_overrides(parse_config((run_dir / "config.toml").read_text(), str(run_dir / "config.toml")), summary["manifest"])
    records = read_iterations_csv(run_dir / "iterations.csv")
    for r, se in zip(records, summary.get("J_stderr", [])):
        r.J_stderr = float(se)
    policies = [PolicyParams.load(run_dir / f"policy_{k}.json") for k in range(1, n_policies + 1)]
    ces = [Counterexample.from_dict(json.loads(ln)) for ln in (run_dir / "counterexamples.jsonl").read_text().splitlines() if ln]
    sweep = None
    if summary.get("final_sweep"):
        s = summary["final_sweep"]
        sweep = VerifyResult(float(s["min_g"]), EnvConfig(tuple(s["argmin_config"])), int(s["n_evaluated"]))
    report = LoopReport(
        final_policy=policies[-1] if policies else None,
        records=records,
        terminated_reason=summary["terminated_reason"],
        certified=bool(summary["certified"]),
        policies=policies,
        counterexamples=ces,
        final_sweep=sweep,
        reward=RewardTable.from_dict(summary["reward"]),
        accepted_chain=[k - 1 for k in summary.get("chain", [])],
        seeds=summary.get("seeds", {}),
        error=summary.get("error"),
        scenario=run.scenario,
        spec=run.spec,
        config=run.loop,
        worst_config=EnvConfig(tuple(summary["worst_config"])) if summary.get("worst_config") else None,
    )
    return run, report, summary


def apply_overrides(run: RunConfig, manifest: dict) -> RunConfig:
    """Fold CLI overrides (seed, budget, max_iters) into the loop configuration."""
    loop = run.loop
    if manifest.get("seed") is not None:
        loop = replace(loop, seed=int(manifest["seed"]))
    if manifest.get("budget") is not None:
        loop = replace(loop, falsifier=replace(loop.falsifier, budget=int(manifest["budget"])))
    if manifest.get("max_iters") is not None:
        loop = replace(loop, max_outer_iters=int(manifest["max_iters"]))
    return RunConfig(run.scenario, run.spec, loop, run.source)


def _attempt(fn, warnings: list, name: str):
    try:
        return fn()
    except CegrlError as exc:
        warnings.append(f"{name}: {type(exc).__name__}: {exc}")
        return None


def _gate_violations(records, tol: float) -> list[int]:
    return [
        a.index for a, b in zip(records, records[1:])
        if a.accepted and a.n_counterexamples and b.g_min_estimate < a.g_min_estimate - tol
    ]


def compute_diagnostics(run: RunConfig, report: LoopReport) -> dict:
    """Every diagnostic that applies to ``report``; failures become warnings."""
    warnings: list[str] = []
    scenario = run.scenario
    out: dict = {"warnings": warnings}
    lip = _attempt(lambda: check_lipschitz_bound(report, seed=report.config.seed), warnings, "lipschitz")
    out["lipschitz"] = None if lip is None else lip.to_dict()
    dk = _attempt(lambda: delta_k_analysis(report.records), warnings, "delta_k")
    out["delta_k"] = None if dk is None else dk.to_dict()
    rad = _attempt(lambda: rademacher_report(report, seed=report.config.seed) if report.chain_policies else None, warnings, "rademacher")
    out["rademacher"] = None if rad is None else rad.to_dict()
    base_slip = float(scenario.slip(scenario.nominal_config().as_array())[0])
    eps = [e for e in MISMATCH_EPS if base_slip + e <= 1.0]
    mm = _attempt(
        lambda: model_mismatch_experiment(scenario, report.final_policy, eps, MISMATCH_ROLLOUTS, report.seeds.get("return_seed", 0)),
        warnings, "model_mismatch",
    ) if report.final_policy is not None else None
    out["model_mismatch"] = None if mm is None else [{"eps": e, "delta_J": d} for e, d in mm]
    cfg = report.config
    j_star = _attempt(
        lambda: oracle_j_star(scenario, scenario.nominal_config(), run.spec, cfg.falsifier.m_rollouts, cfg.rollout_seed),
        warnings, "j_star",
    )
    out["J_star"] = j_star
    if j_star is not None and math.isfinite(j_star):
        out["regret"] = [j_star - r.J_estimate for r in report.records]
    else:
        out["regret"] = None
    out["gate_violations"] = _gate_violations(report.records, cfg.gate_tol) if cfg.monotone_gate else []
    return out


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    buf.write(f"# cegrl {path.stem} v{CSV_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) if isinstance(v, float) else v for v in row])
    path.write_text(buf.getvalue())


def write_diagnostics(run_dir, diag: dict, report: LoopReport) -> None:
    run_dir = Path(run_dir)
    plots = run_dir / "plots"
    plots.mkdir(exist_ok=True)
    recs = report.records
    regret = diag.get("regret")
    _write_csv(plots / "regret.csv", ("k", "regret"),
               [(r.index, regret[i] if regret else math.nan) for i, r in enumerate(recs)])
    _write_csv(plots / "delta_k.csv", ("k", "delta_k"), [(r.index, r.delta_k) for r in recs])
    _write_csv(plots / "mismatch.csv", ("eps", "delta_J"),
               [(float(p["eps"]), float(p["delta_J"])) for p in diag.get("model_mismatch") or []])
    _write_csv(plots / "g_min.csv", ("k", "g_min", "accepted"),
               [(r.index, r.g_min_estimate, "true" if r.accepted else "false") for r in recs])
    _dump(run_dir / "diagnostics.json", diag)
    summary_path = run_dir / "summary.json"
    summary = json.loads(summary_path.read_text())
    summary["diagnostics"] = diag
    _dump(summary_path, summary)


def diagnose(run_dir) -> dict:
    run, report, _ = load_run(run_dir)
    diag = compute_diagnostics(run, report)
    write_diagnostics(run_dir, diag, report)
    return diag
