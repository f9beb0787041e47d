"""``cegrl`` command line: run, falsify, diagnose, verify.

Exit codes: 0 certified (or no counterexample), 2 uncertified, 3
counterexamples found, 1 error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, load_scenario
from .errors import CegrlError, DimensionMismatch
from .falsifier import falsify
from .loop import run_loop, verify_sweep
from .policy import PolicyParams, initial_policy
from .runio import apply_overrides, diagnose, write_run

log = logging.getLogger("cegrl")

EXIT_OK, EXIT_ERROR, EXIT_UNCERTIFIED, EXIT_CE = 0, 1, 2, 3


def _setup_logging() -> None:
    level = os.environ.get("CEGRL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _manifest(args) -> dict:
    return {
        "scenario_file": str(args.config),
        "seed": args.seed,
        "budget": args.budget,
        "max_iters": args.max_iters,
        "version": __version__,
    }


def _load(args) -> RunConfig:
    return apply_overrides(load_scenario(args.config), _manifest(args))


def _out_dir(args, marker: str) -> Path:
    out = Path(args.out)
    if (out / marker).exists() and not args.force:
        raise FileExistsError(f"{out / marker} exists; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_policy(path, run: RunConfig) -> PolicyParams:
    policy = PolicyParams.load(path)
    if policy.n_states != run.scenario.n_states:
        raise DimensionMismatch(f"policy has {policy.n_states} states, scenario has {run.scenario.n_states}")
    return policy


def cmd_run(args) -> int:
    run = _load(args)
    out = _out_dir(args, "summary.json")
    policy = _load_policy(args.policy, run) if args.policy else initial_policy(run.scenario, run.lam)
    try:
        report = run_loop(run.scenario, run.spec, policy, run.loop)
    except Exception as exc:
        partial = getattr(exc, "loop_report", None)
        if partial is not None:
            write_run(out, run, partial, _manifest(args))
        raise
    write_run(out, run, report, _manifest(args))
    diag = diagnose(out)
    for w in diag["warnings"]:
        log.warning("%s", w)
    print(f"{run.scenario.name}: {report.terminated_reason} after {len(report.records)} iterations; certified={report.certified}")
    return EXIT_OK if report.certified else EXIT_UNCERTIFIED


def cmd_falsify(args) -> int:
    run = _load(args)
    if not args.policy:
        raise CegrlError("falsify needs --policy")
    policy = _load_policy(args.policy, run)
    out = _out_dir(args, "falsification.json")
    cfg = run.loop.falsifier_for(1)
    report = falsify(run.scenario, run.spec, policy, cfg)
    data = report.to_dict()
    data["seed"] = cfg.seed
    data["rollout_seed"] = cfg.rollout_seed
    (out / "falsification.json").write_text(json.dumps(data, indent=1) + "\n")
    n = len(report.counterexamples)
    print(f"{run.scenario.name}: {n} counterexamples; best g = {report.best_g!r}")
    return EXIT_CE if n else EXIT_OK


def cmd_verify(args) -> int:
    run = _load(args)
    policy = _load_policy(args.policy, run) if args.policy else initial_policy(run.scenario, run.lam)
    out = _out_dir(args, "verify.json")
    cfg = run.loop
    res = verify_sweep(
        run.scenario, run.spec, policy, cfg.verify_samples, cfg.sweep_seed, cfg.falsifier.m_rollouts, cfg.rollout_seed
    )
    data = {
        "min_g": res.min_g,
        "argmin_config": list(res.argmin_config.values),
        "n_evaluated": res.n_evaluated,
        "certified": res.certified,
        "certificate": "sampling",
    }
    (out / "verify.json").write_text(json.dumps(data, indent=1) + "\n")
    print(f"{run.scenario.name}: min g = {res.min_g!r} over {res.n_evaluated} configs; certified={res.certified}")
    return EXIT_OK if res.certified else EXIT_UNCERTIFIED


def cmd_diagnose(args) -> int:
    diag = diagnose(args.run_dir)
    for w in diag["warnings"]:
        log.warning("%s", w)
    lip = diag.get("lipschitz")
    if lip:
        print(f"lipschitz: bound={lip['bound']!r} g_final={lip['g_final']!r} holds={lip['holds']}")
    dk = diag.get("delta_k")
    if dk:
        print(f"delta_k: tail_ratio={dk['tail_ratio']!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cegrl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"cegrl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, policy_required=False):
        sp.add_argument("--config", required=True, help="scenario TOML file or bundled scenario name")
        sp.add_argument("--seed", type=int, default=None, help="master seed (overrides the file)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
        sp.add_argument("--budget", type=int, default=None, help="falsifier evaluations per search")
        sp.add_argument("--max-iters", dest="max_iters", type=int, default=None, help="outer iteration cap")
        sp.add_argument("--policy", required=policy_required, default=None, help="policy_<k>.json snapshot")

    common(sub.add_parser("run", help="falsify/refine until certified or out of budget"))
    common(sub.add_parser("falsify", help="search for counterexamples of one policy"), policy_required=True)
    common(sub.add_parser("verify", help="dense sampling sweep of one policy"))
    d = sub.add_parser("diagnose", help="recompute diagnostics for a run directory")
    d.add_argument("run_dir")
    return p


COMMANDS = {"run": cmd_run, "falsify": cmd_falsify, "verify": cmd_verify, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (CegrlError, OSError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
