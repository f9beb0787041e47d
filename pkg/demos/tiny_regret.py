"""Regret against the exact optimum on scenarios small enough to enumerate.

``oracle_j_star`` scores every deterministic stationary policy with an
exact forward pass and keeps the best safe one.  An unsafe early policy can
beat that optimum, so its regret goes negative.  The final policy is soft,
so its return sits a little below the optimum.

    python3 demos/tiny_regret.py
"""
from cegrl.config import load_scenario
from cegrl.diagnostics import oracle_j_star
from cegrl.env import Coord, HazardTemplate, Scenario
from cegrl.loop import LoopConfig, regret_trace, run_loop
from cegrl.policy import initial_policy
from cegrl.robustness import SafetySpec


def hallway():
    # hazard may sit on cell 2 or 3 of a 1x5 hallway with one detour row
    sc = Scenario("hallway", 5, 2, (0, 0), (4, 0), ((2.5, 3.5),), horizon=10, slip_base=0.0,
                  hazards=(HazardTemplate(Coord(0), 0.5, 0.4),))
    return sc, SafetySpec.for_scenario(sc)


def main() -> None:
    tiny = load_scenario("tiny-2state")
    cases = [("tiny-2state", tiny.scenario, tiny.spec), ("hallway", *hallway())]
    for name, sc, spec in cases:
        cfg = LoopConfig(seed=3, verify_samples=2000)
        report = run_loop(sc, spec, initial_policy(sc, cfg.refiner.lam), cfg)
        worst = report.worst_config or sc.nominal_config()
        j_star = oracle_j_star(sc, worst, spec, cfg.falsifier.m_rollouts, cfg.rollout_seed)
        print(f"{name}: {report.terminated_reason} after {len(report.records)} iterations; J* = {j_star:.4f}")
        for r, regret in zip(report.records, regret_trace(report.records, j_star)):
            print(f"  k={r.index:2d}  J={r.J_estimate:.4f} +- {r.J_stderr:.4f}  regret={regret:.4f}")


if __name__ == "__main__":
    main()
