import math
from dataclasses import replace

import numpy as np
import pytest

from cegrl.config import load_scenario
from cegrl.env import Coord, HazardTemplate, Scenario
from cegrl.errors import NotPositiveDefinite
from cegrl.falsifier import FalsifierConfig, falsify
from cegrl.loop import IterationRecord, LoopConfig, derive_seed, regret_trace, run_loop, verify_sweep
from cegrl.policy import PolicyParams, initial_policy
from cegrl.refiner import RefinerConfig
from cegrl.robustness import ROBUSTNESS_CAP, SafetySpec, robustness_batch


def small_corridor():
    """5x3 grid with a hazard that can sit on the straight path."""
    sc = Scenario("small", 5, 3, (0, 1), (4, 1), ((1.5, 3.5), (1.0, 2.0)), horizon=12, slip_base=0.0,
                  hazards=(HazardTemplate(Coord(0), Coord(1), 0.4),))
    return sc, SafetySpec.for_scenario(sc)


def fast_cfg(**kw):
    base = dict(
        max_outer_iters=10,
        verify_samples=512,
        falsifier=FalsifierConfig(budget=16, m_rollouts=2, polish_evals=40),
        refiner=RefinerConfig(lam=0.005),
        j_rollouts=50,
        seed=1,
    )
    base.update(kw)
    return LoopConfig(**base)


@pytest.fixture(scope="module")
def small_run():
    sc, spec = small_corridor()
    cfg = fast_cfg()
    return sc, spec, cfg, run_loop(sc, spec, initial_policy(sc, 0.005), cfg)


def test_safe_policy_certifies_immediately():
    run = load_scenario("tiny-2state")
    rep = run_loop(run.scenario, run.spec, initial_policy(run.scenario, run.lam), replace(run.loop, verify_samples=256))
    assert rep.certified and rep.terminated_reason == "certified"
    assert len(rep.records) == 1 and rep.records[0].n_counterexamples == 0
    assert rep.records[0].step_norm == 0.0


def test_single_iteration_budget():
    sc, spec = small_corridor()
    rep = run_loop(sc, spec, initial_policy(sc, 0.005), fast_cfg(max_outer_iters=1))
    assert rep.terminated_reason == "budget" and not rep.certified
    assert len(rep.records) == 1 and rep.records[0].n_counterexamples > 0


def test_small_corridor_certifies(small_run):
    sc, spec, cfg, rep = small_run
    assert rep.certified
    assert rep.final_sweep.min_g >= 0
    # certificate re-check over the sweep set, historical CE configs included
    prior = [ce.config for ce in rep.counterexamples]
    again = verify_sweep(sc, spec, rep.final_policy, cfg.verify_samples, cfg.sweep_seed, 2, cfg.rollout_seed, prior)
    assert again.min_g == rep.final_sweep.min_g
    assert again.n_evaluated == cfg.verify_samples + len(prior)


def test_gate_invariant(small_run):
    *_, rep = small_run
    for a, b in zip(rep.records, rep.records[1:]):
        if a.accepted:
            assert b.g_min_estimate >= a.g_min_estimate - 1e-9
    assert all(r.step_norm <= rep.config.refiner.step_cap + 1e-9 for r in rep.records)


def test_recorded_g_values_replay(small_run):
    sc, spec, cfg, rep = small_run
    for k, fr in enumerate(rep.falsification_reports):
        g = robustness_batch(sc, spec, fr.history_x, rep.policies[k], 2, cfg.rollout_seed).values
        np.testing.assert_array_equal(g, fr.history_g)
        assert rep.records[k].g_min_estimate == fr.best_g


def test_delta_k_filled_retrospectively(small_run):
    *_, rep = small_run
    for a, b in zip(rep.records, rep.records[1:]):
        assert a.delta_k == b.J_estimate - a.J_estimate
    assert math.isnan(rep.records[-1].delta_k)


def test_reproducible():
    sc, spec = small_corridor()
    cfg = fast_cfg(max_outer_iters=3)
    a = run_loop(sc, spec, initial_policy(sc, 0.005), cfg)
    b = run_loop(sc, spec, initial_policy(sc, 0.005), cfg)
    assert [vars(r) for r in a.records] == [vars(r) for r in b.records]


def test_partial_report_on_error(monkeypatch):
    import cegrl.loop as loop_mod

    sc, spec = small_corridor()
    calls = {"n": 0}
    real = loop_mod.refine

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] == 2:
            raise NotPositiveDefinite("boom")
        return real(*args, **kw)

    monkeypatch.setattr(loop_mod, "refine", flaky)
    with pytest.raises(NotPositiveDefinite) as info:
        run_loop(sc, spec, initial_policy(sc, 0.005), fast_cfg())
    partial = info.value.loop_report
    assert len(partial.records) == 1
    assert partial.error.startswith("NotPositiveDefinite")


def test_rejection_keeps_policy_and_halves_cap(monkeypatch):
    import cegrl.loop as loop_mod

    sc, spec = small_corridor()
    seen = []
    real = loop_mod.refine

    def spy(policy, reward, ces, scenario, spec_, cfg):
        seen.append((policy, cfg.step_cap))
        return real(policy, reward, ces, scenario, spec_, cfg)

    monkeypatch.setattr(loop_mod, "refine", spy)
    cfg = fast_cfg(max_outer_iters=4, refiner=RefinerConfig(lam=0.005, step_cap=8.0))
    rep = run_loop(sc, spec, initial_policy(sc, 0.005), cfg)
    for i, r in enumerate(rep.records[:-1]):
        if i + 1 < len(seen):
            factor = 1.0 if r.accepted else 0.5
            assert seen[i + 1][1] == seen[i][1] * factor
            if not r.accepted:
                assert seen[i + 1][0] is seen[i][0]


def test_verify_sweep_examples():
    free = Scenario("free", 3, 3, (0, 0), (2, 2), ((0.0, 0.5),), horizon=4, slip_coord=0)
    res = verify_sweep(free, SafetySpec.for_scenario(free), PolicyParams.uniform(free), 64, 0, 2, 0)
    assert res.min_g == ROBUSTNESS_CAP and res.certified
    sc, spec = small_corridor()
    pol = initial_policy(sc, 0.005)
    one = verify_sweep(sc, spec, pol, 1, 3, 2, 0)
    x = one.argmin_config.as_array()
    assert one.n_evaluated == 1 and one.min_g == robustness_batch(sc, spec, x, pol, 2, 0).values[0]
    rep = falsify(sc, spec, pol, FalsifierConfig(budget=12, m_rollouts=2, rollout_seed=5))
    sweep = verify_sweep(sc, spec, pol, 128, 0, 2, 5, [c.config for c in rep.counterexamples])
    assert sweep.min_g <= rep.best_g


def test_regret_trace_examples():
    recs = [IterationRecord(k, 0.0, 0.0, J, math.nan, 0, True) for k, J in enumerate([0.0, 0.5, 0.9], 1)]
    np.testing.assert_allclose(regret_trace(recs, 1.0), [1.0, 0.5, 0.1], atol=1e-15)
    same = [IterationRecord(1, 0.0, 0.0, 0.7, math.nan, 0, True)] * 3
    assert (regret_trace(same, 0.7) == 0).all()
    with pytest.raises(ValueError):
        regret_trace(recs, -math.inf)


def test_config_validation_and_seeds():
    for kw in [dict(max_outer_iters=0), dict(verify_samples=0), dict(step_decay=0.0), dict(step_decay=1.5)]:
        with pytest.raises(ValueError):
            LoopConfig(**kw)
    assert derive_seed(7, "crn") == derive_seed(7, "crn")
    assert len({derive_seed(7, "crn"), derive_seed(7, "sweep"), derive_seed(8, "crn")}) == 3
