"""Counterexample-guided refinement of gridworld policies.

A Bayesian-optimization falsifier searches environment configurations for
safety violations of the current policy; an inverse-RL style refiner turns
the violations into reward penalties and replans.  The loop ends when a
dense sweep finds no violation.
"""

__version__ = "0.1.0"

from .env import ACTIONS, Coord, EnvConfig, HazardTemplate, Scenario, Trajectory, rollout
from .errors import CegrlError
from .falsifier import Counterexample, FalsificationReport, FalsifierConfig, bo_minimize, falsify, random_search
from .gp import Kernel, SurrogateModel, fit, fit_hyperparams, predict
from .loop import IterationRecord, LoopConfig, LoopReport, VerifyResult, run_loop, verify_sweep
from .policy import PolicyParams, RewardTable, initial_policy, soft_value_iteration
from .refiner import RefinerConfig, refine, update_reward
from .robustness import RobustnessValue, SafetySpec, policy_robustness, trajectory_robustness

__all__ = [
    "ACTIONS", "CegrlError", "Coord", "Counterexample", "EnvConfig", "FalsificationReport", "FalsifierConfig",
    "HazardTemplate", "IterationRecord", "Kernel", "LoopConfig", "LoopReport", "PolicyParams", "RefinerConfig",
    "RewardTable", "RobustnessValue", "SafetySpec", "Scenario", "SurrogateModel", "Trajectory", "VerifyResult",
    "bo_minimize", "falsify", "fit", "fit_hyperparams", "initial_policy", "policy_robustness", "predict",
    "random_search", "refine", "rollout", "run_loop", "soft_value_iteration", "trajectory_robustness",
    "update_reward", "verify_sweep",
]
