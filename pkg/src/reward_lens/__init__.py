"""Interpret reward functions by searching their potential-shaping class for a simpler equivalent."""

from __future__ import annotations

__version__ = "0.1.0"

from .bridge import BlackBoxReward
from .costs import CostSpec, TrajectoryPool, UniformTransitions, smoothness_cost, sparsity_cost
from .env import GridAction, GridSpec, Transitions, enumerate_transitions, grid_step, mc_rollout, mc_step
from .equivalence import (
    EquivalenceReport,
    check_shaping_equiv,
    equivalence_report,
    optimal_policy_check,
    recover_potential,
    return_invariance_check,
)
from .optimize import OptimizeConfig, default_config, preprocess
from .potentials import LinearPotential, MLPPotential, TabularPotential
from .rewards import (
    TabularReward,
    add_noise,
    apply_shaping,
    goal_reward,
    load_tabular,
    manhattan_potential,
    path_reward,
    random_potential,
    save_tabular,
    to_tabular,
)

__all__ = [
    "BlackBoxReward",
    "CostSpec",
    "EquivalenceReport",
    "GridAction",
    "GridSpec",
    "LinearPotential",
    "MLPPotential",
    "OptimizeConfig",
    "TabularPotential",
    "TabularReward",
    "TrajectoryPool",
    "Transitions",
    "UniformTransitions",
    "add_noise",
    "apply_shaping",
    "check_shaping_equiv",
    "default_config",
    "enumerate_transitions",
    "equivalence_report",
    "goal_reward",
    "grid_step",
    "load_tabular",
    "manhattan_potential",
    "mc_rollout",
    "mc_step",
    "optimal_policy_check",
    "path_reward",
    "preprocess",
    "random_potential",
    "recover_potential",
    "return_invariance_check",
    "save_tabular",
    "smoothness_cost",
    "sparsity_cost",
    "to_tabular",
]
