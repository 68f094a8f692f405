"""Quickest intervention under a hidden change point: belief MDP solvers, policies, simulation."""

from .belief import observation_likelihood, predict, update
from .grid_solver import (
    GridConfig,
    GridSolution,
    ThresholdPolicy,
    extract_thresholds,
    solve_finite_horizon,
    solve_grid,
)
from .local_approx import approx_total_cost, solve_approx, threshold_bounds
from .model import ProblemSpec, Strictness, make_paper_family, validate_spec
from .policies import GridOptimal, LowComplexity, Oracle, Qcd, low_complexity_policy
from .simulator import SimOptions, estimate_cost, run_episode, tune_qcd

__all__ = [
    "GridConfig", "GridOptimal", "GridSolution", "LowComplexity", "Oracle", "ProblemSpec",
    "Qcd", "SimOptions", "Strictness", "ThresholdPolicy", "approx_total_cost",
    "estimate_cost", "extract_thresholds", "low_complexity_policy", "make_paper_family",
    "observation_likelihood", "predict", "run_episode", "solve_approx",
    "solve_finite_horizon", "solve_grid", "threshold_bounds", "tune_qcd", "update",
    "validate_spec",
]
__version__ = "0.1.0"
