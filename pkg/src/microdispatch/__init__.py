"""Stochastic day-ahead economic dispatch for wind-integrated microgrids."""

from .admm import AdmmConfig, AdmmState, run_admm
from .central import solve_central_lmp, solve_central_saa
from .costs import NetCostReport, net_cost
from .model import DispatchProblem, Schedule, builtin_case_study, load_problem, validate_problem
from .windgen import ScenarioSet, build_scenarios

__all__ = [
    "AdmmConfig",
    "AdmmState",
    "DispatchProblem",
    "NetCostReport",
    "ScenarioSet",
    "Schedule",
    "build_scenarios",
    "builtin_case_study",
    "load_problem",
    "net_cost",
    "run_admm",
    "solve_central_lmp",
    "solve_central_saa",
    "validate_problem",
]
