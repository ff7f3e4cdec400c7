"""Chance-constrained open-loop control of linear systems with a random control matrix."""

from .constraints import (
    PolytopeSequence,
    RiskAllocation,
    cantelli_risk,
    risk_to_lambda,
    uniform_allocation,
    vp_risk,
)
from .dynamics import LinearSystem, halfspace_mean, halfspace_std, stacked_row_map
from .errors import DomainError, NumericError, ProblemFileError, ShapeError
from .io import load_problem, save_problem
from .problem import ChanceProblem
from .scenarios import CWHParameters, beta_case, builtin, gamma_case
from .solver import ACSConfig, Solution, acs_solve, scenario_sample_count, scenario_solve
from .uncertainty import RandomControlMatrixSpec, ScalarDistribution, Unimodality, empirical_unimodality_check
from .validation import ValidationReport, monte_carlo_validate

__all__ = [
    "ACSConfig",
    "CWHParameters",
    "ChanceProblem",
    "DomainError",
    "LinearSystem",
    "NumericError",
    "PolytopeSequence",
    "ProblemFileError",
    "RandomControlMatrixSpec",
    "RiskAllocation",
    "ScalarDistribution",
    "ShapeError",
    "Solution",
    "Unimodality",
    "ValidationReport",
    "acs_solve",
    "beta_case",
    "builtin",
    "cantelli_risk",
    "empirical_unimodality_check",
    "gamma_case",
    "halfspace_mean",
    "halfspace_std",
    "load_problem",
    "monte_carlo_validate",
    "risk_to_lambda",
    "save_problem",
    "scenario_sample_count",
    "scenario_solve",
    "stacked_row_map",
    "uniform_allocation",
    "vp_risk",
]
