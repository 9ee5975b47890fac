"""Fractional action-like variational problems: optimality conditions,
friction forces, solvers and the two-time optimal control view."""

from .control import (
    ControlProblem,
    Extremal,
    embed_variational,
    energy_rate_gap,
    hamiltonian,
    pontryagin_residuals,
    solve_shooting,
)
from .core import (
    FalvaProblem,
    ResidualReport,
    action,
    dr_residual,
    el_residual,
    friction_force,
    psi,
    residual_report,
    verify_identities,
)
from .solvers import SolveConfig, SolveResult, cross_validate, solve_direct, solve_indirect
from .specquad import gamma, gamma_ratio, jacobi_rule, truncated_rule
from .symexpr import parse, to_string
from .trajectory import Trajectory

__version__ = "0.1.0"

__all__ = [
    "ControlProblem",
    "Extremal",
    "FalvaProblem",
    "ResidualReport",
    "SolveConfig",
    "SolveResult",
    "Trajectory",
    "action",
    "cross_validate",
    "dr_residual",
    "el_residual",
    "embed_variational",
    "energy_rate_gap",
    "friction_force",
    "gamma",
    "gamma_ratio",
    "hamiltonian",
    "jacobi_rule",
    "parse",
    "pontryagin_residuals",
    "psi",
    "residual_report",
    "solve_direct",
    "solve_indirect",
    "solve_shooting",
    "to_string",
    "truncated_rule",
    "verify_identities",
]
