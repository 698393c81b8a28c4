"""Optimal control problems solved and cross-checked in four equivalent formulations."""
from .bvp_solver import SolverReport, Trajectory, integrate_ivp, solve_bvp
from .errors import (ChartError, ConfigError, DimensionError, DomainError, LegendreInversionError,
                     NotInvertibleError, RegularityError, SingularControlError, SocpError,
                     UnsupportedFormulationError)
from .ocp_model import OcpProblem
from .registry import get_action, get_problem

__version__ = "0.1.0"

__all__ = [
    "SolverReport", "Trajectory", "integrate_ivp", "solve_bvp", "ChartError", "ConfigError",
    "DimensionError", "DomainError", "LegendreInversionError", "NotInvertibleError", "RegularityError",
    "SingularControlError", "SocpError", "UnsupportedFormulationError", "OcpProblem", "get_action",
    "get_problem",
]
