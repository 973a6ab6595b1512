"""Mean-field game of fire sales under a capital constraint.

Finite-difference solver for the coupled value-function / density system,
the closed-form unregulated benchmark, and artifact export.
"""

__version__ = "0.1.0"

from .closed_form import ClosedFormSolution, exp_integral_ei
from .coupler import EquilibriumResult, control_sequence, picard_solve
from .contagion import DriftPath
from .errors import ConfigError, FiresaleError, InnerNonConvergence, NumericalBlowUp, SolverError
from .fokker_planck import FPSolver
from .hjb import HJBSolver
from .model import (
    DESK_GRID,
    FULL_GRID,
    GridSpec,
    InitialDistribution,
    ModelParams,
    ScenarioConfig,
    acceptance_mask,
    boundary_weight,
    scenario,
    scenario_library,
)

__all__ = [
    "__version__",
    "ClosedFormSolution",
    "ConfigError",
    "DESK_GRID",
    "DriftPath",
    "EquilibriumResult",
    "FPSolver",
    "FiresaleError",
    "GridSpec",
    "HJBSolver",
    "InitialDistribution",
    "InnerNonConvergence",
    "ModelParams",
    "NumericalBlowUp",
    "FULL_GRID",
    "ScenarioConfig",
    "SolverError",
    "acceptance_mask",
    "boundary_weight",
    "control_sequence",
    "exp_integral_ei",
    "picard_solve",
    "scenario",
    "scenario_library",
]
