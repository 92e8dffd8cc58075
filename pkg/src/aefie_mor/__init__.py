"""Augmented-EFIE thin-wire solver with monolithic and block-structure
preserving reduced-basis frequency sweeps."""

from .geometry import WireModel, discretize_dipole, incidence_matrix
from .fom import FomMatrices, SystemInstance, assemble_fom, assemble_system, solve_fom
from .numerics import OrthoBasis, SingularMatrixError, lu_solve, mgs_extend
from .mor import (
    GreedyConfig,
    GreedyTrace,
    ProjectionBasis,
    ReducedSystem,
    Strategy,
    greedy_build,
)
from .analysis import (
    Comparison,
    FrequencyGrid,
    Source,
    SweepResult,
    err_d,
    err_z,
    impedance,
    run_comparison,
    solenoidality_deviation,
)

__version__ = "0.1.0"

__all__ = [
    "Comparison",
    "FomMatrices",
    "FrequencyGrid",
    "GreedyConfig",
    "GreedyTrace",
    "OrthoBasis",
    "ProjectionBasis",
    "ReducedSystem",
    "SingularMatrixError",
    "Source",
    "Strategy",
    "SweepResult",
    "SystemInstance",
    "WireModel",
    "assemble_fom",
    "assemble_system",
    "discretize_dipole",
    "err_d",
    "err_z",
    "greedy_build",
    "impedance",
    "incidence_matrix",
    "lu_solve",
    "mgs_extend",
    "run_comparison",
    "solenoidality_deviation",
    "solve_fom",
]
