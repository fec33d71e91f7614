"""Fixed-endpoint quadratic optimal control of bilinear systems.

Single systems are solved by an iterative Riccati sweep on successively
frozen linear-quadratic problems; ensembles of systems sharing one control
get a minimum-energy pulse from an SVD expansion of the input-to-state
operator.
"""

from .errors import (
    BadInitialTrajectory,
    BadSpec,
    BilinocError,
    ConfigError,
    DimensionMismatch,
    DimensionTooLarge,
    Diverged,
    FiniteEscape,
    NonFiniteState,
    NotControllable,
    NotConverged,
    OracleDiverged,
    OutOfRange,
    TargetNotReachable,
)
from .ensemble import (
    EnsembleConfig,
    EnsembleProblem,
    EnsembleSolution,
    ParameterGrid,
    ensemble_solve,
    propagate_ensemble,
    sample_parameters,
    svd_synthesize,
)
from .model import (
    BilinearSystem,
    BoundaryConditions,
    QuadraticCost,
    TimeGrid,
    control_side_from_state_side,
    eval_rhs,
    hamiltonian,
    state_side_from_control_side,
)
from .oracle import gramian_min_energy, refinement_study, shooting_solve
from .problems import bloch, bloch_ensemble, bloch_ensemble_grid, population
from .solver import (
    Solution,
    SolverConfig,
    build_frozen,
    propagate_control,
    solve,
)
from .sweep import FrozenLinearSystem, SweepSolution, solve_sweep
from .validate import CheckResult, run_checks

__version__ = "0.1.0"

__all__ = [
    "BilinearSystem",
    "BoundaryConditions",
    "QuadraticCost",
    "TimeGrid",
    "state_side_from_control_side",
    "control_side_from_state_side",
    "eval_rhs",
    "hamiltonian",
    "BilinocError",
    "DimensionMismatch",
    "OutOfRange",
    "BadSpec",
    "ConfigError",
    "BadInitialTrajectory",
    "DimensionTooLarge",
    "NonFiniteState",
    "FiniteEscape",
    "NotControllable",
    "TargetNotReachable",
    "NotConverged",
    "Diverged",
    "OracleDiverged",
    "SolverConfig",
    "Solution",
    "solve",
    "build_frozen",
    "propagate_control",
    "FrozenLinearSystem",
    "SweepSolution",
    "solve_sweep",
    "EnsembleConfig",
    "EnsembleProblem",
    "EnsembleSolution",
    "ParameterGrid",
    "sample_parameters",
    "ensemble_solve",
    "propagate_ensemble",
    "svd_synthesize",
    "shooting_solve",
    "gramian_min_energy",
    "refinement_study",
    "population",
    "bloch",
    "bloch_ensemble",
    "bloch_ensemble_grid",
    "CheckResult",
    "run_checks",
    "__version__",
]
