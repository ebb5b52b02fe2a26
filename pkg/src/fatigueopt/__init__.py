"""Optimal control of a viscous two-field damage model with fatigue.

The package solves, differentiates and optimizes a rate-dependent damage
evolution in which a local damage field is coupled to an elliptically
regularized nonlocal field and degraded by a fatigue law acting on a
Volterra history of the damage.  It provides:

- tensor-product grids with trapezoid quadrature and a Neumann Laplacian
  (:mod:`~fatigueopt.grids`);
- the nonsmooth model primitives, their C^1 smoothings and the discrete
  history operator with exact transpose (:mod:`~fatigueopt.model`);
- implicit-Euler state solvers for the exact and smoothed dynamics
  (:mod:`~fatigueopt.forward`);
- exact one-sided directional sensitivities plus finite-difference audits
  (:mod:`~fatigueopt.linearized`);
- the discrete-exact adjoint of the smoothed problem and reduced gradients
  in ``H^1(0,T; L^2)`` (:mod:`~fatigueopt.adjoint`);
- a smoothing-path descent optimizer (:mod:`~fatigueopt.optimize`);
- checkers for limit, improved and strong stationarity systems and a
  B-stationarity probe (:mod:`~fatigueopt.stationarity`);
- TOML scenarios and a deterministic command line (:mod:`~fatigueopt.scenario`,
  :mod:`~fatigueopt.cli`).
"""

from .adjoint import (
    AdjointSolution,
    GradCheckResult,
    ObjectiveSpec,
    evaluate_with_gradient,
    fd_gradient_check,
    objective_breakdown,
    reduced_gradient,
    reduced_objective,
    solve_adjoint_regularized,
)
from .forward import (
    EllipticOperator,
    LipschitzProbeResult,
    SolverError,
    StateSolution,
    lipschitz_probe,
    solve_elliptic,
    solve_state,
    solve_state_regularized,
)
from .grids import (
    SpaceGrid,
    TimeGrid,
    apply_neumann_laplacian,
    build_space_grid,
    grad_inner,
    h1_time_inner,
    h1_time_norm,
    l2_inner,
    l2_norm,
    l2_time_inner,
    l2_time_norm,
    riesz_h1_time,
    time_derivative,
)
from .linearized import (
    FDCheckResult,
    LinearizedSolution,
    fd_directional_check,
    solve_linearized,
)
from .model import (
    FatigueLaw,
    HistoryKernel,
    ModelParams,
    SmoothingParams,
    energy_eval,
    history_adjoint_apply,
    history_apply,
    history_linear_apply,
    max_dir,
    max_eps,
    max_eps_prime,
    max_plus,
)
from .optimize import OptimizeResult, PathConfig, optimize
from .scenario import Scenario, ScenarioError, load_scenario, validate_scenario
from .stationarity import (
    ActiveSets,
    BStatProbeResult,
    MultiplierBundle,
    StationarityReport,
    ViolationStats,
    b_stationarity_probe,
    check_system,
    classify_active_sets,
    compute_G,
    extract_multipliers,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # grids
    "SpaceGrid", "TimeGrid", "build_space_grid", "l2_inner", "l2_norm",
    "grad_inner", "apply_neumann_laplacian", "l2_time_inner", "l2_time_norm",
    "h1_time_inner", "h1_time_norm", "time_derivative", "riesz_h1_time",
    # model
    "ModelParams", "FatigueLaw", "SmoothingParams", "HistoryKernel",
    "max_plus", "max_dir", "max_eps", "max_eps_prime",
    "history_apply", "history_linear_apply", "history_adjoint_apply",
    "energy_eval",
    # forward
    "SolverError", "EllipticOperator", "StateSolution", "LipschitzProbeResult",
    "solve_elliptic", "solve_state", "solve_state_regularized", "lipschitz_probe",
    # linearized
    "LinearizedSolution", "FDCheckResult", "solve_linearized",
    "fd_directional_check",
    # adjoint
    "ObjectiveSpec", "AdjointSolution", "GradCheckResult", "reduced_objective",
    "objective_breakdown", "solve_adjoint_regularized", "reduced_gradient",
    "evaluate_with_gradient", "fd_gradient_check",
    # optimize
    "PathConfig", "OptimizeResult", "optimize",
    # stationarity
    "ActiveSets", "MultiplierBundle", "ViolationStats", "StationarityReport",
    "BStatProbeResult", "classify_active_sets", "extract_multipliers",
    "compute_G", "check_system", "b_stationarity_probe",
    # scenario
    "Scenario", "ScenarioError", "load_scenario", "validate_scenario",
]
