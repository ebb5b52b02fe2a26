"""Smoothing-path descent for the reduced tracking problem.

The nonsmooth problem is attacked through a decreasing sequence of smoothing
widths ``eps_k = eps_0 * decay^k``.  Each stage minimizes the smoothed
reduced objective (optionally plus a proximal distance to the previous
stage's iterate) by gradient descent in the control space
``H^1(0,T; L^2)``: Barzilai-Borwein step proposals safeguarded by an Armijo
backtracking line search, warm-started from the previous stage.  The stage
gradient tolerance shrinks with the width, ``tol_k = tol_0 * decay^k``.

The final report carries the per-stage objective and gradient-norm
histories (the objective is nonincreasing across accepted steps inside one
stage by the Armijo condition), the widths visited, the nonsmooth state at
the final control, and the adjoint bundle of the last smoothed stage, which
is the natural input for the stationarity checkers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adjoint import (
    AdjointSolution,
    ObjectiveSpec,
    evaluate_with_gradient,
    reduced_objective,
)
from .forward import (
    DEFAULT_MAX_PICARD,
    DEFAULT_PICARD_TOL,
    StateSolution,
    solve_state,
)
from .grids import SpaceGrid, TimeGrid, _check_traj, h1_time_inner
from .model import FatigueLaw, HistoryKernel, ModelParams, SmoothingParams

__all__ = ["PathConfig", "StageRecord", "OptimizeResult", "optimize"]


@dataclass
class PathConfig:
    """Controls of the smoothing path and the inner descent.

    Attributes
    ----------
    eps_max0, eps_f0 : float
        Initial smoothing widths.
    decay : float
        Geometric width decay per stage, in (0, 1).
    stages : int
        Number of smoothing stages.
    grad_tol0 : float
        Gradient tolerance of the first stage; stage ``k`` uses
        ``grad_tol0 * decay^k``.
    max_inner : int
        Iteration cap per stage.
    armijo_c : float
        Sufficient-decrease constant of the line search.
    backtrack : float
        Step shrink factor on rejection, in (0, 1).
    step_init : float
        First trial step of the first stage.
    step_min : float
        Below this trial step the stage aborts (recorded, not raised).
    proximal : bool
        Add ``1/2 ||load - anchor||^2_{H^1}`` with the previous stage's
        iterate as anchor (the first stage anchors at the initial guess).
    """

    eps_max0: float = 1e-1
    eps_f0: float = 1e-1
    decay: float = 0.5
    stages: int = 8
    grad_tol0: float = 1e-4
    max_inner: int = 200
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    step_init: float = 1.0
    step_min: float = 1e-14
    proximal: bool = False

    def __post_init__(self) -> None:
        if not (0.0 < self.decay < 1.0):
            raise ValueError(f"decay must lie in (0,1), got {self.decay}")
        if self.stages < 1:
            raise ValueError(f"stages must be >= 1, got {self.stages}")
        if not (0.0 < self.backtrack < 1.0):
            raise ValueError(f"backtrack must lie in (0,1), got {self.backtrack}")


@dataclass
class StageRecord:
    """Per-stage convergence record."""

    smoothing: SmoothingParams
    grad_tol: float
    objective_values: list
    grad_norms: list
    iterations: int
    converged: bool
    aborted_step_underflow: bool


@dataclass
class OptimizeResult:
    """Outcome of the smoothing-path descent.

    Attributes
    ----------
    load : np.ndarray
        Final control iterate.
    stages : list of StageRecord
        Per-stage histories; ``objective_values`` within a stage is
        nonincreasing across accepted steps.
    eps_path : list of SmoothingParams
        Widths visited.
    final_state : StateSolution
        Nonsmooth state at the final control.
    final_adjoint : AdjointSolution
        Adjoint of the last smoothing stage at the final control.
    final_smoothing : SmoothingParams
        Widths of that last stage.
    total_inner_iterations : int
    """

    load: np.ndarray
    stages: list
    eps_path: list
    final_state: StateSolution
    final_adjoint: AdjointSolution
    final_smoothing: SmoothingParams
    total_inner_iterations: int = 0

    def objective_history(self) -> list:
        return [list(s.objective_values) for s in self.stages]

    def grad_norm_history(self) -> list:
        return [list(s.grad_norms) for s in self.stages]


def optimize(
    params: ModelParams,
    law: FatigueLaw,
    kernel: HistoryKernel,
    load0: np.ndarray,
    space: SpaceGrid,
    time: TimeGrid,
    objective: ObjectiveSpec,
    path: Optional[PathConfig] = None,
    *,
    picard_tol: float = DEFAULT_PICARD_TOL,
    max_picard: int = DEFAULT_MAX_PICARD,
) -> OptimizeResult:
    """Minimize the reduced objective along a shrinking smoothing path.

    Parameters
    ----------
    params, law, kernel : model data.
    load0 : np.ndarray
        Initial control iterate.
    space, time : grids.
    objective : ObjectiveSpec
        Tracking target and weights.
    path : PathConfig, optional
        Path and line-search controls (defaults used when omitted).

    Returns
    -------
    OptimizeResult
    """
    cfg = path if path is not None else PathConfig()
    load = _check_traj(load0, space, time, "load0").copy()

    def h1(u, v):
        return h1_time_inner(u, v, space, time)

    stage_records: list = []
    eps_path: list = []
    total_inner = 0
    step = cfg.step_init
    last_adjoint: Optional[AdjointSolution] = None
    last_smoothing: Optional[SmoothingParams] = None

    for k in range(cfg.stages):
        factor = cfg.decay ** k
        smoothing = SmoothingParams(cfg.eps_max0 * factor, cfg.eps_f0 * factor)
        grad_tol = cfg.grad_tol0 * factor
        anchor = load.copy() if cfg.proximal else None

        def merit_and_grad(l):
            value, g, state, adj = evaluate_with_gradient(
                params, law, kernel, l, space, time, objective, smoothing,
                picard_tol=picard_tol, max_picard=max_picard,
            )
            if anchor is not None:
                diff = l - anchor
                value += 0.5 * h1(diff, diff)
                g = g + diff
            return value, g, adj

        def merit(l):
            value = reduced_objective(
                params, law, kernel, l, space, time, objective, smoothing,
                picard_tol=picard_tol, max_picard=max_picard,
            )
            if anchor is not None:
                diff = l - anchor
                value += 0.5 * h1(diff, diff)
            return value

        obj_values: list = []
        grad_norms: list = []
        converged = False
        aborted = False
        prev_load = None
        prev_grad = None

        J, g, adj = merit_and_grad(load)
        last_adjoint = adj
        it = 0
        while True:
            gn = float(np.sqrt(max(h1(g, g), 0.0)))
            obj_values.append(float(J))
            grad_norms.append(gn)
            if gn <= grad_tol:
                converged = True
                break
            if it >= cfg.max_inner:
                break

            # Barzilai-Borwein proposal from the last accepted pair
            if prev_load is not None:
                s_diff = load - prev_load
                y_diff = g - prev_grad
                denom = h1(s_diff, y_diff)
                if denom > 0.0:
                    step = float(np.clip(h1(s_diff, s_diff) / denom, 1e-12, 1e6))

            descent = h1(g, g)
            trial = step
            accepted = False
            while trial >= cfg.step_min:
                candidate = load - trial * g
                J_cand = merit(candidate)
                if J_cand <= J - cfg.armijo_c * trial * descent:
                    accepted = True
                    break
                trial *= cfg.backtrack
            if not accepted:
                aborted = True
                break

            prev_load, prev_grad = load, g
            load = candidate
            step = trial
            J, g, adj = merit_and_grad(load)
            last_adjoint = adj
            it += 1

        total_inner += it
        stage_records.append(
            StageRecord(
                smoothing=smoothing,
                grad_tol=grad_tol,
                objective_values=obj_values,
                grad_norms=grad_norms,
                iterations=it,
                converged=converged,
                aborted_step_underflow=aborted,
            )
        )
        eps_path.append(smoothing)
        last_smoothing = smoothing

    final_state = solve_state(
        params, law, kernel, load, space, time,
        picard_tol=picard_tol, max_picard=max_picard,
    )
    assert last_adjoint is not None and last_smoothing is not None
    return OptimizeResult(
        load=load,
        stages=stage_records,
        eps_path=eps_path,
        final_state=final_state,
        final_adjoint=last_adjoint,
        final_smoothing=last_smoothing,
        total_inner_iterations=total_inner,
    )
