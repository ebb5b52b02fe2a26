"""Objective, regularized adjoint system, and the reduced control gradient.

The tracking objective is

    J = 1/2 ||q - q_d||^2_{L^2(L^2)} + kappa/2 ||phi||^2_{L^2(H^1)}
        + 1/2 ||load||^2_{H^1(0,T; L^2)},

discretized with the same right-cell rule as the inner products in
:mod:`fatigueopt.grids`, so every identity below holds at the discrete level.

``solve_adjoint_regularized`` computes the exact discrete transpose of the
linearized smoothed dynamics.  With the diagonal derivative multipliers
``D_m = max_eps'(z_m)``, ``F_m = f_eps'(H_m)`` and ``G_m = (dt/eps_v) D_m``,
the costate recursion marches backward,

    (I + B G_m) xi_m = xi_{m+1} - dt (H'* mu)_m + dt ( (q_m - q_d_m)
                        + beta R P_m ),        xi_{M+1} = 0,

with ``P_m = kappa (I + A) phi_m``, ``lambda_m = D_m xi_m / eps_v``,
``mu_m = F_m lambda_m`` and ``w_m = R (beta lambda_m + P_m)``.  By
construction the exported quantities satisfy, to rounding,

- the backward-difference costate equation
  ``-(xi_k - xi_{k-1})/dt - beta (w_k - lambda_k) + (H'* mu)_k = q_k - q_d_k``,
- the elliptic costate equation ``(alpha A + beta) w_k = beta lambda_k + P_k``,
- terminal condition ``xi[M] = 0`` exactly,
- the duality identity
  ``dj(S'_eps d) = sum_k dt (w_k, d_k)_W`` for every direction ``d``.

Slot convention: the exported ``xi[k]`` holds the costate sample entering
the backward difference on cell ``k+1`` (so ``xi[M] = 0``), while
``lambda/mu/w`` are cell quantities at slots ``1..M``; slot 0 of each is
filled from the same formulas for completeness.  The cell-aligned costate
samples are kept on the solution as ``xi_cell`` so that the pointwise
multiplier identities ``lambda_k = D_k xi_cell_k / eps_v`` hold exactly.

The reduced gradient in control space is ``g = load + riesz_h1_time(w)``,
the Riesz representative taken in the ``H^1(0,T; L^2)`` pairing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .forward import (
    DEFAULT_MAX_PICARD,
    DEFAULT_PICARD_TOL,
    EllipticOperator,
    SolverError,
    StateSolution,
    solve_state,
    solve_state_regularized,
)
from .grids import (
    SpaceGrid,
    TimeGrid,
    _check_traj,
    apply_neumann_laplacian,
    h1_time_inner,
    h1_time_norm,
    l2_norm,
    riesz_h1_time,
)
from .model import (
    FatigueLaw,
    HistoryKernel,
    ModelParams,
    SmoothingParams,
    max_eps_prime,
)

__all__ = [
    "ObjectiveSpec",
    "AdjointSolution",
    "GradCheckResult",
    "reduced_objective",
    "objective_breakdown",
    "solve_adjoint_regularized",
    "reduced_gradient",
    "evaluate_with_gradient",
    "fd_gradient_check",
]


@dataclass
class ObjectiveSpec:
    """Tracking target and weights of the objective.

    Attributes
    ----------
    q_target : np.ndarray
        Desired damage trajectory ``q_d``, shape ``(steps+1, node_count)``.
    kappa : float
        Weight of the ``L^2(H^1)`` penalty on the nonlocal field, ``>= 0``.
    """

    q_target: np.ndarray
    kappa: float = 0.0

    def __post_init__(self) -> None:
        self.q_target = np.asarray(self.q_target, dtype=float)
        if self.kappa < 0.0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")


def _phi_weight_field(
    objective: ObjectiveSpec, phi_slice: np.ndarray, space: SpaceGrid
) -> np.ndarray:
    """``P = kappa (I + A) phi`` so that ``(P, v)_W`` is the H^1 pairing term."""
    if objective.kappa == 0.0:
        return np.zeros_like(phi_slice)
    return objective.kappa * (phi_slice + apply_neumann_laplacian(phi_slice, space))


def objective_breakdown(
    state: StateSolution, objective: ObjectiveSpec
) -> dict:
    """Individual objective terms at a solved state.

    Returns a dict with ``tracking``, ``phi_penalty``, ``control_penalty``
    and ``total`` (each already carrying its 1/2 factor).
    """
    space, time = state.space, state.time
    q_d = _check_traj(objective.q_target, space, time, "q_target")
    dt = time.dt
    diff = state.q[1:] - q_d[1:]
    tracking = 0.5 * dt * float(((diff * diff) @ space.weights).sum())
    phi_pen = 0.0
    if objective.kappa > 0.0:
        phi = state.phi
        mass = float(((phi[1:] * phi[1:]) @ space.weights).sum())
        stiff = float(sum(phi[k] @ (space.stiffness @ phi[k]) for k in range(1, time.steps + 1)))
        phi_pen = 0.5 * objective.kappa * dt * (mass + stiff)
    control = 0.5 * h1_time_inner(state.load, state.load, space, time)
    return {
        "tracking": tracking,
        "phi_penalty": phi_pen,
        "control_penalty": control,
        "total": tracking + phi_pen + control,
    }


def reduced_objective(
    params: ModelParams,
    law: FatigueLaw,
    kernel: HistoryKernel,
    load: np.ndarray,
    space: SpaceGrid,
    time: TimeGrid,
    objective: ObjectiveSpec,
    smoothing: Optional[SmoothingParams] = None,
    *,
    picard_tol: float = DEFAULT_PICARD_TOL,
    max_picard: int = DEFAULT_MAX_PICARD,
) -> float:
    """Objective value at the state reached by ``load``.

    Solves the nonsmooth dynamics when ``smoothing`` is None, the smoothed
    dynamics otherwise, and evaluates the discrete objective.
    """
    if smoothing is None:
        state = solve_state(params, law, kernel, load, space, time,
                            picard_tol=picard_tol, max_picard=max_picard)
    else:
        state = solve_state_regularized(params, law, kernel, load, space, time,
                                        smoothing, picard_tol=picard_tol,
                                        max_picard=max_picard)
    return objective_breakdown(state, objective)["total"]


# --------------------------------------------------------------------------
# adjoint
# --------------------------------------------------------------------------

@dataclass
class AdjointSolution:
    """Costate bundle of the regularized problem.

    Attributes
    ----------
    xi : np.ndarray
        Costate trajectory in the export slot convention (``xi[M] = 0``
        exactly); the sample at slot ``k`` enters the backward difference
        over cell ``k+1``.
    xi_cell : np.ndarray
        Cell-aligned costate samples: ``lambda[k] = D_k xi_cell[k] / eps_v``
        holds exactly for every ``k``.
    w : np.ndarray
        Nonlocal costate; solves ``(alpha A + beta) w = beta lambda + P``
        slotwise to rounding.
    lam, mu : np.ndarray
        Activation and history multipliers
        (``mu = f_eps'(H) lambda`` exactly).
    base : StateSolution
        The regularized state the system was assembled at.
    objective : ObjectiveSpec
        Objective the costate corresponds to.
    picard_iterations : list of int
        Iterations used per backward step.
    """

    xi: np.ndarray
    xi_cell: np.ndarray
    w: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    base: StateSolution
    objective: ObjectiveSpec
    picard_iterations: list = field(default_factory=list, repr=False)


def solve_adjoint_regularized(
    state: StateSolution,
    objective: ObjectiveSpec,
    *,
    picard_tol: float = DEFAULT_PICARD_TOL,
    max_picard: int = DEFAULT_MAX_PICARD,
) -> AdjointSolution:
    """Solve the adjoint of the linearized smoothed dynamics, exactly
    transposed at the discrete level.

    Parameters
    ----------
    state : StateSolution
        Must be a regularized solution (raises ``ValueError`` otherwise):
        the multipliers are classical derivatives of the smoothed
        nonlinearities at this state.
    objective : ObjectiveSpec
        Tracking data.

    Returns
    -------
    AdjointSolution
    """
    if not state.regularized or state.smoothing is None:
        raise ValueError(
            "adjoint multipliers need a regularized state; solve with "
            "solve_state_regularized first"
        )
    space, time = state.space, state.time
    params, law, kernel = state.params, state.law, state.kernel
    q_d = _check_traj(objective.q_target, space, time, "q_target")
    op = EllipticOperator(params, space)
    M, dt, eps_v = time.steps, time.dt, params.viscosity
    a = kernel.samples

    D = max_eps_prime(state.z, state.smoothing.eps_max)
    F = law.smoothed_slope(state.history, state.smoothing.eps_f)

    # source terms: e_hat_m = (q_m - q_d_m) + beta R P_m
    P = np.zeros_like(state.phi)
    e_hat = np.empty_like(state.q)
    for m in range(M + 1):
        P[m] = _phi_weight_field(objective, state.phi[m], space)
        e_hat[m] = (state.q[m] - q_d[m]) + params.beta * op.resolvent(P[m])

    xi_cell = time.zeros(space)       # xi_cell[m] = xi_m (cell-aligned)
    lam = time.zeros(space)
    mu = time.zeros(space)
    iters: list = []

    xi_next = space.zeros()           # xi_{M+1} = 0
    for m in range(M, 0, -1):
        # frozen Volterra tail: dt * (H'* mu)_m over already-computed slots
        if m < M:
            tail = dt * dt * (a[1 : M - m + 1] @ mu[m + 1 :])
        else:
            tail = np.zeros(space.node_count)
        rhs = xi_next - tail + dt * e_hat[m]
        Dm = D[m]
        y = xi_next.copy()
        converged = False
        update = np.inf
        with np.errstate(over="ignore", invalid="ignore"):
            for it in range(1, max_picard + 1):
                y_new = rhs - (dt / eps_v) * op.apply_condensed(Dm * y)
                update = l2_norm(y_new - y, space)
                scale = max(1.0, l2_norm(y_new, space))
                y = y_new
                if not (np.isfinite(update) and np.isfinite(scale)):
                    break
                if update <= picard_tol * scale:
                    converged = True
                    break
        if not converged:
            raise SolverError(
                f"adjoint Picard iteration diverged or stalled at backward "
                f"step {m}: update {update:.3e} after {it} iterations",
                step=m,
                residual=update,
                suggestion="reduce dt or increase viscosity",
            )
        iters.append(it)
        xi_cell[m] = y
        lam[m] = (Dm / eps_v) * y
        mu[m] = F[m] * lam[m]
        xi_next = y

    # export slot convention: xi[k] holds the sample entering cell k+1
    xi = time.zeros(space)
    xi[:M] = xi_cell[1:]
    xi[M] = 0.0
    xi_cell[0] = xi[0]
    lam[0] = (D[0] / eps_v) * xi_cell[0]
    mu[0] = F[0] * lam[0]

    w = np.empty_like(lam)
    for m in range(M + 1):
        w[m] = op.resolvent(params.beta * lam[m] + P[m])

    iters.reverse()
    return AdjointSolution(
        xi=xi,
        xi_cell=xi_cell,
        w=w,
        lam=lam,
        mu=mu,
        base=state,
        objective=objective,
        picard_iterations=iters,
    )


# --------------------------------------------------------------------------
# reduced gradient
# --------------------------------------------------------------------------

def reduced_gradient(
    params: ModelParams,
    law: FatigueLaw,
    kernel: HistoryKernel,
    load: np.ndarray,
    space: SpaceGrid,
    time: TimeGrid,
    objective: ObjectiveSpec,
    smoothing: SmoothingParams,
    *,
    picard_tol: float = DEFAULT_PICARD_TOL,
    max_picard: int = DEFAULT_MAX_PICARD,
) -> np.ndarray:
    """Gradient of the smoothed reduced objective in ``H^1(0,T; L^2)``.

    ``g = load + riesz_h1_time(w)`` where ``w`` is the nonlocal costate;
    the Riesz map converts the ``L^2``-density duality pairing produced by
    the adjoint into the control-space inner product, so
    ``h1_time_inner(g, d)`` is the directional derivative along ``d``.
    """
    _, g, _, _ = evaluate_with_gradient(
        params, law, kernel, load, space, time, objective, smoothing,
        picard_tol=picard_tol, max_picard=max_picard,
    )
    return g


def evaluate_with_gradient(
    params: ModelParams,
    law: FatigueLaw,
    kernel: HistoryKernel,
    load: np.ndarray,
    space: SpaceGrid,
    time: TimeGrid,
    objective: ObjectiveSpec,
    smoothing: SmoothingParams,
    *,
    picard_tol: float = DEFAULT_PICARD_TOL,
    max_picard: int = DEFAULT_MAX_PICARD,
) -> tuple:
    """Objective value and gradient sharing a single state solve.

    Returns ``(value, gradient, state, adjoint)``.
    """
    state = solve_state_regularized(
        params, law, kernel, load, space, time, smoothing,
        picard_tol=picard_tol, max_picard=max_picard,
    )
    value = objective_breakdown(state, objective)["total"]
    adj = solve_adjoint_regularized(
        state, objective, picard_tol=picard_tol, max_picard=max_picard
    )
    g = np.asarray(load, dtype=float) + riesz_h1_time(adj.w, space, time)
    return value, g, state, adj


# --------------------------------------------------------------------------
# finite-difference gradient audit
# --------------------------------------------------------------------------

@dataclass
class GradCheckResult:
    """Central-difference audit of the reduced gradient.

    Attributes
    ----------
    taus : np.ndarray
        Step-size schedule.
    analytic : np.ndarray
        ``h1_time_inner(g, d)`` per direction, shape ``(n_directions,)``.
    fd_values : np.ndarray
        Central difference quotients, shape ``(n_directions, n_taus)``.
    rel_errors : np.ndarray
        ``|fd - analytic| / max(1, |analytic|)`` per direction and tau.
    min_rel_error : float
        Smallest relative error over the whole table.
    """

    taus: np.ndarray
    analytic: np.ndarray
    fd_values: np.ndarray
    rel_errors: np.ndarray
    min_rel_error: float

    def min_per_direction(self) -> np.ndarray:
        return self.rel_errors.min(axis=1)

    def to_dict(self) -> dict:
        return {
            "taus": [float(t) for t in self.taus],
            "analytic": [float(v) for v in self.analytic],
            "fd_values": [[float(v) for v in row] for row in self.fd_values],
            "rel_errors": [[float(v) for v in row] for row in self.rel_errors],
            "min_rel_error": float(self.min_rel_error),
            "min_per_direction": [float(v) for v in self.min_per_direction()],
        }


DEFAULT_GRAD_TAUS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


def fd_gradient_check(
    params: ModelParams,
    law: FatigueLaw,
    kernel: HistoryKernel,
    load: np.ndarray,
    space: SpaceGrid,
    time: TimeGrid,
    objective: ObjectiveSpec,
    smoothing: SmoothingParams,
    *,
    directions: Optional[Sequence[np.ndarray]] = None,
    n_directions: int = 3,
    taus: Sequence[float] = DEFAULT_GRAD_TAUS,
    seed: int = 0,
    picard_tol: float = DEFAULT_PICARD_TOL,
    max_picard: int = DEFAULT_MAX_PICARD,
) -> GradCheckResult:
    """Audit ``h1_time_inner(g, d)`` against central differences of the
    smoothed reduced objective.

    Random directions (normalized in the control norm) are drawn from a
    seeded generator when none are supplied.
    """
    load = _check_traj(load, space, time, "load")
    if directions is None:
        rng = np.random.default_rng(seed)
        directions = []
        for _ in range(n_directions):
            d = rng.standard_normal((time.steps + 1, space.node_count))
            d /= max(h1_time_norm(d, space, time), 1e-300)
            directions.append(d)

    _, g, _, _ = evaluate_with_gradient(
        params, law, kernel, load, space, time, objective, smoothing,
        picard_tol=picard_tol, max_picard=max_picard,
    )

    def value_at(l):
        return reduced_objective(
            params, law, kernel, l, space, time, objective, smoothing,
            picard_tol=picard_tol, max_picard=max_picard,
        )

    taus_arr = np.asarray(list(taus), dtype=float)
    analytic = np.array(
        [h1_time_inner(g, d, space, time) for d in directions]
    )
    fd = np.empty((len(directions), taus_arr.size))
    for i, d in enumerate(directions):
        for j, tau in enumerate(taus_arr):
            fd[i, j] = (value_at(load + tau * d) - value_at(load - tau * d)) / (2.0 * tau)
    rel = np.abs(fd - analytic[:, None]) / np.maximum(1.0, np.abs(analytic))[:, None]
    return GradCheckResult(
        taus=taus_arr,
        analytic=analytic,
        fd_values=fd,
        rel_errors=rel,
        min_rel_error=float(rel.min()),
    )
