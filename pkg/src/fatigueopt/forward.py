"""Coupled state solver: implicit Euler in time, Picard iteration per step.

Each time step freezes the history slot (strict left-rectangle rule, so the
history at the new time level depends only on already-computed slots) and
solves the implicit update

    q_{k+1} = q_k + (dt / eps_v) * max( -B q_{k+1} + beta R load_{k+1}
                                        - f(H_{k+1}), 0 )

by Picard iteration, where ``R = (alpha A + beta I)^{-1}`` is the elliptic
resolvent (sparse LU, factorized once) and ``B = beta (I - beta R)`` is the
condensed coupling operator obtained by eliminating ``phi``.  ``B`` is
positive semidefinite with ``||B|| <= beta`` in the weighted norm, which
gives the Picard contraction factor ``dt * beta / eps_v`` and, with the
history Lipschitz constant, the reported a priori estimate
``dt * (beta + L_f * sup|a| * dt) / eps_v``.

The final assignment of each step goes through the fixed-point map itself,
so the increment ``q_{k+1} - q_k`` is exactly ``(dt/eps_v) * max(. , 0)`` of
a computed field: irreversibility holds exactly in floating point, not just
up to iteration tolerance.

The regularized solver replaces ``max(., 0)`` by its C^1 smoothing and the
fatigue law by its blended version; everything else is identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .grids import SpaceGrid, TimeGrid, _check_field, _check_traj, l2_norm
from .model import (
    FatigueLaw,
    HistoryKernel,
    ModelParams,
    SmoothingParams,
    _check_kernel,
    max_eps,
    max_plus,
)

__all__ = [
    "SolverError",
    "EllipticOperator",
    "StateSolution",
    "LipschitzProbeResult",
    "solve_elliptic",
    "solve_state",
    "solve_state_regularized",
    "lipschitz_probe",
    "DEFAULT_PICARD_TOL",
    "DEFAULT_MAX_PICARD",
    "ELLIPTIC_RESIDUAL_TOL",
]

DEFAULT_PICARD_TOL = 1e-12
DEFAULT_MAX_PICARD = 200
ELLIPTIC_RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    """Raised when an iterative solve fails to reach its tolerance.

    Attributes
    ----------
    step : int or None
        Time-step index at which the failure occurred, if applicable.
    residual : float
        Last residual / update size observed.
    suggestion : str
        Hint on how to make the solve converge.
    """

    def __init__(self, message: str, *, step: Optional[int] = None,
                 residual: float = np.nan, suggestion: str = ""):
        super().__init__(message)
        self.step = step
        self.residual = residual
        self.suggestion = suggestion


class EllipticOperator:
    """Cached factorization of the screened Neumann operator.

    Solves ``(alpha A + beta I) u = r`` via the symmetric sparse form
    ``(alpha K + beta W) u = W r`` with a single LU factorization, and
    exposes the derived actions used by the time steppers:

    - ``resolvent(r)``: ``R r = (alpha A + beta I)^{-1} r``,
    - ``solve_phi(q, load)``: ``phi = R (beta q + load)``,
    - ``apply_condensed(v)``: ``B v = beta (v - beta R v)``.

    ``beta R`` is the inverse of an M-matrix scaled system: it preserves
    constants and satisfies ``sup |beta R r| <= sup |r|``.
    """

    def __init__(self, params: ModelParams, space: SpaceGrid):
        self.params = params
        self.space = space
        W = sp.diags(space.weights)
        matrix = (params.alpha * space.stiffness + params.beta * W).tocsc()
        self._lu = splu(matrix)
        self._matrix = matrix

    def resolvent(self, r: np.ndarray) -> np.ndarray:
        """``(alpha A + beta I)^{-1} r``."""
        return self._lu.solve(self.space.weights * r)

    def solve_phi(self, q: np.ndarray, load: np.ndarray) -> np.ndarray:
        """Nonlocal field ``phi`` from ``alpha A phi + beta (phi - q) = load``."""
        return self.resolvent(self.params.beta * q + load)

    def apply_condensed(self, v: np.ndarray) -> np.ndarray:
        """Condensed coupling ``B v = beta (v - beta R v)``; PSD, kills constants."""
        return self.params.beta * (v - self.params.beta * self.resolvent(v))

    def residual(self, u: np.ndarray, r: np.ndarray) -> float:
        """Relative algebraic residual of ``(alpha K + beta W) u = W r``."""
        rhs = self.space.weights * r
        res = self._matrix @ u - rhs
        denom = max(float(np.linalg.norm(rhs)), 1e-300)
        return float(np.linalg.norm(res)) / denom


def solve_elliptic(
    params: ModelParams,
    q: np.ndarray,
    load: np.ndarray,
    space: SpaceGrid,
    operator: Optional[EllipticOperator] = None,
) -> np.ndarray:
    """Solve ``alpha A phi + beta (phi - q) = load`` on one time slice.

    Parameters
    ----------
    params : ModelParams
        Coefficients ``alpha, beta`` (viscosity unused here).
    q : np.ndarray
        Local damage field (source through the coupling).
    load : np.ndarray
        External load field.
    space : SpaceGrid
        Spatial grid.
    operator : EllipticOperator, optional
        Reusable cached factorization; built on the fly if omitted.

    Returns
    -------
    np.ndarray
        The field ``phi``.

    Raises
    ------
    SolverError
        If the algebraic residual exceeds the documented bound.
    """
    q = _check_field(q, space, "q")
    load = _check_field(load, space, "load")
    op = operator if operator is not None else EllipticOperator(params, space)
    rhs = params.beta * q + load
    phi = op.resolvent(rhs)
    res = op.residual(phi, rhs)
    if not np.isfinite(res) or res > ELLIPTIC_RESIDUAL_TOL:
        raise SolverError(
            f"elliptic solve residual {res:.3e} exceeds {ELLIPTIC_RESIDUAL_TOL:.1e}",
            residual=res,
            suggestion="check coefficient magnitudes and grid conditioning",
        )
    return phi


# --------------------------------------------------------------------------
# time integration
# --------------------------------------------------------------------------

@dataclass
class StateSolution:
    """Solution of the coupled evolution on the full time grid.

    All trajectories have shape ``(steps+1, node_count)``.  The stored
    ``z`` satisfies the defining identity
    ``z = -beta (q - phi) - f(H)`` (with the smoothed ``f`` when
    ``regularized``) exactly at the stored fields.

    Attributes
    ----------
    q, phi, z, history : np.ndarray
        Local damage, nonlocal field, activation argument, history ``H(q)``.
    regularized : bool
        Whether the C^1-smoothed dynamics produced this solution.
    smoothing : SmoothingParams or None
        Widths used when ``regularized``.
    params, law, kernel : model data the solution was computed with.
    load : np.ndarray
        The control/load trajectory used.
    space, time : grids.
    picard_iterations : list of int
        Iterations used per time step.
    contraction_estimate : float
        A priori Picard contraction bound ``dt (beta + L_f sup|a| dt)/eps_v``.
    """

    q: np.ndarray
    phi: np.ndarray
    z: np.ndarray
    history: np.ndarray
    regularized: bool
    smoothing: Optional[SmoothingParams]
    params: ModelParams
    law: FatigueLaw
    kernel: HistoryKernel
    load: np.ndarray
    space: SpaceGrid
    time: TimeGrid
    picard_iterations: list = field(default_factory=list, repr=False)
    contraction_estimate: float = np.nan

    def max_picard_iterations(self) -> int:
        return max(self.picard_iterations) if self.picard_iterations else 0


def _contraction_estimate(
    params: ModelParams, law: FatigueLaw, kernel: HistoryKernel, dt: float
) -> float:
    return dt * (params.beta + law.slope * kernel.max_abs() * dt) / params.viscosity


def _integrate(
    params: ModelParams,
    law: FatigueLaw,
    kernel: HistoryKernel,
    load: np.ndarray,
    space: SpaceGrid,
    time: TimeGrid,
    smoothing: Optional[SmoothingParams],
    picard_tol: float,
    max_picard: int,
) -> StateSolution:
    """Shared implicit-Euler loop for the exact and smoothed dynamics."""
    load = _check_traj(load, space, time, "load")
    _check_kernel(kernel, space, time)
    op = EllipticOperator(params, space)
    M, dt, eps_v = time.steps, time.dt, params.viscosity
    a = kernel.samples

    if smoothing is None:
        def f_of(H):
            return law.value(H)

        def activate(zz):
            return max_plus(zz)
    else:
        def f_of(H):
            return law.smoothed_value(H, smoothing.eps_f)

        def activate(zz):
            return max_eps(zz, smoothing.eps_max)

    q = time.zeros(space)
    phi = time.zeros(space)
    z = time.zeros(space)
    history = time.zeros(space)
    iters: list = []

    history[0] = kernel.offset
    phi[0] = op.solve_phi(q[0], load[0])
    z[0] = -params.beta * (q[0] - phi[0]) - f_of(history[0])

    contraction = _contraction_estimate(params, law, kernel, dt)

    for k in range(M):
        history[k + 1] = kernel.offset + dt * (a[k + 1 : 0 : -1] @ q[: k + 1])
        fH = f_of(history[k + 1])
        # affine part of z at the new level, without the -B y feedback
        base = params.beta * op.resolvent(load[k + 1]) - fH

        y = q[k].copy()
        converged = False
        update = np.inf
        with np.errstate(over="ignore", invalid="ignore"):
            for it in range(1, max_picard + 1):
                z_cand = base - op.apply_condensed(y)
                y_new = q[k] + (dt / eps_v) * activate(z_cand)
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
                f"Picard iteration diverged or stalled at step {k + 1}: "
                f"update {update:.3e} after {it} iterations "
                f"(contraction estimate {contraction:.3e})",
                step=k + 1,
                residual=update,
                suggestion="reduce dt or increase viscosity so that "
                "dt*beta/viscosity < 1",
            )
        iters.append(it)
        # one last pass through the map: the increment is exactly
        # (dt/eps_v) * activate(.), so irreversibility holds in floating point
        z_cand = base - op.apply_condensed(y)
        q[k + 1] = q[k] + (dt / eps_v) * activate(z_cand)
        phi[k + 1] = op.solve_phi(q[k + 1], load[k + 1])
        z[k + 1] = -params.beta * (q[k + 1] - phi[k + 1]) - fH

    return StateSolution(
        q=q,
        phi=phi,
        z=z,
        history=history,
        regularized=smoothing is not None,
        smoothing=smoothing,
        params=params,
        law=law,
        kernel=kernel,
        load=load,
        space=space,
        time=time,
        picard_iterations=iters,
        contraction_estimate=contraction,
    )


def solve_state(
    params: ModelParams,
    law: FatigueLaw,
    kernel: HistoryKernel,
    load: np.ndarray,
    space: SpaceGrid,
    time: TimeGrid,
    *,
    picard_tol: float = DEFAULT_PICARD_TOL,
    max_picard: int = DEFAULT_MAX_PICARD,
) -> StateSolution:
    """Solve the nonsmooth coupled evolution.

    Parameters
    ----------
    params, law, kernel : model data.
    load : np.ndarray
        Control/load trajectory, shape ``(steps+1, node_count)``.
    space, time : grids.
    picard_tol : float
        Relative per-step fixed-point tolerance.
    max_picard : int
        Iteration cap per step.

    Returns
    -------
    StateSolution
        With ``q`` nondecreasing in time exactly (entrywise, in floating
        point) and ``q[0] = 0``.

    Raises
    ------
    SolverError
        On Picard stall; the message reports the step, the last update size
        and the a priori contraction estimate.
    """
    return _integrate(
        params, law, kernel, load, space, time, None, picard_tol, max_picard
    )


def solve_state_regularized(
    params: ModelParams,
    law: FatigueLaw,
    kernel: HistoryKernel,
    load: np.ndarray,
    space: SpaceGrid,
    time: TimeGrid,
    smoothing: SmoothingParams,
    *,
    picard_tol: float = DEFAULT_PICARD_TOL,
    max_picard: int = DEFAULT_MAX_PICARD,
) -> StateSolution:
    """Solve the C^1-smoothed evolution (same scheme, smoothed nonlinearities).

    The smoothed activation is bounded below by 0, so irreversibility again
    holds exactly.  As the smoothing widths shrink, the solution approaches
    the nonsmooth one at a rate set by ``sup |max_eps - max| = eps_max/2``
    and ``sup |f_eps - f| = slope * eps_f / 8``.
    """
    return _integrate(
        params, law, kernel, load, space, time, smoothing, picard_tol, max_picard
    )


# --------------------------------------------------------------------------
# Lipschitz probe
# --------------------------------------------------------------------------

@dataclass
class LipschitzProbeResult:
    """Empirical stability ratio of the control-to-state map.

    Attributes
    ----------
    ratio : float
        ``||q1 - q2||_{H^1(L^2)} / ||load1 - load2||_{L^2(L^2)}``.
    numerator, denominator : float
        The two norms.
    degenerate : bool
        True when the loads coincide (denominator below rounding scale);
        the ratio is then reported as ``inf`` if the states differ, else 0.
    """

    ratio: float
    numerator: float
    denominator: float
    degenerate: bool


def lipschitz_probe(
    params: ModelParams,
    law: FatigueLaw,
    kernel: HistoryKernel,
    load1: np.ndarray,
    load2: np.ndarray,
    space: SpaceGrid,
    time: TimeGrid,
    *,
    picard_tol: float = DEFAULT_PICARD_TOL,
    max_picard: int = DEFAULT_MAX_PICARD,
) -> LipschitzProbeResult:
    """Quotient ``||S(l1) - S(l2)||_{H^1(L^2)} / ||l1 - l2||_{L^2(L^2)}``.

    Solves the nonsmooth state for both loads and reports the stability
    ratio witnessing the Lipschitz property of the control-to-state map.
    """
    from .grids import h1_time_norm, l2_time_norm

    s1 = solve_state(params, law, kernel, load1, space, time,
                     picard_tol=picard_tol, max_picard=max_picard)
    s2 = solve_state(params, law, kernel, load2, space, time,
                     picard_tol=picard_tol, max_picard=max_picard)
    num = h1_time_norm(s1.q - s2.q, space, time)
    den = l2_time_norm(np.asarray(load1) - np.asarray(load2), space, time)
    tiny = 1e-14 * max(1.0, float(np.max(np.abs(load1))), float(np.max(np.abs(load2))))
    if den <= tiny:
        return LipschitzProbeResult(
            ratio=np.inf if num > 0.0 else 0.0,
            numerator=num,
            denominator=den,
            degenerate=True,
        )
    return LipschitzProbeResult(num / den, num, den, False)
