"""Directional sensitivities of the state map and their finite-difference audit.

``solve_linearized`` differentiates the time stepper that produced a given
:class:`~fatigueopt.forward.StateSolution`, in the exact direction-dependent
sense:

- for a nonsmooth base state the update uses the one-sided rules
  ``max'(z; h)`` and ``f'(H; h)`` with exact (tolerance-free) branch
  selection at ``z == 0`` and at the fatigue kinks, which preserves positive
  homogeneity of the map ``direction -> sensitivity``;
- for a regularized base state the update uses the classical derivatives
  ``max_eps'(z)`` and ``f_eps'(H)`` and the map is linear.

The scheme mirrors the forward one exactly: frozen history slots
(strict left-rectangle), implicit Euler, per-step Picard iteration with the
same contraction factor.  Occurrences of the measure-zero branch points in
the discrete data (``z == 0`` exactly, ``H`` exactly at a kink) are counted
and reported on the solution object.

``fd_directional_check`` compares difference quotients of the state map
against the computed sensitivity over a schedule of step sizes and reports
the error curve; for smoothed dynamics the error decays linearly until it
hits the solver-tolerance floor.
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
from .grids import _check_traj, h1_time_norm, l2_norm
from .model import max_dir, max_eps_prime

__all__ = [
    "LinearizedSolution",
    "FDCheckResult",
    "solve_linearized",
    "fd_directional_check",
    "DEFAULT_TAU_SCHEDULE",
]

DEFAULT_TAU_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)


@dataclass
class LinearizedSolution:
    """Directional sensitivity of the state along one control direction.

    Attributes
    ----------
    dq, dphi : np.ndarray
        Sensitivities of the two fields, shape ``(steps+1, node_count)``.
    base : StateSolution
        The state the dynamics were differentiated at.
    direction : np.ndarray
        The control direction used.
    activation_boundary_hits : int
        Number of (step, node) pairs with ``z == 0`` exactly, where the
        one-sided rule ``max(h, 0)`` was engaged (nonsmooth base only).
    kink_hits : int
        Number of (step, node) pairs with the history exactly at a fatigue
        kink, where the one-sided slopes differ (nonsmooth base only).
    picard_iterations : list of int
        Iterations used per time step.
    """

    dq: np.ndarray
    dphi: np.ndarray
    base: StateSolution
    direction: np.ndarray
    activation_boundary_hits: int = 0
    kink_hits: int = 0
    picard_iterations: list = field(default_factory=list, repr=False)


def solve_linearized(
    base: StateSolution,
    direction: np.ndarray,
    *,
    picard_tol: float = DEFAULT_PICARD_TOL,
    max_picard: int = DEFAULT_MAX_PICARD,
) -> LinearizedSolution:
    """Solve the sensitivity system along a control direction.

    Parameters
    ----------
    base : StateSolution
        Base state; its ``regularized`` flag selects one-sided vs smoothed
        derivative rules.
    direction : np.ndarray
        Control direction, shape ``(steps+1, node_count)``.
    picard_tol, max_picard :
        Per-step fixed-point controls (same meaning as in the state solver).

    Returns
    -------
    LinearizedSolution
        With ``dq[0] = 0`` and ``dphi`` solving the linearized elliptic
        equation at every slot.
    """
    space, time = base.space, base.time
    direction = _check_traj(direction, space, time, "direction")
    params, law, kernel = base.params, base.law, base.kernel
    op = EllipticOperator(params, space)
    M, dt, eps_v = time.steps, time.dt, params.viscosity
    a = kernel.samples
    smoothing = base.smoothing

    dq = time.zeros(space)
    dphi = time.zeros(space)
    dphi[0] = op.resolvent(direction[0])

    boundary_hits = 0
    kink_hits = 0
    iters: list = []

    if smoothing is not None:
        D = max_eps_prime(base.z, smoothing.eps_max)
        F = law.smoothed_slope(base.history, smoothing.eps_f)

    for k in range(M):
        dH = dt * (a[k + 1 : 0 : -1] @ dq[: k + 1])
        if smoothing is None:
            z_level = base.z[k + 1]
            fdir = law.directional(base.history[k + 1], dH)
            boundary_hits += int(np.count_nonzero(z_level == 0.0))
            right, left = law.onesided_slopes(base.history[k + 1])
            kink_hits += int(np.count_nonzero(np.asarray(right) != np.asarray(left)))
            base_term = params.beta * op.resolvent(direction[k + 1]) - fdir

            def update(y):
                return dq[k] + (dt / eps_v) * max_dir(
                    z_level, base_term - op.apply_condensed(y)
                )
        else:
            Dk = D[k + 1]
            base_term = Dk * (
                params.beta * op.resolvent(direction[k + 1]) - F[k + 1] * dH
            )

            def update(y):
                return dq[k] + (dt / eps_v) * (
                    base_term - Dk * op.apply_condensed(y)
                )

        y = dq[k].copy()
        converged = False
        update_size = np.inf
        with np.errstate(over="ignore", invalid="ignore"):
            for it in range(1, max_picard + 1):
                y_new = update(y)
                update_size = l2_norm(y_new - y, space)
                scale = max(1.0, l2_norm(y_new, space))
                y = y_new
                if not (np.isfinite(update_size) and np.isfinite(scale)):
                    break
                if update_size <= picard_tol * scale:
                    converged = True
                    break
        if not converged:
            raise SolverError(
                f"linearized Picard iteration diverged or stalled at step "
                f"{k + 1}: update {update_size:.3e} after {it} iterations",
                step=k + 1,
                residual=update_size,
                suggestion="reduce dt or increase viscosity",
            )
        iters.append(it)
        dq[k + 1] = update(y)
        dphi[k + 1] = op.resolvent(params.beta * dq[k + 1] + direction[k + 1])

    return LinearizedSolution(
        dq=dq,
        dphi=dphi,
        base=base,
        direction=direction,
        activation_boundary_hits=boundary_hits,
        kink_hits=kink_hits,
        picard_iterations=iters,
    )


# --------------------------------------------------------------------------
# finite-difference audit
# --------------------------------------------------------------------------

@dataclass
class FDCheckResult:
    """Error curve of the finite-difference sensitivity audit.

    For each step size ``tau`` the error is
    ``e(tau) = || (S(l + tau d) - S(l)) / tau - dq ||_{H^1(L^2)}``.

    Attributes
    ----------
    taus, errors : np.ndarray
        The schedule and the error values.
    floor : float
        Flat part of the noise floor (scaled from the smallest observed
        error).  The verdict additionally allows the rounding amplification
        intrinsic to difference quotients, which grows like ``1/tau``: the
        per-``tau`` floor is ``floor + rounding/tau``.
    decreasing_to_floor : bool
        True when the curve is nonincreasing up to 5 percent wiggle room
        until it reaches the (per-``tau``) floor.
    slope : float or None
        Log-log least-squares slope over the points above the floor;
        None when fewer than two points remain above it.
    """

    taus: np.ndarray
    errors: np.ndarray
    floor: float
    decreasing_to_floor: bool
    slope: Optional[float]

    def to_dict(self) -> dict:
        return {
            "taus": [float(t) for t in self.taus],
            "errors": [float(e) for e in self.errors],
            "floor": float(self.floor),
            "decreasing_to_floor": bool(self.decreasing_to_floor),
            "slope": None if self.slope is None else float(self.slope),
        }


def _verdict(
    taus: np.ndarray, errors: np.ndarray, rounding: float = 0.0
) -> FDCheckResult:
    floor = 3.0 * float(np.min(errors)) + 1e-14
    floors = floor + rounding / taus
    ok = True
    for i in range(len(errors) - 1):
        if errors[i + 1] > max(1.05 * errors[i], floors[i + 1]):
            ok = False
            break
    above = errors > floors
    slope = None
    if int(np.count_nonzero(above)) >= 2:
        slope = float(
            np.polyfit(np.log(taus[above]), np.log(errors[above]), 1)[0]
        )
    return FDCheckResult(
        taus=np.asarray(taus, dtype=float),
        errors=np.asarray(errors, dtype=float),
        floor=floor,
        decreasing_to_floor=ok,
        slope=slope,
    )


def fd_directional_check(
    base: StateSolution,
    direction: np.ndarray,
    *,
    taus: Sequence[float] = DEFAULT_TAU_SCHEDULE,
    picard_tol: float = DEFAULT_PICARD_TOL,
    max_picard: int = DEFAULT_MAX_PICARD,
) -> FDCheckResult:
    """Audit the sensitivity against forward difference quotients.

    Re-solves the state (with the same smoothing as the base, if any) at the
    perturbed controls ``load + tau * direction`` for each ``tau`` in the
    schedule and assembles the error curve in the ``H^1(0,T; L^2)`` norm.

    Returns
    -------
    FDCheckResult
        The per-``tau`` errors with the monotone-decrease verdict and the
        fitted convergence rate above the noise floor.
    """
    space, time = base.space, base.time
    direction = _check_traj(direction, space, time, "direction")
    lin = solve_linearized(
        base, direction, picard_tol=picard_tol, max_picard=max_picard
    )

    errors = []
    for tau in taus:
        load_tau = base.load + tau * direction
        if base.regularized:
            pert = solve_state_regularized(
                base.params, base.law, base.kernel, load_tau, space, time,
                base.smoothing, picard_tol=picard_tol, max_picard=max_picard,
            )
        else:
            pert = solve_state(
                base.params, base.law, base.kernel, load_tau, space, time,
                picard_tol=picard_tol, max_picard=max_picard,
            )
        quotient = (pert.q - base.q) / tau
        errors.append(h1_time_norm(quotient - lin.dq, space, time))
    rounding = 1e-12 * max(1.0, h1_time_norm(base.q, space, time))
    return _verdict(
        np.asarray(list(taus), dtype=float), np.asarray(errors), rounding
    )
