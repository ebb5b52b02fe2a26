"""Stationarity-system checkers for candidate optimal points.

Given a candidate control with its nonsmooth state, a costate pair
``(xi, w)`` and multipliers ``(lambda, mu)``, this module grades the
first-order systems of increasing strength:

- ``limit`` mode: the costate equations, the multiplier identities on the
  inactive sets (``lambda = xi/eps_v`` where the activation is strictly
  positive, ``lambda = 0`` where it is strictly negative, ``mu`` in the
  one-sided-slope hull off the fatigue kinks), and the control-gradient
  equation ``load + riesz(w) = 0``;
- ``improved`` mode: additionally the sign conditions involving the
  reversed-time accumulators ``G+`` / ``G-`` built from the kink set
  (``0 <= lambda <= (xi + G+)/eps_v`` on the activation boundary,
  ``G- <= 0 <= G+`` where the activation is positive);
- ``strong`` mode: the sharper sign conditions without accumulators
  (``0 <= lambda <= xi/eps_v`` on the boundary, and
  ``f'_+ lambda <= mu <= f'_- lambda`` on the kink set).

For a nonnegative kernel the strong-mode inequalities imply the
improved-mode ones: the ``G±`` integrands are then sign-definite, and no
cancellation occurs in the accumulators, so the implication survives in
floating point verbatim.  Both sign statistics are always computed and
reported; the mode only decides which ones are graded.

Set membership uses absolute tolerances ``tol_z`` / ``tol_f`` (defaulting
to ``1e-6`` times a data scale).  All pointwise grading runs on the time
cells ``1..M``; the reported discretization tolerance is
``C_model * (dt + eps_used) * scale`` with the printed model constant
``C_model = (1 + beta + T sup|a|) / min(1, eps_v)``, against which callers
can compare residuals across refinement levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adjoint import ObjectiveSpec, _phi_weight_field
from .forward import StateSolution
from .grids import (
    _check_traj,
    h1_time_inner,
    h1_time_norm,
    riesz_h1_time,
)
from .linearized import solve_linearized
from .model import history_adjoint_apply

__all__ = [
    "ActiveSets",
    "MultiplierBundle",
    "ViolationStats",
    "StationarityReport",
    "BStatProbeResult",
    "classify_active_sets",
    "extract_multipliers",
    "compute_G",
    "check_system",
    "b_stationarity_probe",
    "MODES",
]

MODES = ("limit", "improved", "strong")


@dataclass
class ActiveSets:
    """Tolerance-banded partition of the activation argument and kink set.

    Attributes
    ----------
    z_pos, z_zero, z_neg : np.ndarray
        Boolean masks (same shape as ``z``): ``z > tol_z``,
        ``|z| <= tol_z``, ``z < -tol_z``.
    kink : np.ndarray
        Mask of nodes whose history lies within ``tol_f`` of a fatigue-law
        kink.
    tol_z, tol_f : float
        The tolerances used.
    """

    z_pos: np.ndarray
    z_zero: np.ndarray
    z_neg: np.ndarray
    kink: np.ndarray
    tol_z: float
    tol_f: float


def classify_active_sets(
    state: StateSolution,
    tol_z: Optional[float] = None,
    tol_f: Optional[float] = None,
) -> ActiveSets:
    """Partition nodes by activation sign and kink proximity.

    Default tolerances are ``1e-6`` times ``max(1, sup|z|)`` respectively
    ``max(1, sup|H|)``.
    """
    z = state.z
    H = state.history
    if tol_z is None:
        tol_z = 1e-6 * max(1.0, float(np.max(np.abs(z))))
    if tol_f is None:
        tol_f = 1e-6 * max(1.0, float(np.max(np.abs(H))))
    kink = np.zeros_like(H, dtype=bool)
    for loc in _kink_locations(state):
        kink |= np.abs(H - loc) <= tol_f
    return ActiveSets(
        z_pos=z > tol_z,
        z_zero=np.abs(z) <= tol_z,
        z_neg=z < -tol_z,
        kink=kink,
        tol_z=float(tol_z),
        tol_f=float(tol_f),
    )


def _kink_locations(state: StateSolution) -> list:
    law = state.law
    locs = []
    if law.degrades:
        locs.append(law.threshold)
        if np.isfinite(law.floor_onset):
            locs.append(law.floor_onset)
    return locs


@dataclass
class MultiplierBundle:
    """Activation/history multipliers and optional reversed-time accumulators.

    Attributes
    ----------
    lam, mu : np.ndarray
        Multiplier trajectories.
    G_plus, G_minus : np.ndarray or None
        Accumulators from :func:`compute_G`; None until computed.
    """

    lam: np.ndarray
    mu: np.ndarray
    G_plus: Optional[np.ndarray] = None
    G_minus: Optional[np.ndarray] = None


def extract_multipliers(adjoint) -> MultiplierBundle:
    """Multiplier bundle from an :class:`~fatigueopt.adjoint.AdjointSolution`."""
    return MultiplierBundle(lam=adjoint.lam.copy(), mu=adjoint.mu.copy())


def compute_G(
    state: StateSolution,
    bundle: MultiplierBundle,
    sets: ActiveSets,
) -> MultiplierBundle:
    """Fill the reversed-time accumulators ``G+`` / ``G-`` of the bundle.

    ``G±(t) = integral_t^T (H'* [chi_kink (-lambda f'_± + mu)])(s) ds``
    with the one-sided slopes taken at the kink abscissae; the outer
    integral uses the left-rectangle rule
    ``G_k = G_{k+1} + dt v_k``, ``G_M = 0``.

    For a nonnegative kernel the transpose preserves entrywise signs, and
    the cumulative sums add same-sign terms only, so sign-definite
    integrands yield sign-definite accumulators exactly in floating point.

    Returns the same bundle object with ``G_plus`` / ``G_minus`` set.
    """
    space, time = state.space, state.time
    lam = _check_traj(bundle.lam, space, time, "lam")
    mu = _check_traj(bundle.mu, space, time, "mu")
    law = state.law
    H = state.history

    integrand_p = np.zeros_like(lam)
    integrand_m = np.zeros_like(lam)
    for loc in _kink_locations(state):
        mask = (np.abs(H - loc) <= sets.tol_f) & sets.kink
        if not mask.any():
            continue
        f_right, f_left = law.onesided_slopes(loc)
        integrand_p[mask] = -lam[mask] * f_right + mu[mask]
        integrand_m[mask] = -lam[mask] * f_left + mu[mask]

    def accumulate(integrand):
        v = history_adjoint_apply(state.kernel, integrand, space, time)
        G = np.zeros_like(v)
        M = time.steps
        # G_k = dt * sum_{j=k}^{M-1} v_j  via a reversed cumulative sum
        suffix = np.cumsum(v[M - 1 :: -1], axis=0)[::-1]
        G[:M] = time.dt * suffix
        return G

    bundle.G_plus = accumulate(integrand_p)
    bundle.G_minus = accumulate(integrand_m)
    return bundle


# --------------------------------------------------------------------------
# system grading
# --------------------------------------------------------------------------

@dataclass
class ViolationStats:
    """Pointwise violation summary over a masked set of (cell, node) pairs.

    ``count`` uses strict positivity of the violation magnitude, so
    exactly-feasible data reports zero; ``measure`` is the quadrature
    space-time measure of the violating set.
    """

    count: int
    max_violation: float
    measure: float

    def to_dict(self) -> dict:
        return {
            "count": int(self.count),
            "max_violation": float(self.max_violation),
            "measure": float(self.measure),
        }


def _stats(
    violation: np.ndarray, mask: np.ndarray, state: StateSolution
) -> ViolationStats:
    v = np.where(mask, violation, 0.0)
    v = v[1:]  # grade on time cells 1..M
    bad = v > 0.0
    measure = float(state.time.dt * (bad @ state.space.weights).sum())
    return ViolationStats(
        count=int(np.count_nonzero(bad)),
        max_violation=float(v.max()) if v.size else 0.0,
        measure=measure,
    )


@dataclass
class StationarityReport:
    """Graded residuals of one stationarity system.

    All norms are right-cell ``L^2(0,T; L^2)`` quadrature norms unless noted.

    Attributes
    ----------
    mode : str
        One of :data:`MODES`.
    adjoint_residual_q : float
        Residual of the backward-difference costate equation.
    terminal_xi : float
        ``sup |xi[M]|`` (terminal condition).
    adjoint_residual_phi : float
        Residual of the elliptic costate equation.
    kkt_inactive_residual : float
        Max-norm violation of the multiplier identities on the inactive sets.
    sign_violations_weak, sign_violations_strong : ViolationStats
        Accumulator-based respectively sharp sign-condition statistics;
        both always computed, the mode decides which is graded.
    gradient_residual : float
        ``|| load + riesz(w) ||`` in the control norm.
    b_stat_min : float or None
        Filled by :func:`b_stationarity_probe` when run through the CLI.
    strong_stationarity_applicable : bool
        True when the kink set is empty (strong mode is then a certificate).
    disc_tol : float
        Reported discretization tolerance
        ``C_model (dt + eps_used) scale``.
    reference_scale, model_constant, eps_used, tol_z, tol_f : float
        Ingredients of ``disc_tol`` and the set tolerances.
    graded_residuals : dict
        The residuals this mode grades, by name.
    details : dict
        Per-condition diagnostics.
    """

    mode: str
    adjoint_residual_q: float
    terminal_xi: float
    adjoint_residual_phi: float
    kkt_inactive_residual: float
    sign_violations_weak: ViolationStats
    sign_violations_strong: ViolationStats
    gradient_residual: float
    b_stat_min: Optional[float]
    strong_stationarity_applicable: bool
    disc_tol: float
    reference_scale: float
    model_constant: float
    eps_used: float
    tol_z: float
    tol_f: float
    graded_residuals: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "adjoint_residual_q": float(self.adjoint_residual_q),
            "terminal_xi": float(self.terminal_xi),
            "adjoint_residual_phi": float(self.adjoint_residual_phi),
            "kkt_inactive_residual": float(self.kkt_inactive_residual),
            "sign_violations_weak": self.sign_violations_weak.to_dict(),
            "sign_violations_strong": self.sign_violations_strong.to_dict(),
            "gradient_residual": float(self.gradient_residual),
            "b_stat_min": None if self.b_stat_min is None else float(self.b_stat_min),
            "strong_stationarity_applicable": bool(self.strong_stationarity_applicable),
            "disc_tol": float(self.disc_tol),
            "reference_scale": float(self.reference_scale),
            "model_constant": float(self.model_constant),
            "eps_used": float(self.eps_used),
            "tol_z": float(self.tol_z),
            "tol_f": float(self.tol_f),
            "graded_residuals": {k: float(v) for k, v in self.graded_residuals.items()},
            "details": self.details,
        }
        return out


def _cell_l2_norm(r: np.ndarray, state: StateSolution) -> float:
    cells = (r[1:] * r[1:]) @ state.space.weights
    return float(np.sqrt(max(state.time.dt * cells.sum(), 0.0)))


def check_system(
    state: StateSolution,
    xi: np.ndarray,
    w: np.ndarray,
    bundle: MultiplierBundle,
    objective: ObjectiveSpec,
    *,
    mode: str = "limit",
    sets: Optional[ActiveSets] = None,
    tol_z: Optional[float] = None,
    tol_f: Optional[float] = None,
    eps_used: float = 0.0,
) -> StationarityReport:
    """Grade a candidate against one stationarity system.

    Parameters
    ----------
    state : StateSolution
        Nonsmooth (or smoothed) state of the candidate control; the control
        itself is taken from ``state.load``.
    xi, w : np.ndarray
        Costate trajectories in the export slot convention.
    bundle : MultiplierBundle
        Multipliers; accumulators are computed here if missing and a mode
        needs them (they are always reported).
    objective : ObjectiveSpec
        Tracking data defining the costate sources.
    mode : str
        ``limit``, ``improved`` or ``strong``.
    sets : ActiveSets, optional
        Precomputed partition; classified here otherwise.
    eps_used : float
        Smoothing width the multipliers came from; enters the reported
        discretization tolerance.

    Returns
    -------
    StationarityReport
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    space, time = state.space, state.time
    xi = _check_traj(xi, space, time, "xi")
    w = _check_traj(w, space, time, "w")
    lam = _check_traj(bundle.lam, space, time, "lam")
    mu = _check_traj(bundle.mu, space, time, "mu")
    q_d = _check_traj(objective.q_target, space, time, "q_target")
    params, law = state.params, state.law
    dt, eps_v = time.dt, params.viscosity

    if sets is None:
        sets = classify_active_sets(state, tol_z, tol_f)
    if bundle.G_plus is None or bundle.G_minus is None:
        compute_G(state, bundle, sets)
    G_plus, G_minus = bundle.G_plus, bundle.G_minus

    # ---- costate equations ----------------------------------------------
    Hstar_mu = history_adjoint_apply(state.kernel, mu, space, time)
    resid_q = np.zeros_like(xi)
    resid_q[1:] = (
        -(xi[1:] - xi[:-1]) / dt
        - params.beta * (w[1:] - lam[1:])
        + Hstar_mu[1:]
        - (state.q[1:] - q_d[1:])
    )
    adjoint_residual_q = _cell_l2_norm(resid_q, state)
    terminal_xi = float(np.max(np.abs(xi[time.steps])))

    resid_phi = np.zeros_like(w)
    for m in range(time.steps + 1):
        P_m = _phi_weight_field(objective, state.phi[m], space)
        Aw = (space.stiffness @ w[m]) / space.weights
        resid_phi[m] = params.alpha * Aw + params.beta * w[m] \
            - params.beta * lam[m] - P_m
    adjoint_residual_phi = _cell_l2_norm(resid_phi, state)

    # ---- multiplier identities on the inactive sets ----------------------
    viol_pos = np.abs(lam - xi / eps_v)
    viol_neg = np.abs(lam)
    f_right, f_left = law.onesided_slopes(state.history)
    lo = np.minimum(f_right * lam, f_left * lam)
    hi = np.maximum(f_right * lam, f_left * lam)
    viol_offkink = np.maximum(lo - mu, 0.0) + np.maximum(mu - hi, 0.0)
    kkt_parts = {
        "lambda_on_active": _stats(viol_pos, sets.z_pos, state),
        "lambda_on_inactive": _stats(viol_neg, sets.z_neg, state),
        "mu_off_kink": _stats(viol_offkink, ~sets.kink, state),
    }
    kkt_inactive_residual = max(p.max_violation for p in kkt_parts.values())

    # ---- sign conditions --------------------------------------------------
    weak_boundary = np.maximum(-lam, 0.0) + np.maximum(
        lam - (xi + G_plus) / eps_v, 0.0
    )
    weak_active = np.maximum(G_minus, 0.0) + np.maximum(-G_plus, 0.0)
    weak_stats_boundary = _stats(weak_boundary, sets.z_zero, state)
    weak_stats_active = _stats(weak_active, sets.z_pos, state)
    sign_weak = ViolationStats(
        count=weak_stats_boundary.count + weak_stats_active.count,
        max_violation=max(
            weak_stats_boundary.max_violation, weak_stats_active.max_violation
        ),
        measure=weak_stats_boundary.measure + weak_stats_active.measure,
    )

    strong_boundary = np.maximum(-lam, 0.0) + np.maximum(lam - xi / eps_v, 0.0)
    strong_kink = np.zeros_like(lam)
    for loc in _kink_locations(state):
        mask = (np.abs(state.history - loc) <= sets.tol_f) & sets.kink
        if not mask.any():
            continue
        fr, fl = law.onesided_slopes(loc)
        strong_kink[mask] = np.maximum(fr * lam[mask] - mu[mask], 0.0) \
            + np.maximum(mu[mask] - fl * lam[mask], 0.0)
    strong_stats_boundary = _stats(strong_boundary, sets.z_zero, state)
    strong_stats_kink = _stats(strong_kink, sets.kink, state)
    sign_strong = ViolationStats(
        count=strong_stats_boundary.count + strong_stats_kink.count,
        max_violation=max(
            strong_stats_boundary.max_violation, strong_stats_kink.max_violation
        ),
        measure=strong_stats_boundary.measure + strong_stats_kink.measure,
    )

    # ---- control gradient -------------------------------------------------
    gradient_residual = h1_time_norm(
        state.load + riesz_h1_time(w, space, time), space, time
    )

    # ---- scales and grading ----------------------------------------------
    sup = lambda u: float(np.max(np.abs(u))) if u.size else 0.0
    reference_scale = max(
        1.0,
        sup(state.q[1:] - q_d[1:]),
        sup(xi),
        sup(lam),
        sup(mu),
        sup(w),
        sup(state.load),
    )
    model_constant = (
        1.0 + params.beta + time.final_time * state.kernel.max_abs()
    ) / min(1.0, eps_v)
    disc_tol = model_constant * (dt + eps_used) * reference_scale

    graded = {
        "adjoint_residual_q": adjoint_residual_q,
        "terminal_xi": terminal_xi,
        "adjoint_residual_phi": adjoint_residual_phi,
        "kkt_inactive_residual": kkt_inactive_residual,
        "gradient_residual": gradient_residual,
    }
    if mode == "improved":
        graded["sign_violation_max_weak"] = sign_weak.max_violation
    elif mode == "strong":
        graded["sign_violation_max_strong"] = sign_strong.max_violation

    details = {
        "kkt": {k: v.to_dict() for k, v in kkt_parts.items()},
        "sign_weak_boundary": weak_stats_boundary.to_dict(),
        "sign_weak_active": weak_stats_active.to_dict(),
        "sign_strong_boundary": strong_stats_boundary.to_dict(),
        "sign_strong_kink": strong_stats_kink.to_dict(),
        "set_sizes": {
            "z_pos": int(np.count_nonzero(sets.z_pos[1:])),
            "z_zero": int(np.count_nonzero(sets.z_zero[1:])),
            "z_neg": int(np.count_nonzero(sets.z_neg[1:])),
            "kink": int(np.count_nonzero(sets.kink[1:])),
        },
        "G_plus_range": [sup(-np.minimum(G_plus, 0.0)), sup(np.maximum(G_plus, 0.0))],
        "G_minus_range": [sup(-np.minimum(G_minus, 0.0)), sup(np.maximum(G_minus, 0.0))],
    }

    return StationarityReport(
        mode=mode,
        adjoint_residual_q=adjoint_residual_q,
        terminal_xi=terminal_xi,
        adjoint_residual_phi=adjoint_residual_phi,
        kkt_inactive_residual=kkt_inactive_residual,
        sign_violations_weak=sign_weak,
        sign_violations_strong=sign_strong,
        gradient_residual=gradient_residual,
        b_stat_min=None,
        strong_stationarity_applicable=not bool(sets.kink[1:].any()),
        disc_tol=disc_tol,
        reference_scale=reference_scale,
        model_constant=model_constant,
        eps_used=eps_used,
        tol_z=sets.tol_z,
        tol_f=sets.tol_f,
        graded_residuals=graded,
        details=details,
    )


# --------------------------------------------------------------------------
# B-stationarity probe
# --------------------------------------------------------------------------

@dataclass
class BStatProbeResult:
    """Directional first-order values at a candidate control.

    ``values[i]`` is ``dj(S'(load; d_i)) + (load, d_i)_{H^1}``; at a
    B-stationary point every value is nonnegative.  Directions come in
    ``+d / -d`` pairs when ``include_negations`` is set.
    """

    values: np.ndarray
    min_value: float
    n_directions: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "values": [float(v) for v in self.values],
            "min_value": float(self.min_value),
            "n_directions": int(self.n_directions),
            "seed": int(self.seed),
        }


def b_stationarity_probe(
    state: StateSolution,
    objective: ObjectiveSpec,
    *,
    n_directions: int = 10,
    seed: int = 0,
    include_negations: bool = True,
    directions: Optional[list] = None,
) -> BStatProbeResult:
    """Probe the first-order variational inequality along random directions.

    For each direction the one-sided sensitivity is computed with the exact
    directional rules (the map is positively homogeneous, so ``+d`` and
    ``-d`` probe genuinely different linearizations) and the directional
    objective value is assembled as
    ``sum_k dt [(q_k - q_d_k, dq_k) + (P_k, dphi_k)] + (load, d)_{H^1}``.

    Returns
    -------
    BStatProbeResult
        With the per-direction values and their minimum.
    """
    space, time = state.space, state.time
    q_d = _check_traj(objective.q_target, space, time, "q_target")
    rng = np.random.default_rng(seed)
    if directions is None:
        directions = []
        for _ in range(n_directions):
            d = rng.standard_normal((time.steps + 1, space.node_count))
            d /= max(h1_time_norm(d, space, time), 1e-300)
            directions.append(d)
            if include_negations:
                directions.append(-d)

    values = []
    for d in directions:
        lin = solve_linearized(state, d)
        track = float(
            state.time.dt
            * (((state.q[1:] - q_d[1:]) * lin.dq[1:]) @ space.weights).sum()
        )
        phi_term = 0.0
        if objective.kappa > 0.0:
            for k in range(1, time.steps + 1):
                P_k = _phi_weight_field(objective, state.phi[k], space)
                phi_term += float(time.dt * np.dot(space.weights, P_k * lin.dphi[k]))
        control_term = h1_time_inner(state.load, d, space, time)
        values.append(track + phi_term + control_term)

    values = np.asarray(values)
    return BStatProbeResult(
        values=values,
        min_value=float(values.min()),
        n_directions=len(directions),
        seed=seed,
    )
