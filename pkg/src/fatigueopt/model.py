"""Model data: coefficients, fatigue law, smoothing, and the history operator.

The rate-dependent damage model couples a local damage field ``q`` and a
nonlocal field ``phi`` through a penalty ``beta``; the local field evolves by

    eps_v * qdot = max(z, 0),      z = -beta (q - phi) - f(H(q)),

where ``f`` is a piecewise-affine decreasing fatigue degradation law and
``H`` is a Volterra history operator

    H(q)(t) = q0 + integral_0^t a(t - s) q(s) ds

with a scalar kernel ``a``.  This module provides the scalar nonsmooth
primitives (``max(., 0)`` and ``f`` with exact one-sided directional
derivatives), their C^1 smoothed counterparts used by the regularized
problems, and the discrete history operator with its exact transpose.

Discrete history convention: strict left-rectangle rule,

    H_m = q0 + dt * sum_{j=0}^{m-1} a((m - j) dt) q_j,

so ``H_m`` never involves ``q_m``; during an implicit time step the history
is a frozen explicit quantity.  ``history_adjoint_apply`` is the exact matrix
transpose of the linear part under the plain nodal pairing, so discrete
adjoint identities hold to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .grids import SpaceGrid, TimeGrid, _check_traj, grad_inner, l2_inner

__all__ = [
    "ModelParams",
    "FatigueLaw",
    "SmoothingParams",
    "HistoryKernel",
    "max_plus",
    "max_dir",
    "max_eps",
    "max_eps_prime",
    "history_apply",
    "history_linear_apply",
    "history_adjoint_apply",
    "energy_eval",
]

ArrayLike = Union[float, np.ndarray]


def _is_scalar(x) -> bool:
    return np.isscalar(x) or (isinstance(x, np.ndarray) and x.ndim == 0)


def _match(x_in, out: np.ndarray) -> ArrayLike:
    """Return a float for scalar input, the ndarray otherwise."""
    return float(out) if _is_scalar(x_in) else out


# --------------------------------------------------------------------------
# coefficients
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Positive model coefficients.

    Attributes
    ----------
    alpha : float
        Gradient-regularization coefficient of the nonlocal field.
    beta : float
        Two-field coupling penalty.
    viscosity : float
        Viscosity ``eps_v`` of the damage rate law.
    """

    alpha: float
    beta: float
    viscosity: float

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "viscosity"):
            if not (getattr(self, name) > 0.0):
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class SmoothingParams:
    """Smoothing widths for the regularized problem.

    Attributes
    ----------
    eps_max : float
        Width of the quadratic blend of ``max(., 0)`` at 0.
    eps_f : float
        Total width of the quadratic blend of the fatigue law at its kinks;
        each blend occupies ``[kink - eps_f/2, kink + eps_f/2]``.
    """

    eps_max: float
    eps_f: float

    def __post_init__(self) -> None:
        if not (self.eps_max > 0.0) or not (self.eps_f > 0.0):
            raise ValueError(
                f"smoothing widths must be positive, got "
                f"eps_max={self.eps_max}, eps_f={self.eps_f}"
            )

    def scaled(self, factor: float) -> "SmoothingParams":
        """Both widths multiplied by ``factor``."""
        return SmoothingParams(self.eps_max * factor, self.eps_f * factor)


# --------------------------------------------------------------------------
# max(., 0) and its smoothing
# --------------------------------------------------------------------------

def max_plus(x: ArrayLike) -> ArrayLike:
    """``max(x, 0)`` elementwise."""
    return _match(x, np.maximum(np.asarray(x, dtype=float), 0.0))


def max_dir(v: ArrayLike, h: ArrayLike) -> ArrayLike:
    """Exact directional derivative ``max'(v; h)`` of ``max(., 0)`` at ``v``.

    ``h`` where ``v > 0``; ``max(h, 0)`` where ``v == 0`` (exact comparison,
    no tolerance); ``0`` where ``v < 0``.  Positively homogeneous in ``h``.
    """
    va = np.asarray(v, dtype=float)
    ha = np.asarray(h, dtype=float)
    out = np.where(va > 0.0, ha, np.where(va == 0.0, np.maximum(ha, 0.0), 0.0))
    return float(out) if _is_scalar(v) and _is_scalar(h) else out


def max_eps(x: ArrayLike, eps: float) -> ArrayLike:
    """C^1 smoothing of ``max(., 0)``: ``0`` for ``x <= 0``, ``x^2/(2 eps)``
    on ``(0, eps)``, ``x - eps/2`` for ``x >= eps``.

    ``sup |max_eps - max(., 0)| = eps/2``, attained for every ``x >= eps``.
    """
    if not (eps > 0.0):
        raise ValueError(f"eps must be positive, got {eps}")
    xa = np.asarray(x, dtype=float)
    out = np.where(
        xa <= 0.0,
        0.0,
        np.where(xa >= eps, xa - eps / 2.0, xa * xa / (2.0 * eps)),
    )
    return _match(x, out)


def max_eps_prime(x: ArrayLike, eps: float) -> ArrayLike:
    """Derivative of :func:`max_eps`: ``0`` / ``x/eps`` / ``1`` on the three
    branches; Lipschitz with constant ``1/eps`` and values in ``[0, 1]``."""
    if not (eps > 0.0):
        raise ValueError(f"eps must be positive, got {eps}")
    xa = np.asarray(x, dtype=float)
    out = np.where(xa <= 0.0, 0.0, np.where(xa >= eps, 1.0, xa / eps))
    return _match(x, out)


# --------------------------------------------------------------------------
# fatigue law
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FatigueLaw:
    """Piecewise-affine decreasing fatigue degradation law.

    ``f(v) = c0`` for ``v <= threshold``, then decreasing with slope
    ``-slope`` until it reaches ``floor``, constant afterwards.  Kinks sit at
    ``threshold`` and (when ``floor < c0`` and ``slope > 0``) at
    ``threshold + (c0 - floor)/slope``.

    Attributes
    ----------
    c0 : float
        Undegraded threshold level, ``c0 > 0``.
    threshold : float
        Accumulated history at which degradation sets in.
    slope : float
        Degradation rate ``>= 0`` past the onset.
    floor : float
        Lower saturation value, ``0 <= floor <= c0``.
    """

    c0: float
    threshold: float
    slope: float
    floor: float = 0.0

    def __post_init__(self) -> None:
        if not (self.c0 > 0.0):
            raise ValueError(f"c0 must be positive, got {self.c0}")
        if self.slope < 0.0:
            raise ValueError(f"slope must be nonnegative, got {self.slope}")
        if not (0.0 <= self.floor <= self.c0):
            raise ValueError(
                f"floor must lie in [0, c0] = [0, {self.c0}], got {self.floor}"
            )

    @property
    def degrades(self) -> bool:
        """True when the law actually decreases somewhere."""
        return self.slope > 0.0 and self.floor < self.c0

    @property
    def floor_onset(self) -> float:
        """Abscissa where the descending branch reaches ``floor`` (inf if never)."""
        if not self.degrades:
            return np.inf
        return self.threshold + (self.c0 - self.floor) / self.slope

    # -- exact law ---------------------------------------------------------

    def value(self, v: ArrayLike) -> ArrayLike:
        """``f(v)`` elementwise."""
        va = np.asarray(v, dtype=float)
        out = np.where(
            va <= self.threshold,
            self.c0,
            np.maximum(self.c0 - self.slope * (va - self.threshold), self.floor),
        )
        return _match(v, out)

    def onesided_slopes(self, v: ArrayLike) -> tuple[ArrayLike, ArrayLike]:
        """One-sided slopes ``(f'_+(v), f'_-(v))``.

        ``f'_+`` is the right derivative, ``f'_-`` the left derivative; at
        the onset kink ``f'_+(threshold) = -slope`` while
        ``f'_-(threshold) = 0``, and symmetrically at the floor kink.
        """
        va = np.asarray(v, dtype=float)
        vf = self.floor_onset
        slope = self.slope if self.degrades else 0.0
        right = np.where((va >= self.threshold) & (va < vf), -slope, 0.0)
        left = np.where((va > self.threshold) & (va <= vf), -slope, 0.0)
        if _is_scalar(v):
            return float(right), float(left)
        return right, left

    def directional(self, v: ArrayLike, h: ArrayLike) -> ArrayLike:
        """Exact directional derivative ``f'(v; h)``.

        ``f'_+(v) h`` for ``h >= 0`` and ``f'_-(v) h`` for ``h < 0``; kink
        membership is decided by exact comparison, no tolerance.  Positively
        homogeneous in ``h``.
        """
        va = np.asarray(v, dtype=float)
        ha = np.asarray(h, dtype=float)
        right, left = self.onesided_slopes(va)
        out = np.where(ha >= 0.0, np.asarray(right) * ha, np.asarray(left) * ha)
        return float(out) if _is_scalar(v) and _is_scalar(h) else out

    # -- smoothed law ------------------------------------------------------

    def _check_blend(self, eps_f: float) -> None:
        if not (eps_f > 0.0):
            raise ValueError(f"eps_f must be positive, got {eps_f}")
        vf = self.floor_onset
        if np.isfinite(vf) and vf - self.threshold < eps_f:
            raise ValueError(
                f"fatigue-law kinks are {vf - self.threshold:g} apart, closer than "
                f"eps_f={eps_f:g}; the smoothed blends would overlap"
            )

    def smoothed_value(self, v: ArrayLike, eps_f: float) -> ArrayLike:
        """C^1 quadratic blend of the kinks, total width ``eps_f``.

        Each kink ``k`` is replaced on ``[k - eps_f/2, k + eps_f/2]`` by the
        unique quadratic matching value and slope of the adjacent affine
        pieces; at the onset kink the blend value is
        ``c0 - slope * eps_f / 8``.  Outside the blends the law is unchanged,
        so ``sup |f_eps - f| = slope * eps_f / 8``, and the smoothed law keeps
        the eps-independent Lipschitz constant ``slope``.
        """
        self._check_blend(eps_f)
        va = np.asarray(v, dtype=float)
        out = np.where(
            va <= self.threshold,
            self.c0,
            np.maximum(self.c0 - self.slope * (va - self.threshold), self.floor),
        )
        if self.degrades:
            w = eps_f / 2.0
            coef = self.slope / (4.0 * w)
            blend1 = self.c0 - coef * (va - self.threshold + w) ** 2
            out = np.where(
                (va > self.threshold - w) & (va < self.threshold + w), blend1, out
            )
            vf = self.floor_onset
            if np.isfinite(vf):
                blend2 = self.floor + coef * (va - vf - w) ** 2
                out = np.where((va > vf - w) & (va < vf + w), blend2, out)
        return _match(v, out)

    def smoothed_slope(self, v: ArrayLike, eps_f: float) -> ArrayLike:
        """Derivative of :func:`smoothed_value`.

        Coincides with ``f'`` outside the blend intervals and interpolates
        linearly between the adjacent one-sided slopes inside them.
        """
        self._check_blend(eps_f)
        va = np.asarray(v, dtype=float)
        vf = self.floor_onset
        slope = self.slope if self.degrades else 0.0
        out = np.where((va > self.threshold) & (va < vf), -slope, 0.0)
        if self.degrades:
            w = eps_f / 2.0
            coef = self.slope / (2.0 * w)
            out = np.where(
                (va > self.threshold - w) & (va < self.threshold + w),
                -coef * (va - self.threshold + w),
                out,
            )
            if np.isfinite(vf):
                out = np.where(
                    (va > vf - w) & (va < vf + w), coef * (va - vf - w), out
                )
        return _match(v, out)


# --------------------------------------------------------------------------
# history operator
# --------------------------------------------------------------------------

@dataclass
class HistoryKernel:
    """Sampled Volterra kernel plus additive offset field.

    Attributes
    ----------
    samples : np.ndarray
        Kernel values ``a(i * dt)`` for ``i = 0..steps`` on the time grid the
        kernel was built for.  Index 0 is never used by the strict
        left-rectangle rule but is kept so that ``samples[i] = a(i*dt)``.
    offset : np.ndarray
        Initial accumulated state ``q0`` as a scalar field.
    """

    samples: np.ndarray
    offset: np.ndarray

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=float)
        self.offset = np.asarray(self.offset, dtype=float)
        if self.samples.ndim != 1:
            raise ValueError("kernel samples must be a 1d array")

    @classmethod
    def from_function(
        cls,
        fn: Callable[[np.ndarray], np.ndarray],
        time: TimeGrid,
        offset: np.ndarray,
    ) -> "HistoryKernel":
        """Sample ``a(tau)`` at the lags ``tau = i * dt``."""
        taus = time.dt * np.arange(time.steps + 1)
        return cls(np.asarray(fn(taus), dtype=float), offset)

    @classmethod
    def constant(cls, value: float, time: TimeGrid, offset: np.ndarray) -> "HistoryKernel":
        """Constant kernel ``a(tau) = value``."""
        return cls(np.full(time.steps + 1, float(value)), offset)

    @property
    def is_monotone(self) -> bool:
        """True when all kernel samples are nonnegative (order-preserving history)."""
        return bool(np.all(self.samples >= 0.0))

    def max_abs(self) -> float:
        """``sup |a|`` over the sampled lags."""
        return float(np.max(np.abs(self.samples))) if self.samples.size else 0.0


def _check_kernel(kernel: HistoryKernel, space: SpaceGrid, time: TimeGrid) -> None:
    if kernel.samples.shape[0] < time.steps + 1:
        raise ValueError(
            f"kernel has {kernel.samples.shape[0]} samples, "
            f"needs {time.steps + 1} for this time grid"
        )
    if kernel.offset.shape != (space.node_count,):
        raise ValueError(
            f"kernel offset has shape {kernel.offset.shape}, "
            f"expected ({space.node_count},)"
        )


def history_apply(
    kernel: HistoryKernel, q: np.ndarray, space: SpaceGrid, time: TimeGrid
) -> np.ndarray:
    """Discrete history ``H_m = q0 + dt * sum_{j<m} a((m-j) dt) q_j``.

    Strict left-rectangle rule: slot ``m`` depends only on ``q_0..q_{m-1}``,
    and ``H_0 = q0``.
    """
    q = _check_traj(q, space, time, "q")
    _check_kernel(kernel, space, time)
    out = np.empty_like(q)
    out[:] = kernel.offset
    a = kernel.samples
    dt = time.dt
    for m in range(1, time.steps + 1):
        out[m] += dt * (a[m:0:-1] @ q[:m])
    return out


def history_linear_apply(
    kernel: HistoryKernel, dq: np.ndarray, space: SpaceGrid, time: TimeGrid
) -> np.ndarray:
    """Linear part ``(H' dq)_m = dt * sum_{j<m} a((m-j) dt) dq_j`` (no offset)."""
    dq = _check_traj(dq, space, time, "dq")
    _check_kernel(kernel, space, time)
    out = np.zeros_like(dq)
    a = kernel.samples
    dt = time.dt
    for m in range(1, time.steps + 1):
        out[m] = dt * (a[m:0:-1] @ dq[:m])
    return out


def history_adjoint_apply(
    kernel: HistoryKernel, mu: np.ndarray, space: SpaceGrid, time: TimeGrid
) -> np.ndarray:
    """Exact transpose of :func:`history_linear_apply` in the nodal pairing.

    ``(H'* mu)_j = dt * sum_{m>j} a((m-j) dt) mu_m``; the last slot is zero.
    For every pair, ``sum_m (H' dq)_m . mu_m == sum_j dq_j . (H'* mu)_j``
    holds to rounding.  When the kernel is nonnegative, nonnegative input
    yields nonnegative output exactly (no cancellation is introduced).
    """
    mu = _check_traj(mu, space, time, "mu")
    _check_kernel(kernel, space, time)
    out = np.zeros_like(mu)
    a = kernel.samples
    dt = time.dt
    M = time.steps
    for j in range(M):
        out[j] = dt * (a[1 : M - j + 1] @ mu[j + 1 :])
    return out


# --------------------------------------------------------------------------
# energy
# --------------------------------------------------------------------------

def energy_eval(
    params: ModelParams,
    q: np.ndarray,
    phi: np.ndarray,
    load: np.ndarray,
    space: SpaceGrid,
) -> float:
    """Coupled two-field energy at one time slice.

    ``E = alpha/2 |grad phi|^2 + beta/2 ||phi - q||^2 - (load, phi)``; its
    stationarity condition in ``phi`` is the elliptic equation
    ``alpha A phi + beta (phi - q) = load`` with natural Neumann closure.
    """
    diff = phi - q
    return float(
        0.5 * params.alpha * grad_inner(phi, phi, space)
        + 0.5 * params.beta * l2_inner(diff, diff, space)
        - l2_inner(load, phi, space)
    )
