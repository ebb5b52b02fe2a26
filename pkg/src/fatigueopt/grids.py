"""Tensor-product grids, quadrature, and discrete inner products.

Space is a 1d interval or a 2d rectangle discretized by equispaced nodes.
Scalar fields live on the nodes (flattened in C order for 2d).  The mass
matrix is the diagonal of trapezoid quadrature weights ``W``; the stiffness
matrix ``K`` is the standard second-difference operator with homogeneous
Neumann closure, assembled in 2d as ``Kx (x) Wy + Wx (x) Ky``.  The discrete
Neumann Laplacian used throughout is ``A = W^{-1} K``, which is self-adjoint
and positive semidefinite in the ``W`` inner product and annihilates
constants.

Time is an equispaced grid ``t_k = k*dt`` with ``M`` steps.  Trajectories are
arrays of shape ``(M+1, n_nodes)``.  Time integrals use the right-cell
rectangle rule ``sum_{k=1..M} dt * (.,.)`` and the ``H^1(0,T)`` pairing adds
backward difference quotients on the same cells; the Riesz map of that
pairing is inverted exactly by a tridiagonal solve, so gradients returned in
control space are consistent with ``h1_time_inner`` to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded

__all__ = [
    "SpaceGrid",
    "TimeGrid",
    "build_space_grid",
    "l2_inner",
    "l2_norm",
    "grad_inner",
    "apply_neumann_laplacian",
    "l2_time_inner",
    "l2_time_norm",
    "h1_time_inner",
    "h1_time_norm",
    "time_derivative",
    "riesz_h1_time",
]


# --------------------------------------------------------------------------
# grids
# --------------------------------------------------------------------------

def _axis_weights(n: int, h: float) -> np.ndarray:
    """Trapezoid quadrature weights for one equispaced axis."""
    w = np.full(n, h)
    w[0] = h / 2.0
    w[-1] = h / 2.0
    return w


def _axis_stiffness(n: int, h: float) -> sp.csr_matrix:
    """1d second-difference stiffness with homogeneous Neumann closure.

    Rows integrate ``u' v'`` for piecewise-linear hat functions: interior
    diagonal ``2/h``, endpoint diagonal ``1/h``, off-diagonals ``-1/h``.
    """
    main = np.full(n, 2.0 / h)
    main[0] = 1.0 / h
    main[-1] = 1.0 / h
    off = np.full(n - 1, -1.0 / h)
    return sp.diags([off, main, off], offsets=(-1, 0, 1), format="csr")


@dataclass
class SpaceGrid:
    """Equispaced tensor-product grid on an interval or rectangle.

    Attributes
    ----------
    dimension : int
        1 or 2.
    extents : tuple of float
        Side lengths per axis.
    nodes_per_axis : tuple of int
        Node counts per axis (each >= 2).
    spacings : tuple of float
        Mesh size per axis.
    node_count : int
        Total number of nodes (product over axes).
    coords : np.ndarray
        Node coordinates, shape ``(node_count, dimension)``, C-order flattened.
    weights : np.ndarray
        Trapezoid quadrature weights per node, shape ``(node_count,)``.
    stiffness : scipy.sparse matrix
        Neumann stiffness matrix ``K`` described in the module docstring.
    """

    dimension: int
    extents: tuple[float, ...]
    nodes_per_axis: tuple[int, ...]
    spacings: tuple[float, ...] = field(init=False)
    node_count: int = field(init=False)
    coords: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    stiffness: sp.spmatrix = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if len(self.extents) != self.dimension or len(self.nodes_per_axis) != self.dimension:
            raise ValueError("extents / nodes_per_axis must match dimension")
        for L in self.extents:
            if not (L > 0.0):
                raise ValueError(f"extents must be positive, got {self.extents}")
        for n in self.nodes_per_axis:
            if n < 2:
                raise ValueError(f"need at least 2 nodes per axis, got {self.nodes_per_axis}")
        self.extents = tuple(float(L) for L in self.extents)
        self.nodes_per_axis = tuple(int(n) for n in self.nodes_per_axis)
        self.spacings = tuple(
            L / (n - 1) for L, n in zip(self.extents, self.nodes_per_axis)
        )
        self.node_count = int(np.prod(self.nodes_per_axis))

        axes = [
            np.linspace(0.0, L, n) for L, n in zip(self.extents, self.nodes_per_axis)
        ]
        if self.dimension == 1:
            self.coords = axes[0][:, None]
            self.weights = _axis_weights(self.nodes_per_axis[0], self.spacings[0])
            self.stiffness = _axis_stiffness(self.nodes_per_axis[0], self.spacings[0])
        else:
            X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
            self.coords = np.column_stack([X.ravel(), Y.ravel()])
            wx = _axis_weights(self.nodes_per_axis[0], self.spacings[0])
            wy = _axis_weights(self.nodes_per_axis[1], self.spacings[1])
            self.weights = np.outer(wx, wy).ravel()
            Kx = _axis_stiffness(self.nodes_per_axis[0], self.spacings[0])
            Ky = _axis_stiffness(self.nodes_per_axis[1], self.spacings[1])
            Wx = sp.diags(wx)
            Wy = sp.diags(wy)
            self.stiffness = (sp.kron(Kx, Wy) + sp.kron(Wx, Ky)).tocsr()

    def zeros(self) -> np.ndarray:
        """A zero scalar field on this grid."""
        return np.zeros(self.node_count)

    def constant(self, value: float) -> np.ndarray:
        """A constant scalar field on this grid."""
        return np.full(self.node_count, float(value))

    def column_labels(self) -> list[str]:
        """Per-node coordinate labels for CSV headers, e.g. ``x=0.25;y=0.5``."""
        names = ("x", "y")[: self.dimension]
        return [
            ";".join(f"{nm}={c:.10g}" for nm, c in zip(names, row))
            for row in self.coords
        ]


def build_space_grid(
    dimension: int,
    extents: tuple[float, ...],
    nodes_per_axis: tuple[int, ...],
) -> SpaceGrid:
    """Build an equispaced :class:`SpaceGrid`.

    Parameters
    ----------
    dimension : int
        1 or 2.
    extents : tuple of float
        Side length per axis.
    nodes_per_axis : tuple of int
        Number of nodes per axis, at least 2 each.
    """
    return SpaceGrid(dimension, tuple(extents), tuple(nodes_per_axis))


@dataclass
class TimeGrid:
    """Equispaced time grid ``t_k = k*dt``, ``k = 0..steps``.

    Attributes
    ----------
    final_time : float
        Horizon ``T > 0``.
    steps : int
        Number of steps ``M >= 1``; there are ``M+1`` nodes.
    dt : float
        Step size ``T / M``.
    times : np.ndarray
        Node times, shape ``(steps+1,)``.
    """

    final_time: float
    steps: int
    dt: float = field(init=False)
    times: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not (self.final_time > 0.0):
            raise ValueError(f"final_time must be positive, got {self.final_time}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        self.final_time = float(self.final_time)
        self.steps = int(self.steps)
        self.dt = self.final_time / self.steps
        self.times = self.dt * np.arange(self.steps + 1)

    def zeros(self, space: SpaceGrid) -> np.ndarray:
        """A zero trajectory of shape ``(steps+1, node_count)``."""
        return np.zeros((self.steps + 1, space.node_count))


def _check_field(u: np.ndarray, space: SpaceGrid, name: str = "field") -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (space.node_count,):
        raise ValueError(
            f"{name} has shape {u.shape}, expected ({space.node_count},) for this grid"
        )
    return u


def _check_traj(U: np.ndarray, space: SpaceGrid, time: TimeGrid, name: str = "trajectory") -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.shape != (time.steps + 1, space.node_count):
        raise ValueError(
            f"{name} has shape {U.shape}, expected "
            f"({time.steps + 1}, {space.node_count}) for these grids"
        )
    return U


# --------------------------------------------------------------------------
# spatial inner products and operators
# --------------------------------------------------------------------------

def l2_inner(u: np.ndarray, v: np.ndarray, space: SpaceGrid) -> float:
    """Quadrature ``L^2`` inner product ``(u, v)_W = sum_i w_i u_i v_i``."""
    u = _check_field(u, space, "u")
    v = _check_field(v, space, "v")
    return float(np.dot(space.weights, u * v))


def l2_norm(u: np.ndarray, space: SpaceGrid) -> float:
    """Quadrature ``L^2`` norm."""
    return float(np.sqrt(max(l2_inner(u, u, space), 0.0)))


def grad_inner(u: np.ndarray, v: np.ndarray, space: SpaceGrid) -> float:
    """Dirichlet form ``u^T K v``, the discrete ``integral grad u . grad v``."""
    u = _check_field(u, space, "u")
    v = _check_field(v, space, "v")
    return float(u @ (space.stiffness @ v))


def apply_neumann_laplacian(u: np.ndarray, space: SpaceGrid) -> np.ndarray:
    """Apply ``A = W^{-1} K`` (sign convention: ``A ~ -Laplacian``).

    ``A`` is self-adjoint and positive semidefinite in the weighted inner
    product and maps constants to zero.
    """
    u = _check_field(u, space, "u")
    return (space.stiffness @ u) / space.weights


# --------------------------------------------------------------------------
# space-time inner products
# --------------------------------------------------------------------------

def l2_time_inner(U: np.ndarray, V: np.ndarray, space: SpaceGrid, time: TimeGrid) -> float:
    """Right-cell rule ``L^2(0,T; L^2)`` pairing ``sum_{k>=1} dt (U_k, V_k)_W``."""
    U = _check_traj(U, space, time, "U")
    V = _check_traj(V, space, time, "V")
    cells = (U[1:] * V[1:]) @ space.weights
    return float(time.dt * cells.sum())


def l2_time_norm(U: np.ndarray, space: SpaceGrid, time: TimeGrid) -> float:
    """Norm of :func:`l2_time_inner`."""
    return float(np.sqrt(max(l2_time_inner(U, U, space, time), 0.0)))


def h1_time_inner(U: np.ndarray, V: np.ndarray, space: SpaceGrid, time: TimeGrid) -> float:
    """``H^1(0,T; L^2)`` pairing on right cells with backward differences.

    ``sum_{k>=1} dt [ (U_k, V_k)_W + (dU_k, dV_k)_W ]`` with
    ``dU_k = (U_k - U_{k-1}) / dt``.
    """
    U = _check_traj(U, space, time, "U")
    V = _check_traj(V, space, time, "V")
    dU = np.diff(U, axis=0) / time.dt
    dV = np.diff(V, axis=0) / time.dt
    cells = (U[1:] * V[1:] + dU * dV) @ space.weights
    return float(time.dt * cells.sum())


def h1_time_norm(U: np.ndarray, space: SpaceGrid, time: TimeGrid) -> float:
    """Norm of :func:`h1_time_inner`."""
    return float(np.sqrt(max(h1_time_inner(U, U, space, time), 0.0)))


def time_derivative(U: np.ndarray, space: SpaceGrid, time: TimeGrid) -> np.ndarray:
    """Backward difference quotients; slot 0 replicates slot 1."""
    U = _check_traj(U, space, time, "U")
    dU = np.empty_like(U)
    dU[1:] = np.diff(U, axis=0) / time.dt
    dU[0] = dU[1]
    return dU


def riesz_h1_time(F: np.ndarray, space: SpaceGrid, time: TimeGrid) -> np.ndarray:
    """Riesz representative of a right-cell ``L^2(0,T; L^2)`` functional.

    Returns the trajectory ``g`` with
    ``h1_time_inner(g, d) == sum_{k>=1} dt * (F_k, d_k)_W`` for every
    trajectory ``d``.  Slot 0 of ``F`` never enters the functional; the
    representative satisfies the natural initial condition ``g_0 = g_1``.
    Constant-in-time ``F`` is reproduced exactly (``g == F`` nodewise).

    Parameters
    ----------
    F : np.ndarray
        Density of the functional, shape ``(steps+1, node_count)``.
    space, time : SpaceGrid, TimeGrid
        Grids the trajectory lives on.

    Returns
    -------
    np.ndarray
        Representative ``g``, same shape as ``F``.
    """
    F = _check_traj(F, space, time, "F")
    M = time.steps
    dt = time.dt
    # Tridiagonal normal matrix of the H^1 cell pairing in nodal values:
    #   row 0:      ( g_0 - g_1 ) / dt = 0
    #   rows 1..M-1: -g_{k-1}/dt + (dt + 2/dt) g_k - g_{k+1}/dt = dt F_k
    #   row M:      -g_{M-1}/dt + (dt + 1/dt) g_M             = dt F_M
    main = np.full(M + 1, dt + 2.0 / dt)
    main[0] = 1.0 / dt
    main[M] = dt + 1.0 / dt
    upper = np.full(M + 1, -1.0 / dt)
    lower = np.full(M + 1, -1.0 / dt)
    ab = np.zeros((3, M + 1))
    ab[0, 1:] = upper[1:]            # superdiagonal
    ab[1, :] = main                  # diagonal
    ab[2, :-1] = lower[:-1]          # subdiagonal
    rhs = dt * F
    rhs[0] = 0.0
    return solve_banded((1, 1), ab, rhs)
