"""Grids, quadrature, discrete operators, and the control-space Riesz map."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fatigueopt.grids import (
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


# --------------------------------------------------------------------------
# quadrature weights
# --------------------------------------------------------------------------

def test_trapezoid_weights_1d():
    sg = build_space_grid(1, (1.0,), (5,))
    assert np.array_equal(sg.weights, [0.125, 0.25, 0.25, 0.25, 0.125])


def test_corner_weight_2d():
    sg = build_space_grid(2, (1.0, 1.0), (3, 3))
    # corner node weight is (h/2)^2 = 1/16 on a 3x3 unit square
    assert sg.weights[0] == pytest.approx(1.0 / 16.0, abs=0.0)
    assert sg.weights.sum() == pytest.approx(1.0, rel=1e-14)


@given(
    n=st.integers(min_value=2, max_value=40),
    length=st.floats(min_value=0.1, max_value=10.0),
)
@settings(max_examples=50, deadline=None)
def test_weights_positive_and_sum_to_length(n, length):
    sg = build_space_grid(1, (length,), (n,))
    assert np.all(sg.weights > 0.0)
    assert sg.weights.sum() == pytest.approx(length, rel=1e-12)


def test_weights_sum_to_area_2d():
    sg = build_space_grid(2, (2.0, 0.5), (7, 5))
    assert sg.weights.sum() == pytest.approx(1.0, rel=1e-12)


def test_grid_validation():
    with pytest.raises(ValueError):
        build_space_grid(3, (1.0, 1.0, 1.0), (3, 3, 3))
    with pytest.raises(ValueError):
        build_space_grid(1, (1.0,), (1,))
    with pytest.raises(ValueError):
        build_space_grid(1, (-1.0,), (5,))
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)
    with pytest.raises(ValueError):
        TimeGrid(-1.0, 10)


# --------------------------------------------------------------------------
# stiffness / Laplacian
# --------------------------------------------------------------------------

@pytest.mark.parametrize("sg", [
    build_space_grid(1, (1.0,), (17,)),
    build_space_grid(2, (1.0, 2.0), (7, 9)),
], ids=["1d", "2d"])
def test_stiffness_annihilates_constants(sg):
    c = sg.constant(3.7)
    if sg.dimension == 1:
        # 1D rows hold +/- multiples of one scale; products cancel exactly.
        assert np.all(sg.stiffness @ c == 0.0)
        assert np.all(apply_neumann_laplacian(c, sg) == 0.0)
    else:
        # Merged x/y contributions round independently in the matvec.
        assert np.max(np.abs(sg.stiffness @ c)) <= 1e-12
        assert np.max(np.abs(apply_neumann_laplacian(c, sg))) <= 1e-12


@pytest.mark.parametrize("sg", [
    build_space_grid(1, (1.0,), (21,)),
    build_space_grid(2, (1.0, 1.0), (6, 8)),
], ids=["1d", "2d"])
def test_laplacian_self_adjoint_psd(sg):
    rng = np.random.default_rng(0)
    for _ in range(5):
        u = rng.standard_normal(sg.node_count)
        v = rng.standard_normal(sg.node_count)
        Au = apply_neumann_laplacian(u, sg)
        Av = apply_neumann_laplacian(v, sg)
        lhs = l2_inner(Au, v, sg)
        rhs = l2_inner(u, Av, sg)
        assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-11)
        assert l2_inner(Au, u, sg) >= -1e-11


def test_rayleigh_quotient_matches_first_neumann_mode():
    sg = build_space_grid(1, (1.0,), (101,))
    u = np.cos(np.pi * sg.coords[:, 0])
    quotient = grad_inner(u, u, sg) / l2_inner(u, u, sg)
    assert quotient == pytest.approx(np.pi**2, rel=1e-3)


def test_grad_inner_linear_field_1d():
    # u = x has unit gradient: integral over (0, L) is L exactly
    sg = build_space_grid(1, (2.0,), (9,))
    u = sg.coords[:, 0]
    assert grad_inner(u, u, sg) == pytest.approx(2.0, rel=1e-12)


# --------------------------------------------------------------------------
# time pairings
# --------------------------------------------------------------------------

def _random_traj(rng, sg, tg):
    return rng.standard_normal((tg.steps + 1, sg.node_count))


def test_time_inner_ignores_slot_zero():
    sg = build_space_grid(1, (1.0,), (7,))
    tg = TimeGrid(1.0, 9)
    rng = np.random.default_rng(1)
    U = _random_traj(rng, sg, tg)
    V = _random_traj(rng, sg, tg)
    base = l2_time_inner(U, V, sg, tg)
    U2 = U.copy()
    U2[0] += 100.0
    assert l2_time_inner(U2, V, sg, tg) == base


def test_h1_time_norm_of_constant():
    sg = build_space_grid(1, (1.0,), (11,))
    tg = TimeGrid(2.0, 13)
    U = np.full((tg.steps + 1, sg.node_count), 1.5)
    # no derivative part: ||U||^2 = T * c^2 * |domain|
    assert h1_time_norm(U, sg, tg) ** 2 == pytest.approx(2.0 * 1.5**2, rel=1e-12)
    assert l2_time_norm(U, sg, tg) == pytest.approx(h1_time_norm(U, sg, tg), rel=1e-12)


def test_time_derivative_replicates_first_cell():
    sg = build_space_grid(1, (1.0,), (5,))
    tg = TimeGrid(1.0, 4)
    U = _random_traj(np.random.default_rng(2), sg, tg)
    dU = time_derivative(U, sg, tg)
    assert np.array_equal(dU[0], dU[1])
    assert np.allclose(dU[1:], np.diff(U, axis=0) / tg.dt)


def test_shape_validation():
    sg = build_space_grid(1, (1.0,), (5,))
    tg = TimeGrid(1.0, 4)
    with pytest.raises(ValueError):
        l2_norm(np.zeros(4), sg)
    with pytest.raises(ValueError):
        l2_time_inner(np.zeros((4, 5)), np.zeros((5, 5)), sg, tg)


# --------------------------------------------------------------------------
# Riesz map of the control pairing
# --------------------------------------------------------------------------

def test_riesz_identity_against_h1_pairing():
    sg = build_space_grid(1, (1.0,), (9,))
    tg = TimeGrid(1.0, 12)
    rng = np.random.default_rng(3)
    for _ in range(5):
        F = _random_traj(rng, sg, tg)
        d = _random_traj(rng, sg, tg)
        g = riesz_h1_time(F, sg, tg)
        lhs = h1_time_inner(g, d, sg, tg)
        rhs = tg.dt * float(((F[1:] * d[1:]) @ sg.weights).sum())
        assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-12)


def test_riesz_reproduces_constants():
    sg = build_space_grid(1, (1.0,), (6,))
    tg = TimeGrid(1.0, 10)
    F = np.full((tg.steps + 1, sg.node_count), -2.25)
    g = riesz_h1_time(F, sg, tg)
    assert np.max(np.abs(g - F)) < 1e-12


def test_riesz_initial_condition():
    sg = build_space_grid(1, (1.0,), (6,))
    tg = TimeGrid(1.0, 10)
    F = _random_traj(np.random.default_rng(4), sg, tg)
    g = riesz_h1_time(F, sg, tg)
    assert np.max(np.abs(g[0] - g[1])) < 1e-12


def test_riesz_does_not_mutate_input():
    sg = build_space_grid(1, (1.0,), (6,))
    tg = TimeGrid(1.0, 10)
    F = _random_traj(np.random.default_rng(5), sg, tg)
    F_copy = F.copy()
    riesz_h1_time(F, sg, tg)
    assert np.array_equal(F, F_copy)


# --------------------------------------------------------------------------
# labels
# --------------------------------------------------------------------------

def test_column_labels():
    sg1 = build_space_grid(1, (1.0,), (3,))
    assert sg1.column_labels() == ["x=0", "x=0.5", "x=1"]
    sg2 = build_space_grid(2, (1.0, 1.0), (2, 2))
    assert sg2.column_labels()[0] == "x=0;y=0"
    assert len(sg2.column_labels()) == 4
