"""Nonsmooth primitives, the fatigue law and its smoothing, and the
discrete history operator."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fatigueopt.grids import TimeGrid, build_space_grid
from fatigueopt.model import (
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

LAW = FatigueLaw(c0=1.0, threshold=2.0, slope=0.5, floor=0.0)


# --------------------------------------------------------------------------
# max(., 0) and its smoothing
# --------------------------------------------------------------------------

def test_max_plus_values():
    assert max_plus(-1.0) == 0.0
    assert max_plus(0.0) == 0.0
    assert max_plus(2.5) == 2.5
    assert np.array_equal(max_plus(np.array([-1.0, 0.0, 3.0])), [0.0, 0.0, 3.0])


def test_max_eps_frozen_values():
    # outer branch: x - eps/2 (bitwise; 0.1 - 0.025 is not the decimal 0.075)
    assert max_eps(0.1, 0.05) == 0.1 - 0.05 / 2
    assert max_eps(0.5, 0.25) == 0.375
    # quadratic branch: x^2 / (2 eps)
    assert max_eps(0.025, 0.05) == 0.025**2 / 0.1
    assert max_eps(-1.0, 0.05) == 0.0
    assert max_eps(0.0, 0.05) == 0.0


def test_max_eps_gap_is_half_eps():
    eps = 0.05
    x = np.linspace(-1.0, 1.0, 20001)
    gap = np.abs(max_eps(x, eps) - max_plus(x))
    assert gap.max() <= eps / 2.0 + 1e-15
    # the bound is attained on the whole outer branch
    assert gap.max() == pytest.approx(eps / 2.0, abs=1e-12)


def test_max_eps_prime_bounds_and_fd():
    eps = 0.1
    x = np.linspace(-0.5, 0.5, 101)
    d = max_eps_prime(x, eps)
    assert np.all((0.0 <= d) & (d <= 1.0))
    h = 1e-7
    interior = (np.abs(x) > 1e-3) & (np.abs(x - eps) > 1e-3)
    fd = (max_eps(x + h, eps) - max_eps(x - h, eps)) / (2.0 * h)
    assert np.max(np.abs(fd[interior] - d[interior])) < 1e-6


def test_max_eps_rejects_nonpositive_width():
    with pytest.raises(ValueError):
        max_eps(1.0, 0.0)
    with pytest.raises(ValueError):
        max_eps_prime(1.0, -0.1)


@given(st.floats(min_value=-100.0, max_value=100.0),
       st.floats(min_value=1e-6, max_value=10.0))
@settings(max_examples=200, deadline=None)
def test_max_eps_between_bounds(x, eps):
    v = max_eps(x, eps)
    assert max_plus(x) - eps / 2.0 <= v <= max_plus(x) + 1e-15
    assert v >= 0.0


def test_max_dir_branches():
    assert max_dir(1.0, -3.0) == -3.0        # strictly active: identity
    assert max_dir(-1.0, 5.0) == 0.0         # strictly inactive: zero
    assert max_dir(0.0, 2.0) == 2.0          # boundary: max(h, 0)
    assert max_dir(0.0, -2.0) == 0.0
    v = np.array([1.0, -1.0, 0.0, 0.0])
    h = np.array([-3.0, 5.0, 2.0, -2.0])
    assert np.array_equal(max_dir(v, h), [-3.0, 0.0, 2.0, 0.0])


def test_max_dir_positively_homogeneous():
    v = np.array([1.0, -1.0, 0.0, 0.0])
    h = np.array([-3.0, 5.0, 2.0, -2.0])
    assert np.array_equal(max_dir(v, 2.0 * h), 2.0 * max_dir(v, h))
    # negation switches branch at the boundary: not odd in h there
    assert max_dir(0.0, -1.0) != -max_dir(0.0, 1.0)


# --------------------------------------------------------------------------
# fatigue law
# --------------------------------------------------------------------------

def test_fatigue_frozen_values():
    assert LAW.value(0.0) == 1.0
    assert LAW.value(2.0) == 1.0
    assert LAW.value(3.0) == 0.5
    assert LAW.floor_onset == 4.0
    assert LAW.value(4.0) == 0.0
    assert LAW.value(10.0) == 0.0
    assert LAW.degrades


def test_fatigue_onesided_slopes():
    r, l = LAW.onesided_slopes(2.0)
    assert (r, l) == (-0.5, 0.0)
    r, l = LAW.onesided_slopes(4.0)
    assert (r, l) == (0.0, -0.5)
    r, l = LAW.onesided_slopes(3.0)
    assert (r, l) == (-0.5, -0.5)
    r, l = LAW.onesided_slopes(1.0)
    assert (r, l) == (0.0, 0.0)


def test_fatigue_directional_matches_onesided():
    # at the onset kink: right slope for h >= 0, left slope for h < 0
    assert LAW.directional(2.0, 1.0) == -0.5
    assert LAW.directional(2.0, -1.0) == 0.0
    assert LAW.directional(4.0, 1.0) == 0.0
    assert LAW.directional(4.0, -1.0) == 0.5
    # positive homogeneity
    assert LAW.directional(2.0, 3.0) == 3.0 * LAW.directional(2.0, 1.0)


def test_fatigue_smoothed_frozen_value():
    # blend half-width eps_f/2: value at the kink is c0 - slope*eps_f/8
    assert LAW.smoothed_value(2.0, 0.2) == 1.0 - 0.5 * 0.2 / 8.0
    assert LAW.smoothed_value(2.0, 0.2) == 0.9875


def test_fatigue_smoothed_gap_and_continuity():
    eps_f = 0.2
    w = eps_f / 2.0
    v = np.linspace(0.0, 6.0, 60001)
    gap = np.abs(LAW.smoothed_value(v, eps_f) - LAW.value(v))
    assert gap.max() <= LAW.slope * eps_f / 8.0 + 1e-15
    assert gap.max() == pytest.approx(LAW.slope * eps_f / 8.0, abs=1e-12)
    # exact agreement outside the blend intervals
    outside = (np.abs(v - 2.0) >= w) & (np.abs(v - 4.0) >= w)
    assert np.array_equal(LAW.smoothed_value(v, eps_f)[outside], LAW.value(v)[outside])


def test_fatigue_smoothed_slope_fd():
    eps_f = 0.2
    v = np.linspace(1.5, 4.5, 601)
    h = 1e-7
    fd = (LAW.smoothed_value(v + h, eps_f) - LAW.smoothed_value(v - h, eps_f)) / (2 * h)
    assert np.max(np.abs(fd - LAW.smoothed_slope(v, eps_f))) < 1e-6


def test_fatigue_smoothed_slope_lipschitz_constant_unchanged():
    eps_f = 0.2
    v = np.linspace(0.0, 6.0, 60001)
    s = LAW.smoothed_slope(v, eps_f)
    assert np.all((-LAW.slope - 1e-15 <= s) & (s <= 1e-15))


def test_fatigue_blend_overlap_rejected():
    narrow = FatigueLaw(c0=1.0, threshold=0.0, slope=2.0, floor=0.0)  # kinks 0.5 apart
    with pytest.raises(ValueError):
        narrow.smoothed_value(0.25, 0.6)


def test_fatigue_constant_law():
    flat = FatigueLaw(c0=2.0, threshold=1.0, slope=0.0, floor=0.0)
    assert not flat.degrades
    assert flat.floor_onset == np.inf
    assert flat.value(100.0) == 2.0
    assert flat.onesided_slopes(1.0) == (0.0, 0.0)
    assert flat.smoothed_value(1.0, 0.1) == 2.0


def test_fatigue_validation():
    with pytest.raises(ValueError):
        FatigueLaw(c0=0.0, threshold=1.0, slope=0.5, floor=0.0)
    with pytest.raises(ValueError):
        FatigueLaw(c0=1.0, threshold=1.0, slope=-0.5, floor=0.0)
    with pytest.raises(ValueError):
        FatigueLaw(c0=1.0, threshold=1.0, slope=0.5, floor=2.0)


def test_smoothing_params():
    sm = SmoothingParams(0.2, 0.1)
    half = sm.scaled(0.5)
    assert (half.eps_max, half.eps_f) == (0.1, 0.05)
    with pytest.raises(ValueError):
        SmoothingParams(0.0, 0.1)


@given(st.floats(min_value=0.0, max_value=10.0),
       st.floats(min_value=0.0, max_value=10.0))
@settings(max_examples=200, deadline=None)
def test_fatigue_value_monotone_nonincreasing(v1, v2):
    lo, hi = min(v1, v2), max(v1, v2)
    assert LAW.value(lo) >= LAW.value(hi)
    assert LAW.smoothed_value(lo, 0.2) >= LAW.smoothed_value(hi, 0.2)


# --------------------------------------------------------------------------
# history operator
# --------------------------------------------------------------------------

def _grids(n=3, M=3, T=0.3):
    return build_space_grid(1, (1.0,), (n,)), TimeGrid(T, M)


def test_history_left_rectangle_hand_table():
    sg, tg = _grids()
    kern = HistoryKernel.constant(2.0, tg, sg.constant(0.5))
    q = np.outer([0.0, 1.0, 2.0, 3.0], np.ones(sg.node_count))
    H = history_apply(kern, q, sg, tg)
    dt = tg.dt
    # H_m = 0.5 + dt * sum_{j<m} 2 * q_j
    expect = [0.5, 0.5, 0.5 + dt * 2.0, 0.5 + dt * 2.0 * 3.0]
    for m, e in enumerate(expect):
        assert H[m] == pytest.approx(np.full(sg.node_count, e), rel=1e-14)


def test_history_slot_m_excludes_q_m():
    sg, tg = _grids(M=5)
    kern = HistoryKernel.constant(1.0, tg, sg.zeros())
    q = np.zeros((tg.steps + 1, sg.node_count))
    q[3] = 7.0  # only slot 3 nonzero
    H = history_linear_apply(kern, q, sg, tg)
    assert np.all(H[:4] == 0.0)
    assert np.all(H[4:] == tg.dt * 7.0)


def test_history_lag_indexing():
    # kernel a(tau) = tau picks out the lag (m - j) dt exactly
    sg, tg = _grids(M=4, T=0.4)
    kern = HistoryKernel.from_function(lambda tau: tau, tg, sg.zeros())
    q = np.zeros((tg.steps + 1, sg.node_count))
    q[1] = 1.0
    H = history_linear_apply(kern, q, sg, tg)
    for m in range(2, tg.steps + 1):
        lag = (m - 1) * tg.dt
        assert H[m] == pytest.approx(np.full(sg.node_count, tg.dt * lag), rel=1e-14)


def test_history_adjointness():
    sg, tg = _grids(n=9, M=17, T=1.0)
    kern = HistoryKernel.from_function(
        lambda tau: 0.8 * np.exp(-1.3 * tau), tg, sg.zeros()
    )
    rng = np.random.default_rng(0)
    for _ in range(20):
        dq = rng.standard_normal((tg.steps + 1, sg.node_count))
        mu = rng.standard_normal((tg.steps + 1, sg.node_count))
        lhs = float((history_linear_apply(kern, dq, sg, tg) * mu).sum())
        rhs = float((dq * history_adjoint_apply(kern, mu, sg, tg)).sum())
        assert abs(lhs - rhs) <= 1e-13 * max(1.0, abs(lhs), abs(rhs))


def test_history_adjoint_last_slot_zero():
    sg, tg = _grids(M=6)
    kern = HistoryKernel.constant(1.0, tg, sg.zeros())
    mu = np.random.default_rng(1).standard_normal((tg.steps + 1, sg.node_count))
    out = history_adjoint_apply(kern, mu, sg, tg)
    assert np.all(out[tg.steps] == 0.0)


def test_history_monotone_for_nonnegative_kernel():
    sg, tg = _grids(n=5, M=12, T=1.0)
    kern = HistoryKernel.from_function(lambda tau: np.exp(-tau), tg, sg.zeros())
    assert kern.is_monotone
    rng = np.random.default_rng(2)
    q2 = rng.random((tg.steps + 1, sg.node_count))
    q1 = q2 + rng.random((tg.steps + 1, sg.node_count))   # q1 >= q2
    diff = history_apply(kern, q1, sg, tg) - history_apply(kern, q2, sg, tg)
    assert diff.min() >= 0.0


def test_history_kernel_validation():
    sg, tg = _grids()
    with pytest.raises(ValueError):
        HistoryKernel(np.ones((2, 2)), sg.zeros())
    short = HistoryKernel(np.ones(2), sg.zeros())
    with pytest.raises(ValueError):
        history_apply(short, np.zeros((tg.steps + 1, sg.node_count)), sg, tg)
    bad_offset = HistoryKernel.constant(1.0, tg, np.zeros(sg.node_count + 1))
    with pytest.raises(ValueError):
        history_apply(bad_offset, np.zeros((tg.steps + 1, sg.node_count)), sg, tg)


def test_negative_kernel_not_monotone():
    sg, tg = _grids()
    kern = HistoryKernel.from_function(lambda tau: -np.ones_like(tau), tg, sg.zeros())
    assert not kern.is_monotone
    assert kern.max_abs() == 1.0


# --------------------------------------------------------------------------
# energy
# --------------------------------------------------------------------------

def test_energy_minimized_by_elliptic_solution():
    from fatigueopt.forward import EllipticOperator

    params = ModelParams(alpha=0.3, beta=1.1, viscosity=1.0)
    sg = build_space_grid(1, (1.0,), (21,))
    rng = np.random.default_rng(3)
    q = rng.standard_normal(sg.node_count)
    load = rng.standard_normal(sg.node_count)
    phi = EllipticOperator(params, sg).solve_phi(q, load)
    e_star = energy_eval(params, q, phi, load, sg)
    for _ in range(5):
        v = rng.standard_normal(sg.node_count)
        assert energy_eval(params, q, phi + 0.01 * v, load, sg) >= e_star - 1e-12
