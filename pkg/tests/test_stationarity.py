"""Active-set classification, accumulators, system grading, and the
directional first-order probe."""

import numpy as np
import pytest

from fatigueopt.forward import solve_state
from fatigueopt.grids import TimeGrid, build_space_grid
from fatigueopt.model import HistoryKernel
from fatigueopt.stationarity import (
    MODES,
    MultiplierBundle,
    b_stationarity_probe,
    check_system,
    classify_active_sets,
    compute_G,
    extract_multipliers,
)


# --------------------------------------------------------------------------
# active sets
# --------------------------------------------------------------------------

def test_classify_bands(get_scenario, make_synthetic_state):
    sc = get_scenario("engagement")     # threshold 0.3, floor onset 4.3
    space = build_space_grid(1, (1.0,), (4,))
    time = TimeGrid(1.0, 2)
    kernel = HistoryKernel.constant(1.0, time, space.constant(0.0))
    z = np.array([[0.5, 1e-9, -2e-7, -0.3]] * 3)
    history = np.array([[0.3, 0.3 + 5e-7, 4.3, 1.0]] * 3)
    state = make_synthetic_state(space, time, sc.params, sc.law, kernel,
                                 z, history)

    sets = classify_active_sets(state)
    assert sets.tol_z == 1e-6 * max(1.0, np.max(np.abs(z)))
    assert np.array_equal(sets.z_pos[0], [True, False, False, False])
    assert np.array_equal(sets.z_zero[0], [False, True, True, False])
    assert np.array_equal(sets.z_neg[0], [False, False, False, True])
    assert np.array_equal(sets.kink[0], [True, True, True, False])
    # the three bands partition every node
    total = sets.z_pos.astype(int) + sets.z_zero.astype(int) + sets.z_neg.astype(int)
    assert np.all(total == 1)

    wide = classify_active_sets(state, tol_z=0.4, tol_f=0.5)
    assert np.array_equal(wide.z_pos[0], [True, False, False, False])
    assert np.array_equal(wide.z_zero[0], [False, True, True, True])
    assert np.array_equal(wide.kink[0], [True, True, True, False])


def test_constant_law_has_no_kinks(get_scenario, make_synthetic_state):
    sc = get_scenario("constant_rate")  # slope 0: the law never degrades
    space = build_space_grid(1, (1.0,), (3,))
    time = TimeGrid(1.0, 2)
    kernel = HistoryKernel.constant(0.0, time, space.constant(0.0))
    state = make_synthetic_state(space, time, sc.params, sc.law, kernel,
                                 0.1, 10.0)
    sets = classify_active_sets(state)
    assert not sets.kink.any()


# --------------------------------------------------------------------------
# accumulators
# --------------------------------------------------------------------------

def test_compute_G_unit_impulse(get_scenario, make_synthetic_state):
    # unit kernel, zero lambda and a unit mu at time slot 2: the transpose
    # spreads the impulse onto the earlier slots and the outer left-rectangle
    # integral accumulates dt^2 per remaining cell, exactly in floating point
    sc = get_scenario("engagement")
    space = build_space_grid(1, (1.0,), (3,))
    time = TimeGrid(3.0, 3)             # dt = 1 keeps every product exact
    kernel = HistoryKernel.constant(1.0, time, space.constant(0.0))
    state = make_synthetic_state(space, time, sc.params, sc.law, kernel,
                                 0.0, sc.law.threshold)
    j_star = 1
    mu = time.zeros(space)
    mu[2, j_star] = 1.0
    bundle = MultiplierBundle(lam=time.zeros(space), mu=mu)
    sets = classify_active_sets(state)
    assert sets.kink.all()

    compute_G(state, bundle, sets)
    dt = time.dt
    expected = dt * dt * np.array([2.0, 1.0, 0.0, 0.0])
    assert np.array_equal(bundle.G_plus[:, j_star], expected)
    assert np.array_equal(bundle.G_minus[:, j_star], expected)
    other = [j for j in range(space.node_count) if j != j_star]
    assert np.all(bundle.G_plus[:, other] == 0.0)
    assert np.all(bundle.G_minus[:, other] == 0.0)


def test_feasible_bundle_accumulators_sign_definite(make_feasible_bundle):
    state, _, _, bundle = make_feasible_bundle(seed=0)
    compute_G(state, bundle, classify_active_sets(state))
    assert np.all(bundle.G_plus >= 0.0)
    assert np.all(bundle.G_minus <= 0.0)


# --------------------------------------------------------------------------
# system grading
# --------------------------------------------------------------------------

def _check(state, xi, w, bundle, mode):
    from fatigueopt.adjoint import ObjectiveSpec

    objective = ObjectiveSpec(q_target=np.zeros_like(xi))
    return check_system(state, xi, w, bundle, objective, mode=mode)


def test_feasible_bundle_grades_clean(make_feasible_bundle):
    state, xi, w, bundle = make_feasible_bundle(seed=1)
    report = _check(state, xi, w, bundle, "improved")
    assert report.kkt_inactive_residual == 0.0
    assert report.sign_violations_weak.count == 0
    assert report.sign_violations_weak.max_violation == 0.0
    assert report.sign_violations_weak.measure == 0.0
    report_s = _check(state, xi, w, bundle, "strong")
    assert report_s.sign_violations_strong.count == 0
    assert report_s.sign_violations_strong.max_violation == 0.0
    assert report.terminal_xi == 0.0
    assert report.gradient_residual == 0.0   # zero control, zero costate


def test_strong_feasibility_implies_weak(make_feasible_bundle):
    # for a nonnegative kernel no cancellation enters the accumulators, so
    # bundles built to pass the sharp conditions also pass the weak ones
    for seed in range(20):
        state, xi, w, bundle = make_feasible_bundle(seed=seed)
        report = _check(state, xi, w, bundle, "improved")
        assert report.sign_violations_strong.count == 0
        assert report.sign_violations_weak.count == 0


def test_corrupted_multiplier_is_detected(make_feasible_bundle):
    state, xi, w, bundle = make_feasible_bundle(seed=2)
    sets = classify_active_sets(state)
    cells = np.argwhere(sets.z_pos[1:])
    k, j = cells[0]
    delta = 1e-3
    lam_bad = bundle.lam.copy()
    lam_bad[k + 1, j] += delta
    bad = MultiplierBundle(lam=lam_bad, mu=bundle.mu.copy())
    report = _check(state, xi, w, bad, "limit")
    assert report.kkt_inactive_residual == pytest.approx(delta, rel=1e-9)
    assert report.details["kkt"]["lambda_on_active"]["count"] == 1


def test_graded_residual_keys_by_mode(make_feasible_bundle):
    state, xi, w, bundle = make_feasible_bundle(seed=3)
    base = {"adjoint_residual_q", "terminal_xi", "adjoint_residual_phi",
            "kkt_inactive_residual", "gradient_residual"}
    reports = {m: _check(state, xi, w, bundle, m) for m in MODES}
    assert set(reports["limit"].graded_residuals) == base
    assert set(reports["improved"].graded_residuals) == base | {"sign_violation_max_weak"}
    assert set(reports["strong"].graded_residuals) == base | {"sign_violation_max_strong"}
    # the costate residuals are identical across modes
    for m in ("improved", "strong"):
        assert reports[m].adjoint_residual_q == reports["limit"].adjoint_residual_q
        assert reports[m].gradient_residual == reports["limit"].gradient_residual
    payload = reports["improved"].to_dict()
    assert payload["mode"] == "improved"
    assert set(payload["details"]["set_sizes"]) == {"z_pos", "z_zero", "z_neg", "kink"}


def test_disc_tol_formula(make_feasible_bundle):
    state, xi, w, bundle = make_feasible_bundle(seed=4)
    from fatigueopt.adjoint import ObjectiveSpec

    eps_used = 0.05
    report = check_system(state, xi, w, bundle,
                          ObjectiveSpec(q_target=np.zeros_like(xi)),
                          mode="limit", eps_used=eps_used)
    params, time = state.params, state.time
    c_model = (1.0 + params.beta
               + time.final_time * state.kernel.max_abs()) / min(1.0, params.viscosity)
    assert report.model_constant == pytest.approx(c_model, rel=1e-14)
    assert report.disc_tol == pytest.approx(
        c_model * (time.dt + eps_used) * report.reference_scale, rel=1e-14)
    assert report.eps_used == eps_used
    assert report.reference_scale >= 1.0


def test_check_system_rejects_unknown_mode(make_feasible_bundle):
    state, xi, w, bundle = make_feasible_bundle(seed=5)
    from fatigueopt.adjoint import ObjectiveSpec

    with pytest.raises(ValueError):
        check_system(state, xi, w, bundle,
                     ObjectiveSpec(q_target=np.zeros_like(xi)), mode="weak")


def test_extract_multipliers_copies(get_scenario):
    from fatigueopt.adjoint import ObjectiveSpec, solve_adjoint_regularized
    from fatigueopt.forward import solve_state_regularized

    sc = get_scenario("smooth_activation")
    state = solve_state_regularized(sc.params, sc.law, sc.kernel, sc.control,
                                    sc.space, sc.time, sc.smoothing)
    adj = solve_adjoint_regularized(state, sc.objective)
    bundle = extract_multipliers(adj)
    assert np.array_equal(bundle.lam, adj.lam)
    bundle.lam[0, 0] = 123.0
    assert adj.lam[0, 0] != 123.0
    assert bundle.G_plus is None and bundle.G_minus is None


# --------------------------------------------------------------------------
# directional probe
# --------------------------------------------------------------------------

def test_probe_at_unforced_optimum(get_scenario):
    # zero control on the frozen problem is a global minimum; every one-sided
    # directional value vanishes identically
    sc = get_scenario("frozen_state")
    load = sc.time.zeros(sc.space)
    state = solve_state(sc.params, sc.law, sc.kernel, load, sc.space, sc.time)
    result = b_stationarity_probe(state, sc.objective, n_directions=5, seed=3)
    assert result.n_directions == 10      # +d / -d pairs
    assert result.values.shape == (10,)
    assert np.all(result.values == 0.0)
    assert result.min_value >= -1e-12
    payload = result.to_dict()
    assert payload["n_directions"] == 10
    assert payload["seed"] == 3


def test_probe_detects_descent_direction(get_scenario):
    # at a non-stationary control the probe along -gradient-like directions
    # must report a negative value
    sc = get_scenario("constant_rate")
    state = solve_state(sc.params, sc.law, sc.kernel, sc.control, sc.space,
                        sc.time)
    result = b_stationarity_probe(state, sc.objective, n_directions=8, seed=0)
    assert result.min_value < 0.0


def test_probe_custom_directions(get_scenario):
    sc = get_scenario("frozen_state")
    load = sc.time.zeros(sc.space)
    state = solve_state(sc.params, sc.law, sc.kernel, load, sc.space, sc.time)
    d = np.ones((sc.time.steps + 1, sc.space.node_count))
    result = b_stationarity_probe(state, sc.objective, directions=[d])
    assert result.n_directions == 1
