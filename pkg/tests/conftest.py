"""Shared fixtures: cached scenario loading, the tracking optimum, and a
builder for synthetic states used by the stationarity tests."""

from pathlib import Path

import numpy as np
import pytest

from fatigueopt.forward import StateSolution, solve_state
from fatigueopt.grids import TimeGrid, build_space_grid
from fatigueopt.model import HistoryKernel
from fatigueopt.optimize import optimize
from fatigueopt.scenario import load_scenario
from fatigueopt.stationarity import MultiplierBundle

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"

SCENARIO_NAMES = sorted(p.stem for p in SCENARIO_DIR.glob("*.toml"))


@pytest.fixture(scope="session")
def get_scenario():
    """Load a shipped scenario by name, cached for the whole session."""
    cache = {}

    def _get(name):
        if name not in cache:
            cache[name] = load_scenario(SCENARIO_DIR / f"{name}.toml")
        return cache[name]

    return _get


@pytest.fixture(scope="session")
def tracking_optimum(get_scenario):
    """The tracking scenario, its initial state, and the optimizer result.

    Shared between the optimizer, stationarity and acceptance tests because
    the smoothing-path descent is the most expensive single computation in
    the suite.
    """
    sc = get_scenario("tracking")
    initial = solve_state(
        sc.params, sc.law, sc.kernel, sc.control, sc.space, sc.time,
        picard_tol=sc.picard_tol, max_picard=sc.max_picard,
    )
    result = optimize(
        sc.params, sc.law, sc.kernel, sc.control, sc.space, sc.time,
        sc.objective, sc.path,
        picard_tol=sc.picard_tol, max_picard=sc.max_picard,
    )
    return sc, initial, result


@pytest.fixture()
def make_synthetic_state(get_scenario):
    """Builder for a :class:`StateSolution` with hand-planted ``z`` and
    history fields (the dynamics are not satisfied; only the classifier and
    multiplier machinery read these fields)."""

    def _make(space, time, params, law, kernel, z, history):
        shape = (time.steps + 1, space.node_count)
        z = np.broadcast_to(np.asarray(z, dtype=float), shape).copy()
        history = np.broadcast_to(np.asarray(history, dtype=float), shape).copy()
        zero = np.zeros(shape)
        return StateSolution(
            q=zero.copy(), phi=zero.copy(), z=z, history=history,
            regularized=False, smoothing=None, params=params, law=law,
            kernel=kernel, load=zero.copy(), space=space, time=time,
        )

    return _make


@pytest.fixture()
def make_feasible_bundle(get_scenario, make_synthetic_state):
    """Builder for randomized synthetic candidates whose multipliers satisfy
    the strong (hence also the accumulator-based) sign conditions and the
    inactive-set identities exactly in floating point.

    The activation is planted with exact zeros on a random subset, the
    history sits exactly on the fatigue kink there and at least 0.1 away
    from both kinks elsewhere, and every multiplier is assembled from the
    same expressions the checker grades, so feasibility is bitwise.
    """

    def _make(seed, steps=40, nodes=21):
        sc = get_scenario("engagement")
        space = build_space_grid(1, (1.0,), (nodes,))
        time = TimeGrid(1.0, steps)
        kernel = HistoryKernel.constant(1.0, time, space.constant(0.0))
        law, params = sc.law, sc.params
        eps_v = params.viscosity
        rng = np.random.default_rng(seed)
        shape = (time.steps + 1, space.node_count)

        zero_mask = rng.random(shape) < 0.3
        z = np.where(zero_mask, 0.0, rng.standard_normal(shape))
        lo = law.threshold + 0.1
        hi = law.floor_onset - 0.1 if np.isfinite(law.floor_onset) else lo + 2.0
        off_kink = lo + (hi - lo) * rng.random(shape)
        history = np.where(zero_mask, law.threshold, off_kink)
        state = make_synthetic_state(space, time, params, law, kernel, z, history)

        xi = np.abs(rng.standard_normal(shape))
        xi[-1] = 0.0
        gain = rng.random(shape)          # hull coordinates in [0, 1]
        ratio = xi / eps_v
        lam = np.where(z > 0.0, ratio, np.where(zero_mask, gain * ratio, 0.0))
        f_right, _ = law.onesided_slopes(history)
        mu = np.where(zero_mask, -(gain * (law.slope * lam)), f_right * lam)
        w = time.zeros(space)
        return state, xi, w, MultiplierBundle(lam=lam, mu=mu)

    return _make
