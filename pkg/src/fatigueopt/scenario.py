"""Scenario files: TOML schema, validation, and object construction.

A scenario pins everything one run needs: grids, model coefficients, the
fatigue law, the history kernel, the control trajectory, the objective,
smoothing widths, optimizer path, solver tolerances, and the RNG seed.
Profiles for controls/targets are separable products of a time profile
(constant / linear / sine) and a space profile (constant / cosine /
gaussian), or an external trajectory CSV.

``validate_scenario`` returns a list of per-key diagnostics instead of
raising on first error, so the command line can report everything wrong
with a file at once.

Schema sketch (see the shipped ``scenarios/*.toml`` for living examples)::

    [space]    dimension, extents = [..], nodes = [..]
    [time]     final, steps
    [model]    alpha, beta, viscosity
    [fatigue]  c0, threshold, slope, floor
    [history]  kind = "constant"|"exponential"|"zero", value/amplitude/rate,
               offset (scalar initial accumulation)
    [control]  kind = "constant"|"separable"|"csv" (+ [control.time],
               [control.space] profile tables, or path)
    [objective]         kappa, [objective.target] kind = "zero"|"constant"|
                        "separable"|"forward" (+ nested control table)
    [smoothing]         eps_max, eps_f            (optional)
    [path]              optimizer path overrides  (optional)
    [solver]            picard_tol, max_picard    (optional)
    [stationarity]      tol_z, tol_f              (optional)
    [probe]             directions                (optional)
    [direction]         control table for linearize/fd probes (optional)
    [fd]                taus = [..]               (optional)
    [run]               seed                      (optional)
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .adjoint import ObjectiveSpec
from .forward import DEFAULT_MAX_PICARD, DEFAULT_PICARD_TOL, solve_state
from .grids import SpaceGrid, TimeGrid, build_space_grid
from .model import FatigueLaw, HistoryKernel, ModelParams, SmoothingParams
from .optimize import PathConfig
from .trajio import load_trajectory_csv

__all__ = ["Scenario", "ScenarioError", "load_scenario", "validate_scenario"]


class ScenarioError(ValueError):
    """Scenario failed validation; ``diagnostics`` lists per-key messages."""

    def __init__(self, diagnostics: list):
        self.diagnostics = list(diagnostics)
        super().__init__(
            "scenario validation failed:\n" + "\n".join(f"  - {d}" for d in self.diagnostics)
        )


@dataclass
class Scenario:
    """Fully constructed scenario ready to run.

    ``raw`` keeps the parsed TOML dict and ``config_sha256`` the hash of the
    file bytes; every output artifact echoes the hash.
    """

    space: SpaceGrid
    time: TimeGrid
    params: ModelParams
    law: FatigueLaw
    kernel: HistoryKernel
    control: np.ndarray
    objective: ObjectiveSpec
    smoothing: Optional[SmoothingParams]
    path: PathConfig
    picard_tol: float
    max_picard: int
    tol_z: Optional[float]
    tol_f: Optional[float]
    probe_directions: int
    direction: Optional[np.ndarray]
    fd_taus: Optional[list]
    seed: int
    raw: dict = field(repr=False, default_factory=dict)
    config_sha256: str = ""
    warnings: list = field(default_factory=list)

    def apply_tol_overrides(self, overrides: dict) -> None:
        """Apply ``--tol-overrides`` key=value pairs (validated keys only)."""
        allowed = {
            "picard_tol": float,
            "max_picard": int,
            "tol_z": float,
            "tol_f": float,
            "grad_tol0": float,
        }
        bad = [k for k in overrides if k not in allowed]
        if bad:
            raise ScenarioError(
                [f"tol-overrides: unknown key {k!r} (allowed: {sorted(allowed)})" for k in bad]
            )
        for k, v in overrides.items():
            value = allowed[k](v)
            if k == "grad_tol0":
                self.path.grad_tol0 = value
            else:
                setattr(self, k, value)


# --------------------------------------------------------------------------
# low-level checked getters
# --------------------------------------------------------------------------

class _Checker:
    """Collects per-key diagnostics while pulling typed values out of TOML."""

    def __init__(self, raw: dict):
        self.raw = raw
        self.errors: list = []
        self.warnings: list = []

    def table(self, key: str, required: bool = True) -> dict:
        node = self.raw
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                if required:
                    self.errors.append(f"{key}: missing required table")
                return {}
            node = node[part]
        if not isinstance(node, dict):
            self.errors.append(f"{key}: expected a table")
            return {}
        return node

    def value(self, table: dict, key: str, kind, *, required=True, default=None,
              positive=False, nonnegative=False, label=""):
        name = f"{label}.{key}" if label else key
        if key not in table:
            if required:
                self.errors.append(f"{name}: missing required key")
            return default
        v = table[key]
        if kind is float and isinstance(v, bool):
            self.errors.append(f"{name}: expected a number, got a boolean")
            return default
        if kind is float and isinstance(v, (int, float)):
            v = float(v)
        elif kind is int and isinstance(v, int) and not isinstance(v, bool):
            v = int(v)
        elif kind is str and isinstance(v, str):
            pass
        elif kind is bool and isinstance(v, bool):
            pass
        elif kind is list and isinstance(v, list):
            pass
        else:
            self.errors.append(f"{name}: expected {kind.__name__}, got {type(v).__name__}")
            return default
        if positive and isinstance(v, (int, float)) and not (v > 0):
            self.errors.append(f"{name}: must be > 0, got {v}")
            return default
        if nonnegative and isinstance(v, (int, float)) and v < 0:
            self.errors.append(f"{name}: must be >= 0, got {v}")
            return default
        return v


# --------------------------------------------------------------------------
# profile builders
# --------------------------------------------------------------------------

def _time_profile(chk: _Checker, table: dict, times: np.ndarray, label: str) -> np.ndarray:
    profile = chk.value(table, "profile", str, required=True, default="constant", label=label)
    if profile == "constant":
        v = chk.value(table, "value", float, required=True, default=0.0, label=label)
        return np.full_like(times, v)
    if profile == "linear":
        off = chk.value(table, "offset", float, required=True, default=0.0, label=label)
        slope = chk.value(table, "slope", float, required=True, default=0.0, label=label)
        return off + slope * times
    if profile == "sine":
        off = chk.value(table, "offset", float, required=False, default=0.0, label=label)
        amp = chk.value(table, "amplitude", float, required=True, default=0.0, label=label)
        freq = chk.value(table, "frequency", float, required=True, default=0.0, label=label)
        phase = chk.value(table, "phase", float, required=False, default=0.0, label=label)
        return off + amp * np.sin(2.0 * np.pi * freq * times + phase)
    chk.errors.append(f"{label}.profile: unknown profile {profile!r}")
    return np.zeros_like(times)


def _space_profile(chk: _Checker, table: dict, space: SpaceGrid, label: str) -> np.ndarray:
    profile = chk.value(table, "profile", str, required=True, default="constant", label=label)
    if profile == "constant":
        v = chk.value(table, "value", float, required=True, default=0.0, label=label)
        return space.constant(v)
    if profile == "cosine":
        off = chk.value(table, "offset", float, required=False, default=0.0, label=label)
        amp = chk.value(table, "amplitude", float, required=True, default=0.0, label=label)
        modes = chk.value(table, "modes", list, required=False,
                          default=[1] * space.dimension, label=label)
        if len(modes) != space.dimension:
            chk.errors.append(f"{label}.modes: need {space.dimension} entries")
            modes = [1] * space.dimension
        out = np.full(space.node_count, float(amp))
        for axis in range(space.dimension):
            x = space.coords[:, axis]
            out *= np.cos(np.pi * float(modes[axis]) * x / space.extents[axis])
        return off + out
    if profile == "gaussian":
        off = chk.value(table, "offset", float, required=False, default=0.0, label=label)
        amp = chk.value(table, "amplitude", float, required=True, default=0.0, label=label)
        width = chk.value(table, "width", float, required=True, default=1.0,
                          positive=True, label=label)
        center = chk.value(table, "center", list, required=False,
                           default=[0.5 * L for L in space.extents], label=label)
        if len(center) != space.dimension:
            chk.errors.append(f"{label}.center: need {space.dimension} entries")
            center = [0.5 * L for L in space.extents]
        r2 = np.zeros(space.node_count)
        for axis in range(space.dimension):
            r2 += (space.coords[:, axis] - float(center[axis])) ** 2
        return off + amp * np.exp(-r2 / (2.0 * width**2))
    chk.errors.append(f"{label}.profile: unknown profile {profile!r}")
    return space.zeros()


def _control_spec(
    chk: _Checker,
    table: dict,
    space: SpaceGrid,
    time: TimeGrid,
    label: str,
    base_dir: Path,
) -> np.ndarray:
    kind = chk.value(table, "kind", str, required=True, default="constant", label=label)
    if kind == "constant":
        v = chk.value(table, "value", float, required=True, default=0.0, label=label)
        return np.full((time.steps + 1, space.node_count), v)
    if kind == "separable":
        tprof = _time_profile(chk, table.get("time", {"profile": "constant", "value": 1.0}),
                              time.times, f"{label}.time")
        sprof = _space_profile(chk, table.get("space", {"profile": "constant", "value": 1.0}),
                               space, f"{label}.space")
        return np.outer(tprof, sprof)
    if kind == "csv":
        rel = chk.value(table, "path", str, required=True, default="", label=label)
        if not rel:
            return time.zeros(space)
        p = Path(rel)
        if not p.is_absolute():
            p = base_dir / p
        if not p.exists():
            chk.errors.append(f"{label}.path: file not found: {p}")
            return time.zeros(space)
        data = load_trajectory_csv(p)
        values = data["values"]
        if values.shape != (time.steps + 1, space.node_count):
            chk.errors.append(
                f"{label}.path: trajectory shape {values.shape} does not match "
                f"grids ({time.steps + 1}, {space.node_count})"
            )
            return time.zeros(space)
        return values
    chk.errors.append(f"{label}.kind: unknown kind {kind!r}")
    return time.zeros(space)


# --------------------------------------------------------------------------
# loading
# --------------------------------------------------------------------------

def _build(raw: dict, sha: str, base_dir: Path) -> tuple:
    chk = _Checker(raw)

    t_space = chk.table("space")
    dim = chk.value(t_space, "dimension", int, default=1, label="space")
    extents = chk.value(t_space, "extents", list, default=[1.0], label="space")
    nodes = chk.value(t_space, "nodes", list, default=[2], label="space")
    space = None
    if not chk.errors:
        try:
            space = build_space_grid(dim, tuple(float(e) for e in extents),
                                     tuple(int(n) for n in nodes))
        except (TypeError, ValueError) as exc:
            chk.errors.append(f"space: {exc}")

    t_time = chk.table("time")
    final = chk.value(t_time, "final", float, default=1.0, positive=True, label="time")
    steps = chk.value(t_time, "steps", int, default=1, label="time")
    time = None
    if not chk.errors:
        try:
            time = TimeGrid(final, steps)
        except (TypeError, ValueError) as exc:
            chk.errors.append(f"time: {exc}")

    t_model = chk.table("model")
    alpha = chk.value(t_model, "alpha", float, default=1.0, positive=True, label="model")
    beta = chk.value(t_model, "beta", float, default=1.0, positive=True, label="model")
    visc = chk.value(t_model, "viscosity", float, default=1.0, positive=True, label="model")
    params = None
    if not chk.errors:
        params = ModelParams(alpha, beta, visc)

    t_fat = chk.table("fatigue")
    c0 = chk.value(t_fat, "c0", float, default=1.0, positive=True, label="fatigue")
    thr = chk.value(t_fat, "threshold", float, default=0.0, label="fatigue")
    slope = chk.value(t_fat, "slope", float, required=False, default=0.0,
                      nonnegative=True, label="fatigue")
    floor = chk.value(t_fat, "floor", float, required=False, default=0.0,
                      nonnegative=True, label="fatigue")
    law = None
    if not chk.errors:
        try:
            law = FatigueLaw(c0, thr, slope, floor)
        except ValueError as exc:
            chk.errors.append(f"fatigue: {exc}")

    kernel = None
    if space is not None and time is not None:
        t_hist = chk.table("history")
        kind = chk.value(t_hist, "kind", str, default="zero", label="history")
        q0 = chk.value(t_hist, "offset", float, required=False, default=0.0, label="history")
        offset = space.constant(q0)
        if kind == "constant":
            val = chk.value(t_hist, "value", float, default=0.0, label="history")
            kernel = HistoryKernel.constant(val, time, offset)
        elif kind == "exponential":
            amp = chk.value(t_hist, "amplitude", float, default=0.0, label="history")
            rate = chk.value(t_hist, "rate", float, default=0.0, nonnegative=True,
                             label="history")
            kernel = HistoryKernel.from_function(
                lambda tau: amp * np.exp(-rate * tau), time, offset
            )
        elif kind == "zero":
            kernel = HistoryKernel.constant(0.0, time, offset)
        else:
            chk.errors.append(f"history.kind: unknown kind {kind!r}")
        if kernel is not None and not kernel.is_monotone:
            chk.warnings.append(
                "history: kernel takes negative values; monotonicity of the "
                "history map is not guaranteed"
            )

    control = None
    if space is not None and time is not None:
        control = _control_spec(chk, chk.table("control"), space, time, "control", base_dir)

    objective = None
    if space is not None and time is not None and params is not None and \
            law is not None and kernel is not None:
        t_obj = chk.table("objective", required=False)
        kappa = chk.value(t_obj, "kappa", float, required=False, default=0.0,
                          nonnegative=True, label="objective") if t_obj else 0.0
        t_target = t_obj.get("target", {"kind": "zero"}) if t_obj else {"kind": "zero"}
        tkind = chk.value(t_target, "kind", str, default="zero", label="objective.target")
        if tkind == "zero":
            q_d = time.zeros(space)
        elif tkind == "constant":
            v = chk.value(t_target, "value", float, default=0.0, label="objective.target")
            q_d = np.full((time.steps + 1, space.node_count), v)
        elif tkind == "separable":
            q_d = _control_spec(chk, {**t_target, "kind": "separable"}, space, time,
                                "objective.target", base_dir)
        elif tkind == "forward":
            ref = _control_spec(chk, t_target.get("control", {}), space, time,
                                "objective.target.control", base_dir)
            if not chk.errors:
                q_d = solve_state(params, law, kernel, ref, space, time).q
            else:
                q_d = time.zeros(space)
        elif tkind == "csv":
            q_d = _control_spec(chk, {**t_target, "kind": "csv"}, space, time,
                                "objective.target", base_dir)
        else:
            chk.errors.append(f"objective.target.kind: unknown kind {tkind!r}")
            q_d = time.zeros(space)
        objective = ObjectiveSpec(q_target=q_d, kappa=kappa)

    smoothing = None
    t_sm = chk.table("smoothing", required=False)
    if t_sm:
        em = chk.value(t_sm, "eps_max", float, default=0.1, positive=True, label="smoothing")
        ef = chk.value(t_sm, "eps_f", float, default=0.1, positive=True, label="smoothing")
        if not chk.errors:
            smoothing = SmoothingParams(em, ef)

    path = PathConfig()
    t_path = chk.table("path", required=False)
    if t_path:
        kwargs = {}
        fields_map = {
            "eps_max0": (float, dict(positive=True)),
            "eps_f0": (float, dict(positive=True)),
            "decay": (float, dict(positive=True)),
            "stages": (int, dict(positive=True)),
            "grad_tol0": (float, dict(positive=True)),
            "max_inner": (int, dict(positive=True)),
            "armijo_c": (float, dict(positive=True)),
            "backtrack": (float, dict(positive=True)),
            "step_init": (float, dict(positive=True)),
            "step_min": (float, dict(positive=True)),
            "proximal": (bool, {}),
        }
        for key, (kind, extra) in fields_map.items():
            if key in t_path:
                kwargs[key] = chk.value(t_path, key, kind, label="path", **extra)
        if not chk.errors:
            try:
                path = PathConfig(**{k: v for k, v in kwargs.items() if v is not None})
            except ValueError as exc:
                chk.errors.append(f"path: {exc}")

    t_solver = chk.table("solver", required=False)
    picard_tol = chk.value(t_solver, "picard_tol", float, required=False,
                           default=DEFAULT_PICARD_TOL, positive=True,
                           label="solver") if t_solver else DEFAULT_PICARD_TOL
    max_picard = chk.value(t_solver, "max_picard", int, required=False,
                           default=DEFAULT_MAX_PICARD, positive=True,
                           label="solver") if t_solver else DEFAULT_MAX_PICARD

    t_stat = chk.table("stationarity", required=False)
    tol_z = chk.value(t_stat, "tol_z", float, required=False, default=None,
                      positive=True, label="stationarity") if t_stat else None
    tol_f = chk.value(t_stat, "tol_f", float, required=False, default=None,
                      positive=True, label="stationarity") if t_stat else None

    t_probe = chk.table("probe", required=False)
    probe_dirs = chk.value(t_probe, "directions", int, required=False, default=10,
                           positive=True, label="probe") if t_probe else 10

    direction = None
    t_dir = chk.table("direction", required=False)
    if t_dir and space is not None and time is not None:
        direction = _control_spec(chk, t_dir, space, time, "direction", base_dir)

    fd_taus = None
    t_fd = chk.table("fd", required=False)
    if t_fd:
        taus = chk.value(t_fd, "taus", list, required=False, default=None, label="fd")
        if taus is not None:
            try:
                fd_taus = [float(t) for t in taus]
                if any(not (t > 0.0) for t in fd_taus):
                    chk.errors.append("fd.taus: all entries must be > 0")
            except (TypeError, ValueError):
                chk.errors.append("fd.taus: expected a list of numbers")

    t_run = chk.table("run", required=False)
    seed = chk.value(t_run, "seed", int, required=False, default=0,
                     label="run") if t_run else 0

    if chk.errors:
        return None, chk.errors, chk.warnings

    scenario = Scenario(
        space=space,
        time=time,
        params=params,
        law=law,
        kernel=kernel,
        control=control,
        objective=objective,
        smoothing=smoothing,
        path=path,
        picard_tol=picard_tol,
        max_picard=max_picard,
        tol_z=tol_z,
        tol_f=tol_f,
        probe_directions=probe_dirs,
        direction=direction,
        fd_taus=fd_taus,
        seed=seed,
        raw=raw,
        config_sha256=sha,
        warnings=chk.warnings,
    )
    return scenario, [], chk.warnings


def _read_raw(path: Union[str, Path]) -> tuple:
    p = Path(path)
    if not p.exists():
        raise ScenarioError([f"{p}: file not found"])
    data = p.read_bytes()
    sha = hashlib.sha256(data).hexdigest()
    try:
        raw = tomllib.loads(data.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ScenarioError([f"{p}: not valid TOML: {exc}"]) from exc
    return raw, sha, p.parent


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Parse, validate and construct one scenario.

    Raises
    ------
    ScenarioError
        With the full list of per-key diagnostics on any validation failure.
    """
    raw, sha, base_dir = _read_raw(path)
    scenario, errors, _warnings = _build(raw, sha, base_dir)
    if errors:
        raise ScenarioError(errors)
    return scenario


def validate_scenario(path: Union[str, Path]) -> list:
    """Return the list of per-key diagnostics (empty when the file is valid)."""
    try:
        raw, sha, base_dir = _read_raw(path)
    except ScenarioError as exc:
        return exc.diagnostics
    _, errors, _warnings = _build(raw, sha, base_dir)
    return errors
