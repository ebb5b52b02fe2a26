"""Command line: scenario-driven runs with deterministic artifacts.

Every subcommand reads one TOML scenario, writes its artifacts into
``--out`` and drops a ``manifest.json`` recording the subcommand, the
scenario hash, the effective seed, tool versions, and the produced files.
Outputs are deterministic for a fixed scenario and seed (bit-identical
bytes), except for the ``generated_at`` / ``wall_time_s`` manifest entries.

Exit codes: 0 success; 2 malformed or invalid scenario (per-key diagnostics
on stderr); 3 solver failure (diagnostics on stderr and in the manifest).

Subcommands
-----------
solve-state
    Nonsmooth forward solve; trajectories under ``trajectories/``.
solve-state-eps
    Smoothed forward solve (needs a ``[smoothing]`` table).
linearize
    Directional sensitivity along the ``[direction]`` table; smoothed rules
    when the scenario has ``[smoothing]``, exact one-sided rules otherwise.
fd-check
    Finite-difference audit of the sensitivity (``fd_check.csv/json``).
grad-check
    Central-difference audit of the reduced gradient (needs smoothing).
optimize
    Smoothing-path descent; writes ``ell_star.csv``, the final state and
    ``optimize.json``.
check-stationarity
    Grade a candidate (``--candidate DIR`` reads a previous optimize
    output, default: the scenario control) against the limit, improved and
    strong systems; writes ``report.json`` plus multiplier trajectories.
probe-bstat
    Directional first-order probe at a candidate; writes ``probe.json``.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
import time as _time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .adjoint import fd_gradient_check, objective_breakdown, solve_adjoint_regularized
from .forward import SolverError, solve_state, solve_state_regularized
from .linearized import fd_directional_check, solve_linearized
from .model import SmoothingParams
from .optimize import optimize as run_optimize
from .scenario import Scenario, ScenarioError, load_scenario
from .stationarity import (
    MODES,
    b_stationarity_probe,
    check_system,
    classify_active_sets,
    compute_G,
    extract_multipliers,
)
from .trajio import load_trajectory_csv, save_trajectory_csv

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fatigueopt",
        description="Damage-with-fatigue optimal control: solvers, audits, "
        "optimizer and stationarity checkers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = [
        ("solve-state", "nonsmooth forward solve"),
        ("solve-state-eps", "smoothed forward solve"),
        ("linearize", "directional sensitivity"),
        ("fd-check", "finite-difference sensitivity audit"),
        ("grad-check", "finite-difference gradient audit"),
        ("optimize", "smoothing-path descent"),
        ("check-stationarity", "grade a candidate against the stationarity systems"),
        ("probe-bstat", "directional first-order probe"),
    ]
    for name, help_text in commands:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="scenario TOML file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
        p.add_argument("--threads", type=int, default=None,
                       help="thread budget hint, recorded and exported to "
                       "OMP/BLAS environment variables")
        p.add_argument("--tol-overrides", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override a tolerance (picard_tol, max_picard, "
                       "tol_z, tol_f, grad_tol0); repeatable")
        if name in ("check-stationarity", "probe-bstat"):
            p.add_argument("--candidate", default=None,
                           help="directory of a previous optimize run; its "
                           "ell_star.csv becomes the graded control")
    return parser


def _parse_overrides(pairs: list) -> dict:
    out = {}
    diags = []
    for pair in pairs:
        if "=" not in pair:
            diags.append(f"tol-overrides: expected KEY=VALUE, got {pair!r}")
            continue
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    if diags:
        raise ScenarioError(diags)
    return out


def _candidate_control(scenario: Scenario, args) -> tuple:
    """The control to grade and a tag describing where it came from."""
    cand_dir = getattr(args, "candidate", None)
    if cand_dir is None:
        return scenario.control, "scenario-control"
    path = Path(cand_dir) / "ell_star.csv"
    if not path.exists():
        raise ScenarioError([f"candidate: {path} not found"])
    data = load_trajectory_csv(path)
    values = data["values"]
    expected = (scenario.time.steps + 1, scenario.space.node_count)
    if values.shape != expected:
        raise ScenarioError(
            [f"candidate: trajectory shape {values.shape} does not match "
             f"scenario grids {expected}"]
        )
    return values, str(path)


def _final_smoothing(scenario: Scenario) -> SmoothingParams:
    """Smoothing used for grading: the scenario's, else the last path stage."""
    if scenario.smoothing is not None:
        return scenario.smoothing
    cfg = scenario.path
    factor = cfg.decay ** (cfg.stages - 1)
    return SmoothingParams(cfg.eps_max0 * factor, cfg.eps_f0 * factor)


def _save_state_bundle(outdir: Path, state, sha: str) -> list:
    tdir = outdir / "trajectories"
    tdir.mkdir(parents=True, exist_ok=True)
    files = []
    for name, traj in (("q", state.q), ("phi", state.phi),
                       ("z", state.z), ("history", state.history)):
        rel = f"trajectories/{name}.csv"
        save_trajectory_csv(outdir / rel, traj, state.space, state.time, sha)
        files.append(rel)
    meta = {
        "regularized": bool(state.regularized),
        "smoothing": None if state.smoothing is None else {
            "eps_max": state.smoothing.eps_max, "eps_f": state.smoothing.eps_f,
        },
        "contraction_estimate": float(state.contraction_estimate),
        "max_picard_iterations": int(state.max_picard_iterations()),
        "config_sha256": sha,
    }
    (outdir / "state.json").write_text(json.dumps(meta, indent=2) + "\n")
    files.append("state.json")
    return files


# --------------------------------------------------------------------------
# subcommand bodies (each returns the list of produced files)
# --------------------------------------------------------------------------

def _cmd_solve_state(scenario: Scenario, out: Path, seed: int, args) -> list:
    state = solve_state(
        scenario.params, scenario.law, scenario.kernel, scenario.control,
        scenario.space, scenario.time,
        picard_tol=scenario.picard_tol, max_picard=scenario.max_picard,
    )
    return _save_state_bundle(out, state, scenario.config_sha256)


def _cmd_solve_state_eps(scenario: Scenario, out: Path, seed: int, args) -> list:
    if scenario.smoothing is None:
        raise ScenarioError(["smoothing: table required for solve-state-eps"])
    state = solve_state_regularized(
        scenario.params, scenario.law, scenario.kernel, scenario.control,
        scenario.space, scenario.time, scenario.smoothing,
        picard_tol=scenario.picard_tol, max_picard=scenario.max_picard,
    )
    return _save_state_bundle(out, state, scenario.config_sha256)


def _require_direction(scenario: Scenario) -> np.ndarray:
    if scenario.direction is None:
        raise ScenarioError(["direction: table required for this subcommand"])
    return scenario.direction


def _base_state(scenario: Scenario):
    if scenario.smoothing is not None:
        return solve_state_regularized(
            scenario.params, scenario.law, scenario.kernel, scenario.control,
            scenario.space, scenario.time, scenario.smoothing,
            picard_tol=scenario.picard_tol, max_picard=scenario.max_picard,
        )
    return solve_state(
        scenario.params, scenario.law, scenario.kernel, scenario.control,
        scenario.space, scenario.time,
        picard_tol=scenario.picard_tol, max_picard=scenario.max_picard,
    )


def _cmd_linearize(scenario: Scenario, out: Path, seed: int, args) -> list:
    direction = _require_direction(scenario)
    base = _base_state(scenario)
    lin = solve_linearized(
        base, direction,
        picard_tol=scenario.picard_tol, max_picard=scenario.max_picard,
    )
    tdir = out / "trajectories"
    tdir.mkdir(parents=True, exist_ok=True)
    sha = scenario.config_sha256
    files = []
    for name, traj in (("dq", lin.dq), ("dphi", lin.dphi)):
        rel = f"trajectories/{name}.csv"
        save_trajectory_csv(out / rel, traj, scenario.space, scenario.time, sha)
        files.append(rel)
    meta = {
        "regularized_base": bool(base.regularized),
        "activation_boundary_hits": int(lin.activation_boundary_hits),
        "kink_hits": int(lin.kink_hits),
        "config_sha256": sha,
    }
    (out / "linearize.json").write_text(json.dumps(meta, indent=2) + "\n")
    files.append("linearize.json")
    return files


def _cmd_fd_check(scenario: Scenario, out: Path, seed: int, args) -> list:
    direction = _require_direction(scenario)
    base = _base_state(scenario)
    kwargs = {}
    if scenario.fd_taus is not None:
        kwargs["taus"] = scenario.fd_taus
    result = fd_directional_check(
        base, direction,
        picard_tol=scenario.picard_tol, max_picard=scenario.max_picard,
        **kwargs,
    )
    lines = ["tau,error"]
    for tau, err in zip(result.taus, result.errors):
        lines.append(f"{tau:.17g},{err:.17g}")
    (out / "fd_check.csv").write_text("\n".join(lines) + "\n")
    payload = result.to_dict()
    payload["config_sha256"] = scenario.config_sha256
    (out / "fd_check.json").write_text(json.dumps(payload, indent=2) + "\n")
    return ["fd_check.csv", "fd_check.json"]


def _cmd_grad_check(scenario: Scenario, out: Path, seed: int, args) -> list:
    if scenario.smoothing is None:
        raise ScenarioError(["smoothing: table required for grad-check"])
    kwargs = {}
    if scenario.fd_taus is not None:
        kwargs["taus"] = scenario.fd_taus
    result = fd_gradient_check(
        scenario.params, scenario.law, scenario.kernel, scenario.control,
        scenario.space, scenario.time, scenario.objective, scenario.smoothing,
        seed=seed,
        picard_tol=scenario.picard_tol, max_picard=scenario.max_picard,
        **kwargs,
    )
    lines = ["direction,tau,rel_error"]
    for i in range(result.rel_errors.shape[0]):
        for j, tau in enumerate(result.taus):
            lines.append(f"{i},{tau:.17g},{result.rel_errors[i, j]:.17g}")
    (out / "grad_check.csv").write_text("\n".join(lines) + "\n")
    payload = result.to_dict()
    payload["config_sha256"] = scenario.config_sha256
    payload["seed"] = seed
    (out / "grad_check.json").write_text(json.dumps(payload, indent=2) + "\n")
    return ["grad_check.csv", "grad_check.json"]


def _cmd_optimize(scenario: Scenario, out: Path, seed: int, args) -> list:
    result = run_optimize(
        scenario.params, scenario.law, scenario.kernel, scenario.control,
        scenario.space, scenario.time, scenario.objective, scenario.path,
        picard_tol=scenario.picard_tol, max_picard=scenario.max_picard,
    )
    sha = scenario.config_sha256
    files = []
    save_trajectory_csv(out / "ell_star.csv", result.load,
                        scenario.space, scenario.time, sha)
    files.append("ell_star.csv")
    files += _save_state_bundle(out, result.final_state, sha)
    payload = {
        "objective_history": result.objective_history(),
        "grad_norm_history": result.grad_norm_history(),
        "eps_path": [
            {"eps_max": s.eps_max, "eps_f": s.eps_f} for s in result.eps_path
        ],
        "stages": [
            {
                "grad_tol": s.grad_tol,
                "iterations": s.iterations,
                "converged": bool(s.converged),
                "aborted_step_underflow": bool(s.aborted_step_underflow),
            }
            for s in result.stages
        ],
        "total_inner_iterations": int(result.total_inner_iterations),
        "final_objective": objective_breakdown(
            result.final_state, scenario.objective
        ),
        "config_sha256": sha,
    }
    (out / "optimize.json").write_text(json.dumps(payload, indent=2) + "\n")
    files.append("optimize.json")
    return files


def _cmd_check_stationarity(scenario: Scenario, out: Path, seed: int, args) -> list:
    control, source = _candidate_control(scenario, args)
    smoothing = _final_smoothing(scenario)
    state = solve_state(
        scenario.params, scenario.law, scenario.kernel, control,
        scenario.space, scenario.time,
        picard_tol=scenario.picard_tol, max_picard=scenario.max_picard,
    )
    state_eps = solve_state_regularized(
        scenario.params, scenario.law, scenario.kernel, control,
        scenario.space, scenario.time, smoothing,
        picard_tol=scenario.picard_tol, max_picard=scenario.max_picard,
    )
    adj = solve_adjoint_regularized(
        state_eps, scenario.objective,
        picard_tol=scenario.picard_tol, max_picard=scenario.max_picard,
    )
    sets = classify_active_sets(state, scenario.tol_z, scenario.tol_f)
    bundle = compute_G(state, extract_multipliers(adj), sets)
    eps_used = max(smoothing.eps_max, smoothing.eps_f)
    reports = {}
    for mode in MODES:
        report = check_system(
            state, adj.xi, adj.w, bundle, scenario.objective,
            mode=mode, sets=sets, eps_used=eps_used,
        )
        reports[mode] = report.to_dict()
    payload = {
        "candidate_source": source,
        "smoothing": {"eps_max": smoothing.eps_max, "eps_f": smoothing.eps_f},
        "reports": reports,
        "config_sha256": scenario.config_sha256,
    }
    (out / "report.json").write_text(json.dumps(payload, indent=2) + "\n")
    files = ["report.json"]
    tdir = out / "trajectories"
    tdir.mkdir(parents=True, exist_ok=True)
    for name, traj in (("lambda", bundle.lam), ("mu", bundle.mu),
                       ("G_plus", bundle.G_plus), ("G_minus", bundle.G_minus),
                       ("xi", adj.xi), ("w", adj.w), ("z", state.z)):
        rel = f"trajectories/{name}.csv"
        save_trajectory_csv(out / rel, traj, scenario.space, scenario.time,
                            scenario.config_sha256)
        files.append(rel)
    return files


def _cmd_probe_bstat(scenario: Scenario, out: Path, seed: int, args) -> list:
    control, source = _candidate_control(scenario, args)
    state = solve_state(
        scenario.params, scenario.law, scenario.kernel, control,
        scenario.space, scenario.time,
        picard_tol=scenario.picard_tol, max_picard=scenario.max_picard,
    )
    result = b_stationarity_probe(
        state, scenario.objective,
        n_directions=scenario.probe_directions, seed=seed,
    )
    payload = result.to_dict()
    payload["candidate_source"] = source
    payload["config_sha256"] = scenario.config_sha256
    (out / "probe.json").write_text(json.dumps(payload, indent=2) + "\n")
    return ["probe.json"]


_COMMANDS = {
    "solve-state": _cmd_solve_state,
    "solve-state-eps": _cmd_solve_state_eps,
    "linearize": _cmd_linearize,
    "fd-check": _cmd_fd_check,
    "grad-check": _cmd_grad_check,
    "optimize": _cmd_optimize,
    "check-stationarity": _cmd_check_stationarity,
    "probe-bstat": _cmd_probe_bstat,
}


def _write_manifest(out: Path, payload: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(payload, indent=2) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    try:
        overrides = _parse_overrides(args.tol_overrides)
        scenario = load_scenario(args.config)
        scenario.apply_tol_overrides(overrides)
    except ScenarioError as exc:
        for diag in exc.diagnostics:
            print(f"error: {diag}", file=sys.stderr)
        return 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else scenario.seed
    manifest = {
        "subcommand": args.command,
        "config_path": str(args.config),
        "config_sha256": scenario.config_sha256,
        "seed": int(seed),
        "tol_overrides": overrides,
        "threads": args.threads,
        "package_version": __version__,
        "python_version": sys.version.split()[0],
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "warnings": list(scenario.warnings),
    }

    start = _time.perf_counter()
    try:
        files = _COMMANDS[args.command](scenario, out, seed, args)
    except ScenarioError as exc:
        for diag in exc.diagnostics:
            print(f"error: {diag}", file=sys.stderr)
        return 2
    except SolverError as exc:
        manifest.update(
            status="solver_error",
            error={
                "message": str(exc),
                "step": exc.step,
                "residual": None if not np.isfinite(exc.residual) else float(exc.residual),
                "suggestion": exc.suggestion,
            },
            outputs=[],
            generated_at=_dt.datetime.now(_dt.timezone.utc).isoformat(),
            wall_time_s=_time.perf_counter() - start,
        )
        _write_manifest(out, manifest)
        print(f"error: {exc}", file=sys.stderr)
        if exc.suggestion:
            print(f"hint: {exc.suggestion}", file=sys.stderr)
        return 3

    manifest.update(
        status="ok",
        outputs=files,
        generated_at=_dt.datetime.now(_dt.timezone.utc).isoformat(),
        wall_time_s=_time.perf_counter() - start,
    )
    _write_manifest(out, manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
