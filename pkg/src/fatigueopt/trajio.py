"""Trajectory serialization: CSV and JSON exchange formats.

CSV layout: optional ``#``-prefixed metadata lines (carrying the scenario
hash), then a header row ``t,<node label>,...`` where node labels encode
coordinates (``x=0.25`` or ``x=0.25;y=0.5``), then one row per time node.
Values are written with ``%.17g`` so round-trips are bit-exact and output
bytes are deterministic.

JSON layout: an object with ``grid`` (dimension, extents, nodes per axis),
``times``, ``values`` (list of per-time rows) and the scenario hash.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .grids import SpaceGrid, TimeGrid, _check_traj

__all__ = [
    "save_trajectory_csv",
    "load_trajectory_csv",
    "save_trajectory_json",
    "load_trajectory_json",
]

_FMT = "%.17g"


def save_trajectory_csv(
    path: Union[str, Path],
    U: np.ndarray,
    space: SpaceGrid,
    time: TimeGrid,
    config_sha256: Optional[str] = None,
) -> None:
    """Write a trajectory as CSV (one row per time node, one column per space node)."""
    U = _check_traj(U, space, time, "trajectory")
    lines = []
    if config_sha256 is not None:
        lines.append(f"# config_sha256={config_sha256}")
    lines.append("t," + ",".join(space.column_labels()))
    for k, t in enumerate(time.times):
        row = ",".join(_FMT % v for v in U[k])
        lines.append((_FMT % t) + "," + row)
    Path(path).write_text("\n".join(lines) + "\n")


def load_trajectory_csv(path: Union[str, Path]) -> dict:
    """Read a trajectory CSV written by :func:`save_trajectory_csv`.

    Returns a dict with ``times`` (shape ``(M+1,)``), ``values`` (shape
    ``(M+1, n)``), ``labels`` (list of node labels) and ``config_sha256``
    (or None).
    """
    sha = None
    header = None
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.startswith("config_sha256="):
                sha = body.split("=", 1)[1]
            continue
        if header is None:
            header = line.split(",")
            continue
        rows.append([float(v) for v in line.split(",")])
    if header is None or not rows:
        raise ValueError(f"no trajectory data found in {path}")
    data = np.asarray(rows, dtype=float)
    return {
        "times": data[:, 0],
        "values": data[:, 1:],
        "labels": header[1:],
        "config_sha256": sha,
    }


def save_trajectory_json(
    path: Union[str, Path],
    U: np.ndarray,
    space: SpaceGrid,
    time: TimeGrid,
    config_sha256: Optional[str] = None,
) -> None:
    """Write a trajectory as JSON with grid metadata."""
    U = _check_traj(U, space, time, "trajectory")
    payload = {
        "grid": {
            "dimension": space.dimension,
            "extents": list(space.extents),
            "nodes_per_axis": list(space.nodes_per_axis),
        },
        "times": [float(t) for t in time.times],
        "values": [[float(v) for v in row] for row in U],
        "config_sha256": config_sha256,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_trajectory_json(path: Union[str, Path]) -> dict:
    """Read a trajectory JSON written by :func:`save_trajectory_json`."""
    payload = json.loads(Path(path).read_text())
    payload["times"] = np.asarray(payload["times"], dtype=float)
    payload["values"] = np.asarray(payload["values"], dtype=float)
    return payload
