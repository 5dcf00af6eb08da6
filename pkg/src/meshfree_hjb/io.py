"""Persistence of meshes, value functions, profiles and trajectories.

All floating-point output uses 17 significant digits so files reload to
bitwise-identical arrays.  Every CSV gets a JSON sidecar (same stem) with
the non-tabular metadata.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mesh import ScatteredMesh, build_mesh

__all__ = [
    "save_mesh", "load_mesh",
    "save_value_function", "load_value_function",
    "save_profile", "save_trajectory", "save_cost_comparison",
]

FLOAT_FMT = "%.17g"


def _sidecar(path):
    path = Path(path)
    return path.with_suffix(".json")


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_mesh(mesh, csv_path):
    """Write node coordinates as CSV plus a JSON sidecar of metadata."""
    csv_path = Path(csv_path)
    header = ",".join(f"x{k}" for k in range(mesh.dim))
    np.savetxt(csv_path, mesh.points, fmt=FLOAT_FMT, delimiter=",",
               header=header, comments="")
    meta = {
        "dim": mesh.dim,
        "n": mesh.n,
        "separation": mesh.separation if np.isfinite(mesh.separation) else None,
        "fill_estimate": mesh.fill_estimate,
        "fill_samples": mesh.fill_samples,
        "clamp_count": mesh.clamp_count,
        "recipe": mesh.recipe,
        "domain": mesh.domain.to_dict() if mesh.domain is not None else None,
    }
    _write_json(_sidecar(csv_path), meta)


def load_mesh(csv_path):
    """Reload a mesh written by :func:`save_mesh` (bitwise round-trip)."""
    csv_path = Path(csv_path)
    points = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    with open(_sidecar(csv_path)) as fh:
        meta = json.load(fh)
    from .mesh import Box
    domain = Box.from_dict(meta["domain"]) if meta.get("domain") else None
    sep = meta["separation"] if meta["separation"] is not None else np.inf
    return ScatteredMesh(points=points, separation=sep,
                         fill_estimate=meta.get("fill_estimate"),
                         fill_samples=meta.get("fill_samples", 0),
                         domain=domain, recipe=meta.get("recipe"),
                         clamp_count=meta.get("clamp_count", 0))


def save_value_function(mesh, vf, csv_path, extra_meta=None):
    """Write node index, coordinates and value per row, plus metadata."""
    csv_path = Path(csv_path)
    header = "node," + ",".join(f"x{k}" for k in range(mesh.dim)) + ",value"
    table = np.column_stack([np.arange(mesh.n), mesh.points, vf.values])
    np.savetxt(csv_path, table, fmt=FLOAT_FMT, delimiter=",",
               header=header, comments="")
    meta = vf.meta_dict()
    if extra_meta:
        meta.update(extra_meta)
    _write_json(_sidecar(csv_path), meta)


def load_value_function(csv_path):
    """Return ``(values, meta)`` from files written by save_value_function."""
    csv_path = Path(csv_path)
    table = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    with open(_sidecar(csv_path)) as fh:
        meta = json.load(fh)
    return table[:, -1], meta


def save_profile(profile, csv_path, extra_meta=None):
    """Residual-profile CSV: theta, residual, iterations, seconds[, error]."""
    csv_path = Path(csv_path)
    has_error = any(e.error is not None for e in profile.entries)
    cols = "theta,residual,iterations,seconds" + (",error" if has_error else "")
    rows = []
    for e in profile.entries:
        row = [e.theta, e.residual, e.iterations, e.seconds]
        if has_error:
            row.append(e.error if e.error is not None else np.nan)
        rows.append(row)
    np.savetxt(csv_path, np.asarray(rows), fmt=FLOAT_FMT, delimiter=",",
               header=cols, comments="")
    meta = {"selected": profile.selected, "mode": profile.mode,
            "flagged": profile.flagged}
    if extra_meta:
        meta.update(extra_meta)
    _write_json(_sidecar(csv_path), meta)


def save_trajectory(problem, traj, csv_path, snapshot_times=None,
                    snapshot_dir=None):
    """Trajectory CSV with per-step control, state norms and running cost.

    Full state snapshots at requested times go to separate CSV files.
    """
    csv_path = Path(csv_path)
    n_steps = traj.controls.shape[0]
    running = 0.0
    rows = []
    for k in range(n_steps + 1):
        t = traj.times[k]
        u = traj.controls[k] if k < n_steps else np.nan
        state = traj.states[k]
        if k < n_steps:
            dt = traj.times[k + 1] - traj.times[k]
            running += dt * float(problem.running_cost(state, traj.controls[k])) \
                * np.exp(-problem.discount * t)
        rows.append([k, t, u, float(np.linalg.norm(state)),
                     float(np.max(np.abs(state))), running])
    np.savetxt(csv_path, np.asarray(rows), fmt=FLOAT_FMT, delimiter=",",
               header="k,t,u,state_norm2,state_sup,running_cost", comments="")
    meta = {
        "cost": traj.cost,
        "arrival_time": traj.arrival_time,
        "reached_target": traj.reached_target,
        "truncated": traj.truncated,
        "noise_seed": traj.noise_seed,
        "steps": int(n_steps),
    }
    _write_json(_sidecar(csv_path), meta)
    if snapshot_times:
        snapshot_dir = Path(snapshot_dir or csv_path.parent)
        for t_req in snapshot_times:
            k = int(np.argmin(np.abs(traj.times - t_req)))
            out = snapshot_dir / f"{csv_path.stem}_state_t{traj.times[k]:g}.csv"
            np.savetxt(out, traj.states[k][None, :], fmt=FLOAT_FMT, delimiter=",")


def save_cost_comparison(rows, csv_path):
    """Rows of (label, controlled cost, uncontrolled cost)."""
    csv_path = Path(csv_path)
    with open(csv_path, "w") as fh:
        fh.write("label,controlled_cost,uncontrolled_cost\n")
        for label, c, un in rows:
            fh.write(f"{label},{FLOAT_FMT % c},{FLOAT_FMT % un}\n")
