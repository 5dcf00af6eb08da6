"""Regular-grid value iteration with multilinear interpolation.

A reference method for the planar benchmark: same Bellman recursion as
the mesh-free solver, but continuation values are read through bilinear
interpolation on a tensor grid (queries are clamped onto the box).
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConvergenceError

__all__ = ["LinearGridModel", "linear_grid_value_iteration"]


class LinearGridModel:
    """Multilinear interpolant over a tensor grid, clamped at the box."""

    def __init__(self, box, per_axis_counts):
        self.box = box
        self.counts = [int(c) for c in per_axis_counts]
        self.axes = [np.linspace(box.lo[k], box.hi[k], self.counts[k])
                     for k in range(box.dim)]
        grids = np.meshgrid(*self.axes, indexing="ij")
        self.points = np.stack([g.ravel() for g in grids], axis=1)
        self.n = self.points.shape[0]

    def evaluate(self, values, queries):
        table = np.asarray(values, dtype=float).reshape(self.counts)
        interp = RegularGridInterpolator(self.axes, table, method="linear",
                                         bounds_error=False, fill_value=None)
        q = self.box.clamp(np.atleast_2d(queries))
        return interp(q)


def linear_grid_value_iteration(problem, grid_model, config):
    """Value iteration on the tensor grid; returns the nodal value array."""
    config.validate(problem)
    X = grid_model.points
    n = grid_model.n
    controls = problem.control_samples
    rho = 1.0 - config.dt * problem.discount
    stepped = [problem.step_many(X, u, config.dt) for u in controls]
    costs = np.stack([problem.cost_many(X, u) for u in controls])
    if problem.target is not None:
        target_rows = [problem.target.contains(z) for z in stepped]
        pinned = problem.target.contains(X)
    else:
        target_rows = [np.zeros(n, dtype=bool) for _ in controls]
        pinned = np.zeros(n, dtype=bool)

    values = np.zeros(n)
    max_sweeps = config.resolved_max_sweeps(problem)
    for _ in range(max_sweeps):
        best = np.full(n, np.inf)
        for i in range(controls.shape[0]):
            cont = grid_model.evaluate(values, stepped[i])
            cont[target_rows[i]] = problem.target.value if problem.target else 0.0
            best = np.minimum(best, config.dt * costs[i] + rho * cont)
        if problem.target is not None:
            best[pinned] = problem.target.value
        delta = float(np.max(np.abs(best - values)))
        values = best
        if delta < config.vi_tolerance:
            return values
    raise ConvergenceError("grid value iteration did not converge",
                           diagnostics={"final_delta": delta})
