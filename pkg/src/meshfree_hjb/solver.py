"""Fully discrete Bellman operator and value iteration.

One sweep updates every node by minimizing, over the control grid, the
one-step cost plus the discounted continuation value; continuation values
are read through the Shepard approximant at the stepped points.  For a
fixed mesh, step size and shape parameter the stepped points, stage costs
and Shepard weights never change, so they are assembled once into a sparse
operator and each sweep reduces to a sparse mat-vec plus a min-reduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError
from .shepard import ShepardModel, build_weight_matrices

__all__ = [
    "SolverConfig",
    "ValueFunction",
    "BellmanWorkspace",
    "bellman_update",
    "value_iteration",
    "residual",
]


@dataclass
class SolverConfig:
    """Time step and stopping parameters for value iteration."""

    dt: float
    vi_tolerance: float = 1e-6
    max_sweeps: int | None = None
    pin_targets: bool = True

    def validate(self, problem):
        if not 0.0 < self.dt <= 1.0 / problem.discount:
            raise ValueError(
                f"dt must lie in (0, 1/discount]; got dt={self.dt}, "
                f"discount={problem.discount}")

    def resolved_max_sweeps(self, problem):
        if self.max_sweeps is not None:
            return int(self.max_sweeps)
        return 10 * math.ceil(1.0 / (self.dt * problem.discount))


@dataclass
class ValueFunction:
    """Nodal values plus metadata about the solve that produced them."""

    values: np.ndarray
    iterations: int
    final_delta: float
    converged: bool
    dt: float
    sigma: float
    theta: float | None = None
    fallback_count: int = 0
    pinned_count: int = 0
    residual: float | None = None

    def meta_dict(self):
        return {
            "iterations": self.iterations,
            "final_delta": self.final_delta,
            "converged": self.converged,
            "dt": self.dt,
            "sigma": self.sigma,
            "theta": self.theta,
            "fallback_count": self.fallback_count,
            "pinned_count": self.pinned_count,
            "residual": self.residual,
        }


class _BellmanOperator:
    """One assembled sweep: ``V -> min_u (dt g + (1 - dt lam) S[V])``."""

    def __init__(self, workspace, weights, fallback_count):
        ws = workspace
        self.ws = ws
        self.weights = weights
        self.fallback_count = fallback_count

    def apply(self, values):
        ws = self.ws
        cont = self.weights @ values
        vals = ws.dt * ws.stage_costs + ws.rho * cont.reshape(ws.m, ws.n)
        out = vals.min(axis=0)
        if ws.pin_targets and ws.target is not None:
            out[ws.pinned_nodes] = ws.target.value
        if not np.all(np.isfinite(out)):
            bad = np.argwhere(~np.isfinite(vals))
            u_idx, node = (int(bad[0][0]), int(bad[0][1])) if bad.size else (-1, -1)
            raise ConvergenceError(
                f"non-finite Bellman value at node {node}, control index {u_idx}",
                diagnostics={"node": node, "control_index": u_idx})
        return out

    def greedy_controls(self, values):
        """Index of the minimizing control per node (lowest index on ties)."""
        ws = self.ws
        cont = self.weights @ values
        vals = ws.dt * ws.stage_costs + ws.rho * cont.reshape(ws.m, ws.n)
        return vals.argmin(axis=0)


class BellmanWorkspace:
    """Stepped points and stage costs shared by every shape parameter.

    Building the workspace is the expensive part for large systems; the
    per-sigma weight matrices are cached so a tuner sweep reuses the same
    stepped points throughout.
    """

    def __init__(self, problem, mesh, config):
        config.validate(problem)
        self.problem = problem
        self.mesh = mesh
        self.config = config
        self.dt = config.dt
        self.rho = 1.0 - config.dt * problem.discount
        self.pin_targets = config.pin_targets
        self.target = problem.target
        X = mesh.points
        self.n = mesh.n
        controls = problem.control_samples
        self.m = controls.shape[0]
        stepped = []
        costs = np.empty((self.m, self.n))
        for i, u in enumerate(controls):
            try:
                stepped.append(problem.step_many(X, u, config.dt))
            except ConvergenceError as err:
                raise ConvergenceError(
                    f"one-step map failed for control index {i}",
                    diagnostics={"control_index": i, **err.diagnostics}) from err
            costs[i] = problem.cost_many(X, u)
        self.queries = np.vstack(stepped)
        self.stage_costs = costs
        if self.target is not None:
            # the whole pinned set: every node inside the target ball, and
            # always at least the node closest to the target center so a
            # sparse mesh cannot leave the target empty
            inside = np.flatnonzero(self.target.contains(X))
            nearest = int(np.argmin(np.linalg.norm(X - self.target.center, axis=1)))
            self.pinned_nodes = np.union1d(inside, [nearest])
        else:
            self.pinned_nodes = np.empty(0, dtype=np.intp)
        self._operators = {}

    def prepare(self, sigmas):
        """Assemble weight matrices for several shapes in one pass."""
        missing = [s for s in sigmas if s not in self._operators]
        if not missing:
            return
        built = build_weight_matrices(self.mesh, missing, self.queries)
        for sigma, (mat, fb) in zip(missing, built):
            self._operators[sigma] = _BellmanOperator(self, mat, fb)

    def operator(self, sigma):
        if sigma not in self._operators:
            self.prepare([sigma])
        return self._operators[sigma]

    def pinned_count(self):
        return int(self.pinned_nodes.size)


def bellman_update(problem, model, values, config):
    """One Bellman sweep of ``values`` on the model's mesh."""
    values = np.asarray(values, dtype=float)
    if values.shape != (model.mesh.n,):
        raise ValueError("one value per mesh node required")
    ws = BellmanWorkspace(problem, model.mesh, config)
    return ws.operator(model.sigma).apply(values)


def _iterate(op, v0, tol, max_sweeps):
    values = v0.copy()
    delta = np.inf
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        new = op.apply(values)
        delta = float(np.max(np.abs(new - values)))
        values = new
        if delta < tol:
            break
    return values, sweeps, delta


def value_iteration(problem, model, config, v0=None, theta=None):
    """Iterate the Bellman operator to its fixed point.

    Starts from zero unless ``v0`` is given and stops when the sup-norm
    sweep change drops below the tolerance.  A run that exhausts
    ``max_sweeps`` returns its best iterate flagged as non-converged.
    """
    ws = BellmanWorkspace(problem, model.mesh, config)
    return _run_vi(ws, model.sigma, config, v0=v0, theta=theta)


def _run_vi(ws, sigma, config, v0=None, theta=None):
    op = ws.operator(sigma)
    start = np.zeros(ws.n) if v0 is None else np.asarray(v0, dtype=float).copy()
    values, sweeps, delta = _iterate(op, start, config.vi_tolerance,
                                     config.resolved_max_sweeps(ws.problem))
    return ValueFunction(
        values=values, iterations=sweeps, final_delta=delta,
        converged=delta < config.vi_tolerance, dt=config.dt, sigma=sigma,
        theta=theta, fallback_count=op.fallback_count,
        pinned_count=ws.pinned_count())


def residual(problem, model, value_function, config):
    """Sup-norm change caused by one extra Bellman sweep."""
    values = value_function.values if isinstance(value_function, ValueFunction) \
        else np.asarray(value_function, dtype=float)
    updated = bellman_update(problem, model, values, config)
    return float(np.max(np.abs(updated - values)))
