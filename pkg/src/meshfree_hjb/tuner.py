"""Shape-parameter selection by minimizing the value-iteration residual.

The dimensionless parameter ``theta`` is mapped to a kernel shape through
``sigma = theta / scale(mesh)``, where the scale is the mesh's fill
estimate when available and its separation distance otherwise.  Two
minimization strategies are provided: an exhaustive comparison over a
grid, and a projected finite-difference descent.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, TunerError
from .mesh import shape_scale
from .shepard import build_weight_matrices
from .solver import BellmanWorkspace, _run_vi

__all__ = [
    "ParameterRange",
    "ProfileEntry",
    "ResidualProfile",
    "sigma_for_theta",
    "select_theta_comparison",
    "select_theta_gradient",
    "oracle_theta",
]


@dataclass(frozen=True)
class ParameterRange:
    """Admissible interval for theta plus mode-specific controls."""

    theta_min: float
    theta_max: float
    step: float | None = None           # comparison grid spacing
    theta0: float | None = None         # gradient start (defaults to midpoint)
    epsilon: float = 1e-6               # finite-difference increment
    tolerance: float = 1e-4             # stop when |dR/dtheta| falls below
    max_iters: int = 100

    def __post_init__(self):
        if not 0.0 < self.theta_min < self.theta_max:
            raise ValueError("need 0 < theta_min < theta_max")

    def grid(self):
        if self.step is None or self.step <= 0:
            raise ValueError("comparison mode needs a positive grid step")
        count = int(round((self.theta_max - self.theta_min) / self.step)) + 1
        return np.round(self.theta_min + self.step * np.arange(count), 12)

    def start(self):
        t0 = 0.5 * (self.theta_min + self.theta_max) if self.theta0 is None else self.theta0
        if not self.theta_min <= t0 <= self.theta_max:
            raise ValueError("theta0 must lie inside [theta_min, theta_max]")
        return t0


@dataclass
class ProfileEntry:
    theta: float
    residual: float
    iterations: int
    seconds: float
    error: float | None = None
    failed: bool = False


@dataclass
class ResidualProfile:
    """Record of every evaluated theta and the selected minimizer."""

    entries: list = field(default_factory=list)
    selected: float | None = None
    mode: str = "comparison"
    flagged: bool = False

    def best_entry(self):
        ok = [e for e in self.entries if not e.failed]
        if not ok:
            raise TunerError("no successful residual evaluation recorded")
        best = min(ok, key=lambda e: (e.residual, e.theta))
        return best


def sigma_for_theta(mesh, theta):
    """Kernel shape for a dimensionless theta on this mesh."""
    return theta / shape_scale(mesh)


class BellmanTestResidual:
    """Bellman residual of a value table at off-node test points.

    At the mesh nodes a converged value iteration satisfies the discrete
    fixed-point identity exactly (for minimum-time problems the sweep
    change can hit floating-point zero), so node residuals carry no
    information about the kernel shape.  The selection signal is instead
    the consistency of the Shepard representation with the one-step
    optimality equation at points *between* nodes: a seeded subsample of
    the one-step images of the nodes, which by construction lie in the
    region the scheme actually visits.  The residual at shape ``sigma``
    is::

        max_y | S[V](y) - min_u { dt g(y,u) + (1 - dt lam) S[V](y + step) } |

    and is a smooth, exactly computable function of the shape parameter.
    """

    def __init__(self, problem, mesh, config, workspace, test_points=1024,
                 seed=0):
        self.problem = problem
        self.mesh = mesh
        self.dt = config.dt
        self.rho = 1.0 - config.dt * problem.discount
        queries = workspace.queries
        keep = np.ones(queries.shape[0], dtype=bool)
        if problem.target is not None:
            keep &= ~problem.target.contains(queries)
        candidates = np.flatnonzero(keep)
        rng = np.random.default_rng([seed, 0x7e57])
        count = min(int(test_points), candidates.size)
        chosen = rng.choice(candidates, size=count, replace=False) \
            if count < candidates.size else candidates
        self.points = queries[np.sort(chosen)]
        t = self.points.shape[0]
        controls = problem.control_samples
        self.m = controls.shape[0]
        stepped = []
        costs = np.empty((self.m, t))
        for i, u in enumerate(controls):
            stepped.append(problem.step_many(self.points, u, config.dt))
            costs[i] = problem.cost_many(self.points, u)
        self.stepped = np.vstack(stepped)
        self.stage_costs = costs
        self._weights = {}

    def prepare(self, sigmas):
        missing = [s for s in sigmas if s not in self._weights]
        if not missing:
            return
        here = build_weight_matrices(self.mesh, missing, self.points)
        there = build_weight_matrices(self.mesh, missing, self.stepped)
        for sigma, (w_here, _), (w_there, _) in zip(missing, here, there):
            self._weights[sigma] = (w_here, w_there)

    def evaluate(self, sigma, values):
        if sigma not in self._weights:
            self.prepare([sigma])
        w_here, w_there = self._weights[sigma]
        lhs = w_here @ values
        cont = w_there @ values
        t = self.points.shape[0]
        bracket = self.dt * self.stage_costs + self.rho * cont.reshape(self.m, t)
        return float(np.max(np.abs(lhs - bracket.min(axis=0))))


def _evaluate_theta(ws, test_res, mesh, theta, config, v0=None):
    t0 = time.perf_counter()
    sigma = sigma_for_theta(mesh, theta)
    vf = _run_vi(ws, sigma, config, v0=v0, theta=theta)
    res = test_res.evaluate(sigma, vf.values)
    vf.residual = res
    return vf, res, time.perf_counter() - t0


def _node_error(problem, mesh, values):
    exact = problem.exact_value(mesh.points)
    denom = float(np.max(np.abs(exact)))
    return float(np.max(np.abs(values - exact))) / denom


def select_theta_comparison(problem, mesh, prange, config, warm_start=False,
                            threads=1, compute_error=False, test_points=1024,
                            test_seed=0):
    """Grid search over theta: run one value iteration per candidate.

    Ties in the residual resolve to the smaller theta.  Candidates whose
    solve fails are recorded as failed and skipped; if all candidates
    fail a :class:`TunerError` is raised.  Returns the selected theta,
    the residual profile and the winning value function.
    """
    thetas = prange.grid()
    ws = BellmanWorkspace(problem, mesh, config)
    test_res = BellmanTestResidual(problem, mesh, config, ws,
                                   test_points=test_points, seed=test_seed)
    if mesh.dim > 8:
        sigmas = [sigma_for_theta(mesh, t) for t in thetas]
        ws.prepare(sigmas)
        test_res.prepare(sigmas)
    profile = ResidualProfile(mode="comparison")
    results = {}

    def run_one(theta, v0=None):
        try:
            return _evaluate_theta(ws, test_res, mesh, theta, config, v0=v0)
        except ConvergenceError as err:
            return err

    if warm_start or threads <= 1:
        v0 = None
        for theta in thetas:
            out = run_one(theta, v0=v0 if warm_start else None)
            results[theta] = out
            if warm_start and not isinstance(out, ConvergenceError):
                v0 = out[0].values
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = {t: pool.submit(run_one, t) for t in thetas}
            for t in thetas:
                results[t] = futs[t].result()

    best = None
    for theta in thetas:
        out = results[theta]
        if isinstance(out, ConvergenceError):
            profile.entries.append(ProfileEntry(float(theta), np.inf, 0, 0.0, failed=True))
            continue
        vf, res, secs = out
        err = _node_error(problem, mesh, vf.values) if compute_error else None
        profile.entries.append(ProfileEntry(float(theta), res, vf.iterations, secs, error=err))
        # strict inequality + ascending sweep = smallest theta wins ties
        if best is None or res < best[1]:
            best = (float(theta), res, vf)
    if best is None:
        raise TunerError("value iteration failed for every theta on the grid")
    profile.selected = best[0]
    return best[0], profile, best[2]


def select_theta_gradient(problem, mesh, prange, config, test_points=1024,
                          test_seed=0):
    """Projected finite-difference descent on the residual.

    Each iterate costs two value iterations (at theta and theta + eps);
    theta moves by the raw derivative estimate, projected back onto the
    admissible interval.  Stops when the derivative magnitude falls below
    the tolerance, when an iterate repeats (flagged), or at the iteration
    cap.  The reported theta is the best recorded iterate.
    """
    ws = BellmanWorkspace(problem, mesh, config)
    test_res = BellmanTestResidual(problem, mesh, config, ws,
                                   test_points=test_points, seed=test_seed)
    profile = ResidualProfile(mode="gradient")
    cache = {}

    def evaluate(theta):
        if theta not in cache:
            cache[theta] = _evaluate_theta(ws, test_res, mesh, theta, config)
        return cache[theta]

    theta = float(prange.start())
    visited = []
    best = None
    for _ in range(prange.max_iters):
        vf, res, secs = evaluate(theta)
        profile.entries.append(ProfileEntry(theta, res, vf.iterations, secs))
        if best is None or res < best[1]:
            best = (theta, res, vf)
        _, res_eps, _ = evaluate(theta + prange.epsilon)
        slope = (res_eps - res) / prange.epsilon
        if abs(slope) < prange.tolerance:
            break
        visited.append(theta)
        theta = float(np.clip(theta - slope, prange.theta_min, prange.theta_max))
        if any(abs(theta - t) < 1e-12 for t in visited):
            profile.flagged = True
            break
    else:
        profile.flagged = True
    profile.selected = best[0]
    return best[0], profile, best[2]


def oracle_theta(problem, mesh, prange, config):
    """Grid argmin of the relative error against the exact solution.

    Only available for problems that carry a closed-form value; intended
    for evaluation tables, not for tuning.
    """
    if problem.exact_value is None:
        raise ValueError("oracle selection needs a problem with an exact value")
    _, profile, _ = select_theta_comparison(problem, mesh, prange, config,
                                            compute_error=True)
    ok = [e for e in profile.entries if not e.failed]
    best = min(ok, key=lambda e: (e.error, e.theta))
    return best.theta, best.error, profile
