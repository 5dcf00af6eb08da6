"""Control problems: dynamics, running costs and one-step maps.

Ships the three built-in benchmark systems:

* a planar minimum-time problem with unit-speed dynamics and a point
  target (explicit Euler steps, known closed-form value),
* a bilinearly controlled advection equation on a square, semi-discretized
  with first-order upwind differences (implicit Euler steps),
* a nonlinear heat equation with a cubic reaction term and Neumann
  boundary, controlled through a fixed spatial shape (IMEX steps).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import ConvergenceError
from .mesh import Box

__all__ = [
    "TargetBall",
    "SemiDiscretePDE",
    "ControlProblem",
    "step",
    "eikonal_problem",
    "kruzkov_exact",
    "advection_problem",
    "heat_problem",
    "ic_class",
    "pyramid_ic",
]

# Relative residual allowed on implicit linear solves.
LINEAR_SOLVE_RTOL = 1e-10


@dataclass(frozen=True)
class TargetBall:
    """Closed ball where the value function is pinned to a known value."""

    center: np.ndarray
    radius: float
    value: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.radius < 0:
            raise ValueError("target radius must be nonnegative")

    def contains(self, points):
        pts = np.atleast_2d(points)
        inside = np.linalg.norm(pts - self.center, axis=1) <= self.radius
        return inside if np.asarray(points).ndim > 1 else bool(inside[0])


@dataclass
class SemiDiscretePDE:
    """Finite-difference semi-discretization backing a PDE control problem."""

    operator: sparse.csr_matrix
    coupling: str  # "bilinear" (u * y) or "affine" (B * u)
    control_vector: np.ndarray | None
    nonlinearity: Callable | None
    axis_counts: tuple
    spacing: float
    boundary: str
    _lu_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        d = self.operator.shape[0]
        if self.operator.shape != (d, d):
            raise ValueError("operator must be square")
        if self.boundary not in ("dirichlet-zero", "neumann-zero"):
            raise ValueError(f"unknown boundary kind {self.boundary!r}")
        if self.control_vector is not None and self.control_vector.shape != (d,):
            raise ValueError("control vector must match the state dimension")

    def _lu(self, key, matrix_builder):
        lu = self._lu_cache.get(key)
        if lu is None:
            lu = splu(matrix_builder().tocsc())
            self._lu_cache[key] = lu
        return lu

    def solve_implicit(self, dt, u, rhs):
        """Solve ``(I - dt (A + u I)) x = rhs`` for the bilinear coupling."""
        d = self.operator.shape[0]
        eye = sparse.identity(d, format="csr")

        def build():
            return eye - dt * (self.operator + float(u) * eye)

        lu = self._lu(("bilinear", float(dt), float(u)), build)
        x = lu.solve(rhs)
        self._check_residual(build(), x, rhs, dt, u)
        return x

    def solve_imex(self, dt, rhs):
        """Solve ``(I - dt A) x = rhs`` (stiff linear part only)."""
        d = self.operator.shape[0]
        eye = sparse.identity(d, format="csr")

        def build():
            return eye - dt * self.operator

        lu = self._lu(("imex", float(dt)), build)
        x = lu.solve(rhs)
        self._check_residual(build(), x, rhs, dt, None)
        return x

    def _check_residual(self, mat, x, rhs, dt, u):
        res = mat @ x - rhs
        num = float(np.max(np.abs(res)))
        den = max(float(np.max(np.abs(rhs))), 1.0)
        if num / den > LINEAR_SOLVE_RTOL:
            raise ConvergenceError(
                f"implicit solve residual {num / den:.3e} exceeds {LINEAR_SOLVE_RTOL:.1e}",
                diagnostics={"dt": dt, "u": u, "residual": num / den})


@dataclass
class ControlProblem:
    """Infinite-horizon discounted control problem on a box domain."""

    name: str
    dim: int
    drift: Callable  # f(x, u) -> dx/dt
    running_cost: Callable  # g(x, u) -> float
    discount: float
    control_samples: np.ndarray
    domain: Box
    lipschitz_hint: float | None = None
    step_scheme: str = "explicit-euler"
    exact_value: Callable | None = None
    target: TargetBall | None = None
    pde: SemiDiscretePDE | None = None
    grid_coords: np.ndarray | None = None  # spatial nodes of the FD grid, (d, 2)
    control_range: tuple | None = None

    def __post_init__(self):
        if self.discount <= 0:
            raise ValueError("discount rate must be positive")
        self.control_samples = np.atleast_1d(np.asarray(self.control_samples))
        if self.control_samples.shape[0] == 0:
            raise ValueError("control grid must be non-empty")
        if self.step_scheme not in ("explicit-euler", "implicit-euler", "imex"):
            raise ValueError(f"unknown step scheme {self.step_scheme!r}")

    # -- dynamics ---------------------------------------------------------

    def drift_many(self, states, u):
        """Drift evaluated at each row of ``states`` under one control."""
        X = np.atleast_2d(np.asarray(states, dtype=float))
        if self.pde is not None:
            ay = (self.pde.operator @ X.T).T
            if self.pde.coupling == "bilinear":
                out = ay + float(u) * X
            else:
                out = ay + float(u) * self.pde.control_vector
            if self.pde.nonlinearity is not None:
                out = out + self.pde.nonlinearity(X)
            return out
        return np.vstack([np.asarray(self.drift(x, u), dtype=float) for x in X])

    def step_many(self, states, u, dt):
        """One-step map applied to each row of ``states``; scheme-dependent."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        X = np.atleast_2d(np.asarray(states, dtype=float))
        if self.step_scheme == "explicit-euler":
            return X + dt * self.drift_many(X, u)
        if self.step_scheme == "implicit-euler":
            return self.pde.solve_implicit(dt, u, X.T).T
        rhs = X + dt * (float(u) * self.pde.control_vector + self.pde.nonlinearity(X))
        return self.pde.solve_imex(dt, rhs.T).T

    def step(self, x, u, dt):
        return self.step_many(np.asarray(x, dtype=float)[None, :], u, dt)[0]

    # -- costs ------------------------------------------------------------

    def cost_many(self, states, u):
        X = np.atleast_2d(np.asarray(states, dtype=float))
        return np.array([float(self.running_cost(x, u)) for x in X])

    def coarse_controls(self, m):
        """An ``m``-point discretization of the control set (mesh building)."""
        if self.control_range is None:
            raise ValueError(f"problem {self.name!r} has no control range to discretize")
        lo, hi = self.control_range
        if self.name == "eikonal":
            # periodic control set: skip the duplicate endpoint
            return np.linspace(lo, hi, m, endpoint=False)
        return np.linspace(lo, hi, m)

    def in_target(self, points):
        if self.target is None:
            pts = np.atleast_2d(points)
            out = np.zeros(pts.shape[0], dtype=bool)
            return out if np.asarray(points).ndim > 1 else False
        return self.target.contains(points)


def step(problem, x, u, dt):
    """One step of the problem's time-discrete dynamics."""
    return problem.step(x, u, dt)


# ---------------------------------------------------------------------------
# Minimum-time benchmark
# ---------------------------------------------------------------------------

def kruzkov_exact(x):
    """Bounded transform of the distance to the origin, ``1 - exp(-|x|)``."""
    pts = np.asarray(x, dtype=float)
    return 1.0 - np.exp(-np.linalg.norm(pts, axis=-1))


def eikonal_problem(num_controls=16, target_radius=0.05, discount=1.0):
    """Planar minimum-time problem with unit-speed steering dynamics.

    The state moves with speed one in the direction chosen by the control
    angle; running cost is identically one and the target is a small ball
    at the origin where the value is pinned to zero.
    """
    controls = np.linspace(0.0, 2.0 * np.pi, num_controls, endpoint=False)

    def drift(x, u):
        return np.array([np.cos(u), np.sin(u)])

    def cost(x, u):
        return 1.0

    prob = ControlProblem(
        name="eikonal",
        dim=2,
        drift=drift,
        running_cost=cost,
        discount=discount,
        control_samples=controls,
        domain=Box.cube(-1.0, 1.0, 2),
        lipschitz_hint=1.0,
        step_scheme="explicit-euler",
        exact_value=kruzkov_exact,
        target=TargetBall(np.zeros(2), target_radius, 0.0),
        control_range=(0.0, 2.0 * np.pi),
    )

    def drift_many(states, u):
        X = np.atleast_2d(states)
        return np.broadcast_to(np.array([np.cos(u), np.sin(u)]), X.shape)

    def cost_many(states, u):
        return np.ones(np.atleast_2d(states).shape[0])

    prob.drift_many = drift_many
    prob.cost_many = cost_many
    return prob


# ---------------------------------------------------------------------------
# Finite-difference operators
# ---------------------------------------------------------------------------

def _upwind_gradient(nap, extent, velocity):
    """Upwind discretization of ``velocity * (d/dx1 + d/dx2)`` with zero inflow."""
    spacing = extent / (nap - 1)
    sign = 1.0 if velocity >= 0 else -1.0
    main = np.ones(nap)
    off = -np.ones(nap - 1)
    if sign > 0:
        d1 = sparse.diags([main, off], [0, -1]) / spacing
    else:
        d1 = sparse.diags([main, off], [0, 1]) / spacing
    eye = sparse.identity(nap)
    grad = sparse.kron(d1, eye) + sparse.kron(eye, d1)
    return (-abs(velocity) * grad).tocsr(), spacing


def _neumann_laplacian(nap, extent):
    """Symmetric flux-form Laplacian with zero-flux boundary."""
    spacing = extent / (nap - 1)
    main = -2.0 * np.ones(nap)
    main[0] = main[-1] = -1.0
    off = np.ones(nap - 1)
    t1 = sparse.diags([off, main, off], [-1, 0, 1]) / spacing**2
    eye = sparse.identity(nap)
    lap = sparse.kron(t1, eye) + sparse.kron(eye, t1)
    return lap.tocsr(), spacing


def _square_grid_coords(nap, extent):
    axis = np.linspace(0.0, extent, nap)
    g1, g2 = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([g1.ravel(), g2.ravel()], axis=1)


def _quadratic_state_cost(gamma, weight):
    def cost(y, u):
        return weight * float(y @ y) + gamma * float(u) ** 2
    return cost


# ---------------------------------------------------------------------------
# Bilinear advection benchmark
# ---------------------------------------------------------------------------

def advection_problem(nodes_per_axis=101, velocity=1.0, gamma=1e-5,
                      discount=1.0, control_range=(-2.0, 0.0),
                      num_controls=21, plain_state_norm=False):
    """Controlled constant-velocity advection on ``[0, 5]^2``.

    The transported field is damped or amplified multiplicatively by the
    scalar control; the running cost penalizes the squared field plus a
    small control penalty.  States advance by implicit Euler.
    """
    if nodes_per_axis < 3:
        raise ValueError("need at least 3 nodes per axis")
    extent = 5.0
    A, spacing = _upwind_gradient(nodes_per_axis, extent, velocity)
    d = nodes_per_axis**2
    coords = _square_grid_coords(nodes_per_axis, extent)
    weight = 1.0 if plain_state_norm else spacing**2
    cost = _quadratic_state_cost(gamma, weight)

    pde = SemiDiscretePDE(
        operator=A, coupling="bilinear", control_vector=None,
        nonlinearity=None, axis_counts=(nodes_per_axis, nodes_per_axis),
        spacing=spacing, boundary="dirichlet-zero")

    def drift(y, u):
        return A @ y + float(u) * y

    prob = ControlProblem(
        name="advection",
        dim=d,
        drift=drift,
        running_cost=cost,
        discount=discount,
        control_samples=np.linspace(control_range[0], control_range[1], num_controls),
        domain=Box.cube(-2.0, 2.0, d),
        step_scheme="implicit-euler",
        pde=pde,
        grid_coords=coords,
        control_range=tuple(control_range),
    )

    def cost_many(states, u):
        X = np.atleast_2d(states)
        return weight * np.einsum("ij,ij->i", X, X) + gamma * float(u) ** 2

    prob.cost_many = cost_many
    return prob


# ---------------------------------------------------------------------------
# Nonlinear heat benchmark
# ---------------------------------------------------------------------------

def heat_problem(nodes_per_axis=31, alpha=0.01, beta=6.0, gamma=1e-4,
                 discount=1.0, control_range=(-2.0, 0.0), num_controls=41,
                 control_shape=None, plain_state_norm=False):
    """Reaction-diffusion system on ``[0, 1]^2`` with zero-flux boundary.

    The reaction ``beta (y^2 - y^3)`` has stable equilibria at 0 and 1;
    the scalar control acts through a fixed spatial shape (by default the
    first product-sine mode).  Time stepping treats diffusion implicitly
    and the reaction and control explicitly.
    """
    if nodes_per_axis < 3:
        raise ValueError("need at least 3 nodes per axis")
    extent = 1.0
    lap, spacing = _neumann_laplacian(nodes_per_axis, extent)
    A = (alpha * lap).tocsr()
    d = nodes_per_axis**2
    coords = _square_grid_coords(nodes_per_axis, extent)
    if control_shape is None:
        control_shape = np.sin(np.pi * coords[:, 0]) * np.sin(np.pi * coords[:, 1])
    B = np.asarray(control_shape, dtype=float)
    weight = 1.0 if plain_state_norm else spacing**2
    cost = _quadratic_state_cost(gamma, weight)

    def nonlinearity(y):
        return beta * (y**2 - y**3)

    pde = SemiDiscretePDE(
        operator=A, coupling="affine", control_vector=B,
        nonlinearity=nonlinearity, axis_counts=(nodes_per_axis, nodes_per_axis),
        spacing=spacing, boundary="neumann-zero")

    def drift(y, u):
        return A @ y + float(u) * B + nonlinearity(y)

    prob = ControlProblem(
        name="heat",
        dim=d,
        drift=drift,
        running_cost=cost,
        discount=discount,
        control_samples=np.linspace(control_range[0], control_range[1], num_controls),
        domain=Box.cube(-2.0, 2.0, d),
        step_scheme="imex",
        pde=pde,
        grid_coords=coords,
        control_range=tuple(control_range),
    )

    def cost_many(states, u):
        X = np.atleast_2d(states)
        return weight * np.einsum("ij,ij->i", X, X) + gamma * float(u) ** 2

    prob.cost_many = cost_many
    return prob


# ---------------------------------------------------------------------------
# Initial conditions
# ---------------------------------------------------------------------------

def ic_class(problem, k):
    """Product-sine bump of height ``k`` supported on the unit square."""
    if not 0.0 < k <= 1.0:
        raise ValueError("k must lie in (0, 1]")
    if problem.grid_coords is None:
        raise ValueError("initial-condition class needs a gridded problem")
    xi = problem.grid_coords
    inside = np.all((xi >= 0.0) & (xi <= 1.0), axis=1)
    vals = k * np.sin(np.pi * xi[:, 0]) * np.sin(np.pi * xi[:, 1])
    return np.where(inside, vals, 0.0)


def pyramid_ic(problem):
    """Non-smooth tent-like initial state ``max(2 - p1 p2, 0)`` with
    ``pi = 2 |xi - 1/2| + 1``."""
    if problem.grid_coords is None:
        raise ValueError("pyramid initial condition needs a gridded problem")
    xi = problem.grid_coords
    p1 = 2.0 * np.abs(xi[:, 0] - 0.5) + 1.0
    p2 = 2.0 * np.abs(xi[:, 1] - 0.5) + 1.0
    return np.maximum(-p1 * p2 + 2.0, 0.0)
