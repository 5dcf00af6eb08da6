"""Feedback synthesis and closed-loop simulation from a stored value table.

The feedback control at a state is the minimizer of the same one-step
bracket used by the solver, evaluated over a (possibly refined) control
grid.  Closed-loop runs step the true dynamics, optionally perturb the
state with seeded Gaussian noise, stop early on target entry for
minimum-time problems, and accumulate the discounted running cost with a
left-endpoint rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .shepard import evaluate_with_fallback

__all__ = [
    "Trajectory",
    "feedback_control",
    "simulate_closed_loop",
    "evaluate_cost",
    "relative_error",
]


@dataclass
class Trajectory:
    """A simulated closed-loop run."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    cost: float
    arrival_time: float | None = None
    reached_target: bool = False
    truncated: bool = False
    noise_seed: int | None = None
    fallback_count: int = 0

    @property
    def terminal_state(self):
        return self.states[-1]


def _bracket_values(problem, model, values, x, dt, controls):
    """One-step cost of each candidate control at state ``x``."""
    out = np.empty(controls.shape[0])
    fallbacks = 0
    rho = 1.0 - dt * problem.discount
    for i, u in enumerate(controls):
        z = problem.step(x, u, dt)
        if problem.target is not None and problem.target.contains(z):
            cont = problem.target.value
        else:
            cont, fell = evaluate_with_fallback(model, values, z)
            fallbacks += fell
        out[i] = dt * problem.running_cost(x, u) + rho * cont
    return out, fallbacks


def feedback_control(problem, model, values, x, dt, controls=None):
    """Minimizing control at state ``x`` (lowest index wins ties)."""
    values = np.asarray(values, dtype=float)
    if values.shape != (model.mesh.n,):
        raise ValueError("one value per mesh node required")
    if controls is None:
        controls = problem.control_samples
    controls = np.atleast_1d(np.asarray(controls))
    bracket, _ = _bracket_values(problem, model, values, np.asarray(x, dtype=float),
                                 dt, controls)
    return controls[int(np.argmin(bracket))]


def refined_controls(problem, m):
    """A finer control grid than the solve grid, same range."""
    return problem.coarse_controls(m)


def simulate_closed_loop(problem, model, values, x0, horizon, dt,
                         controls=None, noise_std=None, noise_seed=0,
                         forced_control=None, safety_margin=None):
    """Run the feedback loop from ``x0`` until the horizon (or the target).

    With ``noise_std`` set, i.i.d. Gaussian noise is added to every state
    component after each step and to the initial state, using a dedicated
    seeded generator.  ``forced_control`` bypasses the feedback map (for
    uncontrolled baselines).  If the state leaves the problem domain by
    more than ``safety_margin`` (default: a quarter of the domain
    diameter) the run stops and is flagged as truncated.
    """
    if horizon <= 0 or dt <= 0:
        raise ValueError("horizon and dt must be positive")
    values = np.asarray(values, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (problem.dim,):
        raise ValueError(f"initial state must have dimension {problem.dim}")
    if controls is None:
        controls = problem.control_samples
    controls = np.atleast_1d(np.asarray(controls))
    if safety_margin is None:
        safety_margin = 0.25 * problem.domain.diameter()
    rng = np.random.default_rng(noise_seed) if noise_std is not None else None
    if rng is not None:
        x = x + rng.normal(0.0, noise_std, size=x.shape)

    n_steps = int(np.ceil(horizon / dt - 1e-12))
    states = [x.copy()]
    applied = []
    times = [0.0]
    cost = 0.0
    arrival = None
    reached = False
    truncated = False
    fallbacks = 0

    if problem.target is not None and problem.target.contains(x):
        arrival, reached = 0.0, True
        n_steps = 0

    for k in range(n_steps):
        t_k = k * dt
        if forced_control is not None:
            u = forced_control
        else:
            bracket, fell = _bracket_values(problem, model, values, x, dt, controls)
            fallbacks += fell
            u = controls[int(np.argmin(bracket))]
        cost += dt * float(problem.running_cost(x, u)) * np.exp(-problem.discount * t_k)
        x = problem.step(x, u, dt)
        if rng is not None:
            x = x + rng.normal(0.0, noise_std, size=x.shape)
        applied.append(u)
        states.append(x.copy())
        times.append((k + 1) * dt)
        if problem.target is not None and problem.target.contains(x):
            arrival, reached = (k + 1) * dt, True
            break
        if not problem.domain.contains(x, slack=safety_margin):
            truncated = True
            break

    return Trajectory(
        times=np.asarray(times), states=np.asarray(states),
        controls=np.asarray(applied), cost=cost, arrival_time=arrival,
        reached_target=reached, truncated=truncated,
        noise_seed=noise_seed if noise_std is not None else None,
        fallback_count=fallbacks)


def evaluate_cost(problem, trajectory):
    """Discounted running cost of a trajectory, left-endpoint rule."""
    states = np.atleast_2d(trajectory.states)
    controls = np.atleast_1d(trajectory.controls)
    if controls.shape[0] == 0:
        return 0.0
    if states.shape[1] != problem.dim:
        raise ValueError("trajectory dimension does not match the problem")
    total = 0.0
    for k, u in enumerate(controls):
        t_k = trajectory.times[k]
        dt = trajectory.times[k + 1] - trajectory.times[k]
        total += dt * float(problem.running_cost(states[k], u)) \
            * np.exp(-problem.discount * t_k)
    return float(total)


def relative_error(values, mesh, exact_value):
    """Sup-norm error over mesh nodes relative to the exact sup-norm."""
    values = np.asarray(values, dtype=float)
    exact = np.asarray(exact_value(mesh.points), dtype=float)
    denom = float(np.max(np.abs(exact)))
    if denom == 0.0:
        raise ValueError("exact solution is identically zero on the mesh")
    return float(np.max(np.abs(values - exact))) / denom
