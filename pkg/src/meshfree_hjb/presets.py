"""Canonical benchmark configurations used by the CLI tables, the
experiment scripts and the acceptance suite.

The planar minimum-time benchmarks come in two mesh families: k-means
clustered random clouds of several sizes, and trajectory meshes at three
resolutions.  The PDE benchmarks exist at full size (slow) and at a
desk-scale reduction that keeps the discount, control range and cost
weights but shrinks the spatial grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Box, MeshRecipe, mesh_from_recipe
from .problems import advection_problem, eikonal_problem, heat_problem
from .solver import SolverConfig
from .tuner import ParameterRange

__all__ = [
    "EIKONAL_THETA_RANGE",
    "EIKONAL_DYNAMICS_LEVELS",
    "EIKONAL_RANDOM_SIZES",
    "eikonal_dynamics_recipe",
    "eikonal_random_recipe",
    "eikonal_grid_recipe",
    "eikonal_solver_config",
    "PDEPreset",
    "advection_preset",
    "heat_preset",
]

# Comparison grid for the planar benchmark tuner.
EIKONAL_THETA_RANGE = ParameterRange(1.0, 3.0, step=0.1)

# Trajectory-mesh levels: step size, seeds per control, control count and
# trajectory length.  Every trajectory starts from its own random state so
# the short rays spread over the whole box; k_bar is calibrated so node
# counts land near the reference benchmark sizes (~245 / ~915 / ~3460).
EIKONAL_DYNAMICS_LEVELS = {
    "coarse": {"dt_bar": 0.1, "num_seeds": 4, "num_controls": 16, "k_bar": 4,
               "independent_seeds": True},
    "medium": {"dt_bar": 0.05, "num_seeds": 8, "num_controls": 16, "k_bar": 7,
               "independent_seeds": True},
    "fine": {"dt_bar": 0.025, "num_seeds": 16, "num_controls": 16, "k_bar": 14,
             "independent_seeds": True},
}

EIKONAL_RANDOM_SIZES = (200, 400, 800, 1600, 3200)
EIKONAL_RANDOM_POOL = 40_000

# Default sweep budget: generous enough that benchmark solves always reach
# the 1e-6 sweep tolerance.
EIKONAL_MAX_SWEEPS = 2000


def eikonal_dynamics_recipe(level, seed=0):
    params = dict(EIKONAL_DYNAMICS_LEVELS[level])
    return MeshRecipe("dynamics", Box.cube(-1.0, 1.0, 2), params, seed=seed)


def eikonal_random_recipe(n, seed=0, pool_size=EIKONAL_RANDOM_POOL):
    return MeshRecipe("random-clustered", Box.cube(-1.0, 1.0, 2),
                      {"n": int(n), "pool_size": int(pool_size)}, seed=seed)


def eikonal_grid_recipe(per_axis=41, seed=0):
    return MeshRecipe("uniform-grid", Box.cube(-1.0, 1.0, 2),
                      {"per_axis": [per_axis, per_axis]}, seed=seed)


def eikonal_solver_config(mesh, dt=None):
    """Solver configuration with the step tied to the mesh resolution."""
    if dt is None:
        dt = mesh.resolution
    return SolverConfig(dt=dt, vi_tolerance=1e-6, max_sweeps=EIKONAL_MAX_SWEEPS)


@dataclass(frozen=True)
class PDEPreset:
    """Everything needed to run one PDE benchmark end to end."""

    name: str
    problem_kwargs: dict
    mesh_ic_levels: tuple
    mesh_num_controls: int
    mesh_dt_bar: float
    mesh_k_bar: int
    solver_dt: float
    theta_range: ParameterRange
    sim_horizon: float
    sim_dt: float
    feedback_controls: int | None = None

    def build_problem(self):
        builder = heat_problem if self.name.startswith("heat") else advection_problem
        return builder(**self.problem_kwargs)

    def build_mesh(self, problem):
        from .problems import ic_class
        seeds = np.vstack([ic_class(problem, k) for k in self.mesh_ic_levels])
        recipe = MeshRecipe("dynamics", problem.domain, {
            "initial_states": seeds.tolist(),
            "num_controls": self.mesh_num_controls,
            "dt_bar": self.mesh_dt_bar,
            "k_bar": self.mesh_k_bar,
        }, seed=0)
        return mesh_from_recipe(recipe, problem=problem)

    def solver_config(self):
        return SolverConfig(dt=self.solver_dt, vi_tolerance=1e-6, max_sweeps=2000)


def advection_preset(desk_scale=False):
    """Bilinear advection benchmark (101 x 101 full size, 21 x 21 desk)."""
    nap = 21 if desk_scale else 101
    return PDEPreset(
        name="advection-desk" if desk_scale else "advection",
        problem_kwargs={"nodes_per_axis": nap, "velocity": 1.0,
                        "gamma": 1e-5, "discount": 1.0,
                        "control_range": (-2.0, 0.0), "num_controls": 21},
        mesh_ic_levels=(0.5, 1.0),
        mesh_num_controls=11,
        mesh_dt_bar=0.1,
        mesh_k_bar=26,
        solver_dt=0.05,
        theta_range=ParameterRange(0.4, 0.7, step=0.05) if not desk_scale
        else ParameterRange(0.3, 0.9, step=0.1),
        sim_horizon=2.5,
        sim_dt=0.05,
        feedback_controls=81,
    )


def heat_preset(desk_scale=False):
    """Nonlinear heat benchmark (31 x 31 full size, 15 x 15 desk)."""
    nap = 15 if desk_scale else 31
    return PDEPreset(
        name="heat-desk" if desk_scale else "heat",
        problem_kwargs={"nodes_per_axis": nap, "alpha": 0.01, "beta": 6.0,
                        "gamma": 1e-4, "discount": 1.0,
                        "control_range": (-2.0, 0.0),
                        "num_controls": 21 if desk_scale else 41},
        mesh_ic_levels=(0.5, 1.0),
        mesh_num_controls=21 if desk_scale else 41,
        mesh_dt_bar=0.2 if desk_scale else 0.1,
        mesh_k_bar=26 if desk_scale else 51,
        solver_dt=0.075,
        theta_range=ParameterRange(2.0, 2.4, step=0.05) if not desk_scale
        else ParameterRange(1.5, 3.0, step=0.25),
        sim_horizon=5.0,
        sim_dt=0.1,
        feedback_controls=None,
    )
