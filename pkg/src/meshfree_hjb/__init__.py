"""Mesh-free value iteration for infinite-horizon optimal control.

Builds scattered meshes driven by the system dynamics, approximates the
value function with Shepard moving least squares over compactly supported
Wendland kernels, selects the kernel shape by minimizing the Bellman
residual, and synthesizes feedback controls for closed-loop simulation.
"""

from .errors import (CapacityError, ConvergenceError, DegenerateMeshError,
                     TunerError)
from .feedback import (Trajectory, evaluate_cost, feedback_control,
                       relative_error, simulate_closed_loop)
from .kernel import WendlandKernel, support_radius, wendland_eval
from .mesh import (Box, MeshRecipe, ScatteredMesh,
                   check_mesh_reachability_bound, estimate_fill_distance,
                   generate_dynamics_mesh, generate_random_clustered,
                   generate_uniform_grid, mesh_from_recipe, nearest_node,
                   range_query, separation_distance, shape_scale)
from .problems import (ControlProblem, SemiDiscretePDE, TargetBall,
                       advection_problem, eikonal_problem, heat_problem,
                       ic_class, kruzkov_exact, pyramid_ic, step)
from .shepard import (ShepardModel, operator_norm_check, shepard_eval,
                      shepard_weights)
from .solver import (SolverConfig, ValueFunction, bellman_update, residual,
                     value_iteration)
from .tuner import (ParameterRange, ResidualProfile, oracle_theta,
                    select_theta_comparison, select_theta_gradient,
                    sigma_for_theta)

__version__ = "0.1.0"

__all__ = [
    "Box", "CapacityError", "ControlProblem", "ConvergenceError",
    "DegenerateMeshError", "MeshRecipe", "ParameterRange", "ResidualProfile",
    "ScatteredMesh", "SemiDiscretePDE", "ShepardModel", "SolverConfig",
    "TargetBall", "Trajectory", "TunerError", "ValueFunction",
    "WendlandKernel", "advection_problem", "bellman_update",
    "check_mesh_reachability_bound", "eikonal_problem", "estimate_fill_distance",
    "evaluate_cost", "feedback_control", "generate_dynamics_mesh",
    "generate_random_clustered", "generate_uniform_grid", "heat_problem",
    "ic_class", "kruzkov_exact", "mesh_from_recipe", "nearest_node",
    "operator_norm_check", "oracle_theta", "pyramid_ic", "range_query",
    "relative_error", "residual", "select_theta_comparison",
    "select_theta_gradient", "separation_distance", "shape_scale",
    "shepard_eval", "shepard_weights", "sigma_for_theta",
    "simulate_closed_loop", "step", "support_radius", "value_iteration",
    "wendland_eval",
]
