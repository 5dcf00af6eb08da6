"""Scattered point clouds: generation, distances and fixed-radius search.

Three generators are provided: tensor-product grids, k-means clustered
random clouds, and meshes built from discrete trajectories of a control
system.  A built :class:`ScatteredMesh` is immutable and carries its exact
separation distance plus a Monte-Carlo estimate of the fill distance when
the dimension is low enough to sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.spatial import cKDTree

from .errors import CapacityError, DegenerateMeshError

__all__ = [
    "Box",
    "ScatteredMesh",
    "MeshRecipe",
    "separation_distance",
    "estimate_fill_distance",
    "generate_uniform_grid",
    "generate_random_clustered",
    "generate_dynamics_mesh",
    "mesh_from_recipe",
    "range_query",
    "nearest_node",
    "check_mesh_reachability_bound",
    "shape_scale",
    "build_mesh",
]

# cKDTree-based search degrades past moderate dimension; beyond this we use
# a blocked linear scan (the meshes stay small because they follow
# trajectories, so a scan is cheap).
KDTREE_MAX_DIM = 8

# Fill distance is only estimated where Monte-Carlo sampling of the domain
# is meaningful.
FILL_ESTIMATE_MAX_DIM = 3
DEFAULT_FILL_SAMPLES = 100_000

DEFAULT_NODE_CAP = 10_000_000


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with finite bounds and positive extent per axis."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(hi <= lo):
            raise ValueError("box must have positive extent in every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, lo, hi, dim):
        return cls(np.full(dim, float(lo)), np.full(dim, float(hi)))

    @property
    def dim(self):
        return self.lo.size

    def diameter(self):
        return float(np.linalg.norm(self.hi - self.lo))

    def sample(self, rng, n):
        u = rng.random((n, self.dim))
        return self.lo + u * (self.hi - self.lo)

    def clamp(self, points):
        return np.clip(points, self.lo, self.hi)

    def contains(self, points, slack=0.0):
        pts = np.atleast_2d(points)
        ok = np.all((pts >= self.lo - slack) & (pts <= self.hi + slack), axis=1)
        return ok if np.asarray(points).ndim > 1 else bool(ok[0])

    def to_dict(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["lo"], dtype=float), np.asarray(d["hi"], dtype=float))


@dataclass(frozen=True)
class MeshRecipe:
    """Declarative description of how a mesh is generated.

    ``kind`` is one of ``uniform-grid``, ``random-clustered`` or
    ``dynamics``; ``params`` holds the generator arguments and ``seed``
    makes the construction reproducible.
    """

    kind: str
    domain: Box | None
    params: dict
    seed: int = 0

    def to_dict(self):
        return {
            "kind": self.kind,
            "domain": self.domain.to_dict() if self.domain is not None else None,
            "params": dict(self.params),
            "seed": self.seed,
        }


@dataclass
class ScatteredMesh:
    """Immutable point cloud with its basic geometric quantities."""

    points: np.ndarray
    separation: float
    fill_estimate: float | None = None
    fill_samples: int = 0
    mean_gap: float | None = None
    nn_max: float | None = None
    domain: Box | None = None
    recipe: dict | None = None
    clamp_count: int = 0
    _tree: Any = field(default=None, repr=False, compare=False)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def tree(self):
        """Range-search index; only built for dimensions a k-d tree handles well."""
        if self.dim > KDTREE_MAX_DIM:
            return None
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree

    @property
    def resolution(self):
        """Effective covering scale of the mesh.

        The sup-based fill estimate degenerates for trajectory meshes,
        where deliberately uncovered pockets dominate the maximum, so the
        solver scale combines the largest nearest-neighbor gap inside the
        mesh with twice the mean sample-to-mesh distance.  For meshes
        without sampled statistics (high dimension) the exact separation
        distance is the scale.
        """
        if self.nn_max is not None and self.mean_gap is not None:
            return max(self.nn_max, 2.0 * self.mean_gap)
        if np.isfinite(self.separation):
            return self.separation
        raise ValueError("mesh carries no usable resolution scale")


def _pairwise_min_distance(points):
    n, d = points.shape
    if d <= KDTREE_MAX_DIM and n > 64:
        tree = cKDTree(points)
        dist, _ = tree.query(points, k=2)
        return float(dist[:, 1].min())
    best = np.inf
    sq = np.einsum("ij,ij->i", points, points)
    block = max(1, int(2**22 // max(n, 1)))
    for start in range(0, n, block):
        stop = min(start + block, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * points[start:stop] @ points.T
        np.maximum(d2, 0.0, out=d2)
        for i in range(start, stop):
            d2[i - start, i] = np.inf
        best = min(best, float(d2.min()))
    return math.sqrt(best)


def separation_distance(points):
    """Exact minimum pairwise Euclidean distance of a point set."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("separation distance needs at least two points")
    q = _pairwise_min_distance(pts)
    if q <= 0.0:
        raise DegenerateMeshError("mesh contains duplicate points")
    return q


def _min_distances_to(points, queries):
    """Distance from each query to its nearest point; exact, blocked."""
    pts = np.asarray(points, dtype=float)
    qs = np.atleast_2d(np.asarray(queries, dtype=float))
    if pts.shape[1] <= KDTREE_MAX_DIM:
        tree = cKDTree(pts)
        dist, idx = tree.query(qs)
        return np.atleast_1d(dist), np.atleast_1d(idx)
    sq = np.einsum("ij,ij->i", pts, pts)
    out_d = np.empty(qs.shape[0])
    out_i = np.empty(qs.shape[0], dtype=np.intp)
    block = max(1, int(2**22 // max(pts.shape[0], 1)))
    for start in range(0, qs.shape[0], block):
        stop = min(start + block, qs.shape[0])
        q = qs[start:stop]
        d2 = sq[None, :] + np.einsum("ij,ij->i", q, q)[:, None] - 2.0 * q @ pts.T
        np.maximum(d2, 0.0, out=d2)
        out_i[start:stop] = np.argmin(d2, axis=1)
        out_d[start:stop] = np.sqrt(d2[np.arange(stop - start), out_i[start:stop]])
    return out_d, out_i


def _fill_statistics(points, box, sample_count, seed):
    """Streamed max and mean of sample-to-mesh distances."""
    pts = np.asarray(points, dtype=float)
    rng = np.random.default_rng(seed)
    tree = cKDTree(pts) if pts.shape[1] <= KDTREE_MAX_DIM else None
    best = 0.0
    total = 0.0
    remaining = int(sample_count)
    chunk = 20_000
    while remaining > 0:
        m = min(chunk, remaining)
        samples = box.sample(rng, m)
        if tree is not None:
            dist, _ = tree.query(samples)
        else:
            dist, _ = _min_distances_to(pts, samples)
        best = max(best, float(dist.max()))
        total += float(dist.sum())
        remaining -= m
    return best, total / sample_count


def estimate_fill_distance(points, box, sample_count=DEFAULT_FILL_SAMPLES, seed=0):
    """Monte-Carlo lower bound on the fill distance of ``points`` in ``box``.

    Draws ``sample_count`` uniform samples (a fixed stream for a fixed
    seed, so the estimate is monotone non-decreasing in the sample count)
    and returns the largest distance from a sample to the point set.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError("fill distance needs a non-empty point set")
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    best, _ = _fill_statistics(pts, box, sample_count, seed)
    return best


def build_mesh(points, domain=None, recipe=None, seed=0,
               fill_samples=DEFAULT_FILL_SAMPLES, estimate_fill=None,
               clamp_count=0):
    """Wrap a point array into a :class:`ScatteredMesh`.

    Computes the exact separation distance and, for low-dimensional meshes
    with a known domain, a Monte-Carlo fill estimate (seeded independently
    of the point generation so both are reproducible).
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=float))
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError("mesh needs an (n, d) array with n >= 1")
    sep = separation_distance(pts) if pts.shape[0] >= 2 else np.inf
    if estimate_fill is None:
        estimate_fill = domain is not None and pts.shape[1] <= FILL_ESTIMATE_MAX_DIM
    fill = mean_gap = nn_max = None
    used_samples = 0
    if estimate_fill:
        if domain is None:
            raise ValueError("fill estimation needs a domain box")
        fill, mean_gap = _fill_statistics(pts, domain, fill_samples, seed=[seed, 0x51])
        used_samples = fill_samples
        if pts.shape[0] >= 2 and pts.shape[1] <= KDTREE_MAX_DIM:
            nn, _ = cKDTree(pts).query(pts, k=2)
            nn_max = float(nn[:, 1].max())
    return ScatteredMesh(points=pts, separation=sep, fill_estimate=fill,
                         fill_samples=used_samples, mean_gap=mean_gap,
                         nn_max=nn_max, domain=domain,
                         recipe=recipe.to_dict() if isinstance(recipe, MeshRecipe) else recipe,
                         clamp_count=clamp_count)


def shape_scale(mesh):
    """Length scale turning a dimensionless theta into a shape parameter.

    Delegates to :attr:`ScatteredMesh.resolution`: a pocket-robust covering
    scale for sampled (low-dimensional) meshes, the exact separation
    distance for high-dimensional ones.
    """
    return mesh.resolution


def generate_uniform_grid(box, per_axis_counts, max_nodes=DEFAULT_NODE_CAP,
                          fill_samples=DEFAULT_FILL_SAMPLES, seed=0):
    """Tensor-product equispaced nodes including the box faces."""
    counts = [int(c) for c in np.atleast_1d(per_axis_counts)]
    if len(counts) != box.dim:
        raise ValueError("one count per axis required")
    if any(c < 2 for c in counts):
        raise ValueError("every per-axis count must be at least 2")
    total = math.prod(counts)
    if total > max_nodes:
        raise CapacityError(f"grid would have {total} nodes, cap is {max_nodes}")
    axes = [np.linspace(box.lo[k], box.hi[k], counts[k]) for k in range(box.dim)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    recipe = MeshRecipe("uniform-grid", box, {"per_axis": counts}, seed=seed)
    return build_mesh(pts, domain=box, recipe=recipe, seed=seed, fill_samples=fill_samples)


def _assign_labels(pool, centroids):
    if centroids.shape[1] <= KDTREE_MAX_DIM:
        tree = cKDTree(centroids)
        _, labels = tree.query(pool)
        return labels
    _, labels = _min_distances_to(centroids, pool)
    return labels


def generate_random_clustered(box, n, pool_size, kmeans_iters=100, seed=0,
                              move_tol=1e-6, fill_samples=DEFAULT_FILL_SAMPLES):
    """Cluster a uniform random pool with Lloyd's k-means; nodes = centroids.

    Deterministic for a fixed seed.  Empty clusters are re-seeded from
    random pool points; iteration stops after ``kmeans_iters`` rounds or
    when the largest centroid movement falls below ``move_tol`` relative
    to the box diameter.
    """
    if n < 1 or pool_size < n:
        raise ValueError("need pool_size >= n >= 1")
    rng = np.random.default_rng(seed)
    pool = box.sample(rng, pool_size)
    idx = rng.choice(pool_size, size=n, replace=False)
    centroids = pool[idx].copy()
    diam = box.diameter()
    for _ in range(int(kmeans_iters)):
        labels = _assign_labels(pool, centroids)
        counts = np.bincount(labels, minlength=n)
        new = np.empty_like(centroids)
        for k in range(box.dim):
            sums = np.bincount(labels, weights=pool[:, k], minlength=n)
            new[:, k] = np.divide(sums, counts, out=np.zeros(n), where=counts > 0)
        empty = np.flatnonzero(counts == 0)
        for j in empty:
            new[j] = pool[rng.integers(pool_size)]
        move = float(np.linalg.norm(new - centroids, axis=1).max())
        centroids = new
        if move < move_tol * diam:
            break
    recipe = MeshRecipe("random-clustered", box,
                        {"n": int(n), "pool_size": int(pool_size),
                         "kmeans_iters": int(kmeans_iters)}, seed=seed)
    return build_mesh(centroids, domain=box, recipe=recipe, seed=seed,
                      fill_samples=fill_samples)


def _dedup_points(points, tol):
    """Drop points that coincide (within tol) with an earlier point."""
    pts = np.asarray(points, dtype=float)
    _, first = np.unique(pts, axis=0, return_index=True)
    keep_order = np.sort(first)
    pts = pts[keep_order]
    if tol <= 0 or pts.shape[1] > KDTREE_MAX_DIM or pts.shape[0] < 2:
        return pts
    tree = cKDTree(pts)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    if pairs.size == 0:
        return pts
    keep = np.ones(pts.shape[0], dtype=bool)
    order = np.lexsort((pairs[:, 0], pairs[:, 1]))
    for i, j in pairs[order]:
        if keep[i] and keep[j]:
            keep[j] = False
    return pts[keep]


def _trajectory_chunks(problem, seeds, u, dt_bar, k_bar, safety_margin):
    """Forward trajectories of all ``seeds`` under one constant control.

    Returns the visited states step by step plus the number of points that
    had to be clamped back onto the domain box.
    """
    box = problem.domain
    clamped = 0
    states = seeds.copy()
    chunks = [states]
    for _ in range(int(k_bar) - 1):
        states = problem.step_many(states, u, dt_bar)
        outside = ~box.contains(states, slack=safety_margin)
        if np.any(outside):
            states = states.copy()
            states[outside] = box.clamp(states[outside])
            clamped += int(outside.sum())
        chunks.append(states)
    return chunks, clamped


def generate_dynamics_mesh(problem, initial_states, controls, dt_bar, k_bar,
                           dedup_tol=None, safety_margin=0.0,
                           fill_samples=DEFAULT_FILL_SAMPLES, seed=0,
                           recipe=None, pair_seeds=False):
    """Mesh made of discrete trajectories of the control system.

    For every pair of seed state and constant control, the one-step map of
    ``problem`` is applied ``k_bar - 1`` times with step ``dt_bar``; the
    union of all visited states (seeds included) forms the mesh.  With
    ``pair_seeds`` the seed list is interpreted per control: row block
    ``j`` of ``initial_states`` seeds only control ``j``, so every
    trajectory starts from its own state.  A point that leaves the problem
    domain by more than ``safety_margin`` is clamped onto the domain box
    and counted.  Points closer than ``dedup_tol`` (default ``1e-10``
    times the domain diameter) to an earlier point are dropped so the
    separation distance stays positive.
    """
    seeds = np.atleast_2d(np.asarray(initial_states, dtype=float))
    ctrl = np.atleast_1d(np.asarray(controls))
    if dt_bar <= 0:
        raise ValueError("dt_bar must be positive")
    if k_bar < 1:
        raise ValueError("k_bar must be at least 1")
    if seeds.shape[0] == 0 or ctrl.shape[0] == 0:
        raise ValueError("need at least one seed state and one control")
    if pair_seeds and seeds.shape[0] % ctrl.shape[0] != 0:
        raise ValueError("pair_seeds needs one seed block per control")
    box = problem.domain
    if dedup_tol is None:
        dedup_tol = 1e-10 * box.diameter()

    clamp_count = 0
    chunks = []
    per_control = seeds.shape[0] // ctrl.shape[0] if pair_seeds else seeds.shape[0]
    for j, u in enumerate(ctrl):
        block = seeds[j * per_control:(j + 1) * per_control] if pair_seeds else seeds
        traj, clamped = _trajectory_chunks(problem, block, u, dt_bar, k_bar,
                                           safety_margin)
        chunks.extend(traj)
        clamp_count += clamped
    pts = _dedup_points(np.vstack(chunks), dedup_tol)
    return build_mesh(pts, domain=box, recipe=recipe, seed=seed,
                      fill_samples=fill_samples, clamp_count=clamp_count)


def mesh_from_recipe(recipe, problem=None):
    """Build a mesh from a :class:`MeshRecipe` (dispatch on ``kind``)."""
    params = dict(recipe.params)
    if recipe.kind == "uniform-grid":
        return generate_uniform_grid(recipe.domain, params["per_axis"], seed=recipe.seed)
    if recipe.kind == "random-clustered":
        return generate_random_clustered(
            recipe.domain, params["n"], params["pool_size"],
            kmeans_iters=params.get("kmeans_iters", 100), seed=recipe.seed)
    if recipe.kind == "dynamics":
        if problem is None:
            raise ValueError("dynamics recipes need the control problem")
        rng = np.random.default_rng(recipe.seed)
        if "controls" in params:
            controls = np.asarray(params["controls"])
        else:
            controls = problem.coarse_controls(int(params["num_controls"]))
        pair_seeds = bool(params.get("independent_seeds", False))
        if "initial_states" in params:
            seeds = np.asarray(params["initial_states"], dtype=float)
        elif pair_seeds:
            # one fresh batch of seed states per control
            seeds = problem.domain.sample(
                rng, int(params["num_seeds"]) * controls.shape[0])
        else:
            seeds = problem.domain.sample(rng, int(params["num_seeds"]))
        return generate_dynamics_mesh(
            problem, seeds, controls, params["dt_bar"], params["k_bar"],
            dedup_tol=params.get("dedup_tol"),
            safety_margin=params.get("safety_margin", 0.0),
            seed=recipe.seed, recipe=recipe, pair_seeds=pair_seeds)
    raise ValueError(f"unknown mesh recipe kind {recipe.kind!r}")


def range_query(mesh, x, radius):
    """All nodes within ``radius`` of ``x`` as ``(index, distance)`` pairs."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    q = np.asarray(x, dtype=float)
    if q.shape != (mesh.dim,):
        raise ValueError(f"query point must have dimension {mesh.dim}")
    if mesh.tree is not None:
        idx = np.asarray(mesh.tree.query_ball_point(q, radius), dtype=np.intp)
    else:
        diff = mesh.points - q
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        idx = np.flatnonzero(d <= radius)
    dists = np.linalg.norm(mesh.points[idx] - q, axis=1)
    return [(int(i), float(d)) for i, d in zip(idx, dists)]


def nearest_node(mesh, x):
    """Index and distance of the node closest to ``x``."""
    q = np.atleast_2d(np.asarray(x, dtype=float))
    if mesh.tree is not None:
        dist, idx = mesh.tree.query(q)
    else:
        dist, idx = _min_distances_to(mesh.points, q)
    if np.asarray(x).ndim == 1:
        return int(idx[0]), float(dist[0])
    return idx, dist


def check_mesh_reachability_bound(mesh, problem, dt, controls):
    """Largest distance from any one-step image of a node back to the mesh.

    The image uses the explicit drift, ``x + dt f(x, u)``; callers compare
    the result against ``M_f * dt``.
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0:
        return 0.0
    worst = 0.0
    for u in np.atleast_1d(np.asarray(controls)):
        stepped = mesh.points + dt * problem.drift_many(mesh.points, u)
        dist, _ = _min_distances_to(mesh.points, stepped)
        worst = max(worst, float(dist.max()))
    return worst
