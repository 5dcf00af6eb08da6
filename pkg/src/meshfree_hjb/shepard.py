"""Shepard moving-least-squares approximation over a scattered mesh.

The approximant at a query point is a convex combination of nodal values,
with weights proportional to a compactly supported kernel centered at each
node.  Queries outside every support ball fall back to the nearest node's
value, which preserves both the min-max bound and non-expansiveness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .kernel import WendlandKernel, wendland_eval
from .mesh import KDTREE_MAX_DIM, ScatteredMesh, nearest_node

__all__ = [
    "ShepardModel",
    "shepard_weights",
    "shepard_eval",
    "operator_norm_check",
    "build_weight_matrices",
]

# Kernel sums below this are treated as zero coverage to avoid overflow in
# the normalizing division.
DENOMINATOR_FLOOR = 1e-300


@dataclass(frozen=True)
class ShepardModel:
    """A mesh paired with a kernel shape; immutable and thread-safe."""

    mesh: ScatteredMesh
    kernel: WendlandKernel

    @property
    def sigma(self):
        return self.kernel.sigma

    @property
    def support_radius(self):
        return self.kernel.support


def shepard_weights(model, x, use_index=True):
    """Normalized weights at ``x`` as ``(node index, weight)`` pairs.

    Only nodes within the kernel support contribute.  An empty list means
    the query is outside the covered region.
    """
    q = np.asarray(x, dtype=float)
    if q.shape != (model.mesh.dim,):
        raise ValueError(f"query point must have dimension {model.mesh.dim}")
    r = model.support_radius
    if use_index and model.mesh.tree is not None:
        idx = np.asarray(model.mesh.tree.query_ball_point(q, r), dtype=np.intp)
        dists = np.linalg.norm(model.mesh.points[idx] - q, axis=1)
    else:
        diff = model.mesh.points - q
        dists = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        idx = np.flatnonzero(dists <= r)
        dists = dists[idx]
    vals = wendland_eval(dists, model.sigma) if idx.size else np.empty(0)
    total = float(np.sum(vals))
    if total <= DENOMINATOR_FLOOR:
        return []
    w = vals / total
    return [(int(i), float(wi)) for i, wi in zip(idx, w)]


def shepard_eval(model, nodal_values, x):
    """Evaluate the approximant of ``nodal_values`` at ``x``.

    Outside the covered region the nearest node's value is returned.
    """
    v = np.asarray(nodal_values, dtype=float)
    if v.shape != (model.mesh.n,):
        raise ValueError("one nodal value per mesh node required")
    pairs = shepard_weights(model, x)
    if not pairs:
        j, _ = nearest_node(model.mesh, np.asarray(x, dtype=float))
        return float(v[j])
    idx = np.array([p[0] for p in pairs], dtype=np.intp)
    w = np.array([p[1] for p in pairs])
    return float(w @ v[idx])


def evaluate_with_fallback(model, nodal_values, x):
    """Like :func:`shepard_eval` but also reports whether fallback fired."""
    v = np.asarray(nodal_values, dtype=float)
    pairs = shepard_weights(model, x)
    if not pairs:
        j, _ = nearest_node(model.mesh, np.asarray(x, dtype=float))
        return float(v[j]), True
    idx = np.array([p[0] for p in pairs], dtype=np.intp)
    w = np.array([p[1] for p in pairs])
    return float(w @ v[idx]), False


def operator_norm_check(model, v1, v2, sample_points):
    """Empirical operator norm ratio ``max |S[v1]-S[v2]| / ||v1-v2||_inf``.

    Must not exceed 1: the approximant is a convex combination of nodal
    values everywhere (nearest-node fallback included).
    """
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    denom = float(np.max(np.abs(v1 - v2)))
    if denom == 0.0:
        raise ValueError("value vectors must differ")
    worst = 0.0
    for x in np.atleast_2d(sample_points):
        s1 = shepard_eval(model, v1, x)
        s2 = shepard_eval(model, v2, x)
        worst = max(worst, abs(s1 - s2))
    return worst / denom


def _matrices_lowdim(mesh, sigmas, queries, skip_mask):
    tree = mesh.tree
    out = []
    active = np.flatnonzero(~skip_mask)
    fallback_nearest = None
    for sigma in sigmas:
        radius = 1.0 / sigma
        neigh = tree.query_ball_point(queries[active], radius)
        lengths = np.fromiter((len(lst) for lst in neigh), dtype=np.intp, count=active.size)
        cols = np.fromiter((j for lst in neigh for j in lst), dtype=np.intp,
                           count=int(lengths.sum()))
        rows = np.repeat(active, lengths)
        dists = np.linalg.norm(queries[rows] - mesh.points[cols], axis=1)
        vals = wendland_eval(dists, sigma) if cols.size else np.empty(0)
        nq = queries.shape[0]
        sums = np.bincount(rows, weights=vals, minlength=nq)
        covered = sums > DENOMINATOR_FLOOR
        good = covered[rows]
        rows, cols, vals = rows[good], cols[good], vals[good]
        vals = vals / sums[rows]
        fb_rows = np.flatnonzero(~covered & ~skip_mask)
        if fb_rows.size:
            if fallback_nearest is None:
                fallback_nearest, _ = nearest_node(mesh, queries)
            rows = np.concatenate([rows, fb_rows])
            cols = np.concatenate([cols, fallback_nearest[fb_rows]])
            vals = np.concatenate([vals, np.ones(fb_rows.size)])
        mat = sparse.csr_matrix((vals, (rows, cols)), shape=(nq, mesh.n))
        out.append((mat, int(fb_rows.size)))
    return out


def _matrices_highdim(mesh, sigmas, queries, skip_mask):
    nq = queries.shape[0]
    n = mesh.n
    pts = mesh.points
    sq = np.einsum("ij,ij->i", pts, pts)
    max_radius = 1.0 / min(sigmas)
    per_sigma = [([], [], []) for _ in sigmas]
    nearest_idx = np.zeros(nq, dtype=np.intp)
    nearest_d = np.full(nq, np.inf)
    block = max(1, int(2**22 // max(n, 1)))
    for start in range(0, nq, block):
        stop = min(start + block, nq)
        q = queries[start:stop]
        d2 = sq[None, :] + np.einsum("ij,ij->i", q, q)[:, None] - 2.0 * q @ pts.T
        np.maximum(d2, 0.0, out=d2)
        dist = np.sqrt(d2)
        amin = np.argmin(dist, axis=1)
        nearest_idx[start:stop] = amin
        nearest_d[start:stop] = dist[np.arange(stop - start), amin]
        rloc, cloc = np.nonzero(dist <= max_radius)
        dloc = dist[rloc, cloc]
        rglob = rloc + start
        ok = ~skip_mask[rglob]
        rglob, cloc, dloc = rglob[ok], cloc[ok], dloc[ok]
        for k, sigma in enumerate(sigmas):
            sel = dloc <= 1.0 / sigma
            per_sigma[k][0].append(rglob[sel])
            per_sigma[k][1].append(cloc[sel])
            per_sigma[k][2].append(dloc[sel])
    out = []
    for k, sigma in enumerate(sigmas):
        rows = np.concatenate(per_sigma[k][0]) if per_sigma[k][0] else np.empty(0, dtype=np.intp)
        cols = np.concatenate(per_sigma[k][1]) if per_sigma[k][1] else np.empty(0, dtype=np.intp)
        dists = np.concatenate(per_sigma[k][2]) if per_sigma[k][2] else np.empty(0)
        vals = wendland_eval(dists, sigma) if rows.size else np.empty(0)
        sums = np.bincount(rows, weights=vals, minlength=nq)
        covered = sums > DENOMINATOR_FLOOR
        good = covered[rows]
        rows, cols, vals = rows[good], cols[good], vals[good]
        vals = vals / sums[rows]
        fb_rows = np.flatnonzero(~covered & ~skip_mask)
        if fb_rows.size:
            rows = np.concatenate([rows, fb_rows])
            cols = np.concatenate([cols, nearest_idx[fb_rows]])
            vals = np.concatenate([vals, np.ones(fb_rows.size)])
        mat = sparse.csr_matrix((vals, (rows, cols)), shape=(nq, n))
        out.append((mat, int(fb_rows.size)))
    return out


def build_weight_matrices(mesh, sigmas, queries, skip_mask=None):
    """Sparse Shepard weight matrices for a batch of query points.

    Returns one ``(csr_matrix, fallback_count)`` pair per shape parameter.
    Each matrix row holds the normalized weights of one query: a convex
    combination for covered queries, a one-hot nearest-node row for
    uncovered ones, and an all-zero row for queries flagged in
    ``skip_mask`` (whose continuation value the caller supplies).
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if skip_mask is None:
        skip_mask = np.zeros(queries.shape[0], dtype=bool)
    sigmas = list(sigmas)
    if not sigmas:
        return []
    if mesh.dim <= KDTREE_MAX_DIM:
        return _matrices_lowdim(mesh, sigmas, queries, skip_mask)
    return _matrices_highdim(mesh, sigmas, queries, skip_mask)
