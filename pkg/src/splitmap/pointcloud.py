"""Meshless Laplacian solves over point clouds.

One code path serves two callers: the graph backend's Poisson solve (cloud =
graph vertices inside a ball) and the harmonic replacement on analytic
backends (cloud = a fresh quasi-uniform sample of the ball).  The discrete
Laplacian is the kernel-graph estimator

    (L u)_i = 2(n+2) / (p h^{n+2} omega_n) * sum_{|x_j-x_i|<=h} (u_j - u_i)

which is consistent for uniform density p.  Dirichlet data lives on a
boundary shell of width 1.5x the mean edge length; the interior block is
solved by diagonally preconditioned conjugate gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import cg
from scipy.spatial import cKDTree

from .manifold import GeometryError, unit_ball_volume


@dataclass
class SolveStats:
    iterations: int
    residual: float
    converged: bool
    unknowns: int


class Cloud:
    """Point set + kernel graph over a metric ball."""

    def __init__(self, manifold, center, radius: float, ids, coords, density: float, h: float):
        self.manifold = manifold
        self.center = center
        self.radius = radius
        self.ids = ids  # vertex ids on graphs, None on analytic backends
        self.coords = coords  # backend coordinates of the cloud points
        self.density = density
        self.h = h
        self._build_kernel_graph()
        self.center_dist = manifold.distances_from(center, ids if manifold.is_graph else coords)

    def _build_kernel_graph(self) -> None:
        m = self.manifold
        emb = m._embed(self.coords) if m.is_graph else self._embed_analytic(self.coords)
        tree = cKDTree(emb)
        pairs = tree.query_pairs(self.h, output_type="ndarray")
        if pairs.size == 0:
            raise GeometryError("cloud kernel graph has no edges; increase density")
        # chordal embedding under-reports curved distances; filter by the true metric
        metric = m.base if m.is_graph else m
        d = metric.pair_distances(self.coords[pairs[:, 0]], self.coords[pairs[:, 1]])
        keep = d <= self.h
        pairs, d = pairs[keep], d[keep]
        npts = self.coords.shape[0]
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        vals = np.concatenate([d, d])
        self.adjacency = csr_matrix((np.ones_like(vals), (rows, cols)), shape=(npts, npts))
        self.edge_lengths = csr_matrix((vals, (rows, cols)), shape=(npts, npts))
        self.mean_edge_length = float(d.mean()) if d.size else self.h
        self.degree = np.asarray(self.adjacency.sum(axis=1)).ravel()

    def _embed_analytic(self, coords: np.ndarray) -> np.ndarray:
        kind = getattr(self.manifold, "kind", "")
        if kind == "euclidean":
            return coords
        if kind == "sphere-cap":
            return self.manifold.radius * coords
        a = self.manifold.alpha
        s, phi = coords[:, 0], coords[:, 1]
        if a >= 1.0 - 1e-12:
            return np.stack([s * np.cos(phi), s * np.sin(phi)], axis=1)
        return np.stack(
            [a * s * np.cos(phi / a), a * s * np.sin(phi / a), s * math.sqrt(1.0 - a * a)], axis=1
        )

    def laplacian_scale(self) -> float:
        n = self.manifold.n
        return 2.0 * (n + 2) / (self.density * self.h ** (n + 2) * unit_ball_volume(n))


def build_cloud(m, center, radius: float, count: int = 4000, tag: str = "cloud", h_factor: float = 3.0) -> Cloud:
    """Cloud over B_radius(center): graph vertices, or a fresh analytic sample."""
    if m.is_graph:
        ids = m.points_in_ball(center, radius)
        if ids.size < 8:
            raise GeometryError("ball contains too few graph vertices")
        coords = m.coords[ids]
        density = 1.0 / m.weight
        h = m.connectivity_radius
        return Cloud(m, center, radius, ids, coords, density, h)
    coords = m.sample_ball(center, radius, count, tag=tag)
    vol = m.ball_volume(center, radius).volume
    density = count / vol
    h = h_factor * (vol / count) ** (1.0 / m.n)
    return Cloud(m, center, radius, None, coords, density, h)


def dirichlet_solve(
    cloud: Cloud,
    rhs_value: float,
    boundary_values: np.ndarray,
    shell_width: float | None = None,
    rtol: float = 1e-8,
):
    """Solve (discrete Laplacian) u = rhs with Dirichlet data on the outer shell.

    boundary_values must be given for every cloud point; only shell entries
    are used.  Returns (values, interior_mask, SolveStats).
    """
    shell = shell_width if shell_width else 1.5 * cloud.mean_edge_length
    boundary = cloud.center_dist > cloud.radius - shell
    interior = ~boundary
    n_int = int(interior.sum())
    if n_int == 0 or int(boundary.sum()) == 0:
        raise GeometryError("degenerate Dirichlet split; ball too small for the shell")
    scale = cloud.laplacian_scale()
    A = cloud.adjacency
    deg = cloud.degree
    # positive-definite form: scale * (D - W) u = -rhs on the interior block
    idx_int = np.flatnonzero(interior)
    idx_bnd = np.flatnonzero(boundary)
    W_ii = A[idx_int][:, idx_int]
    W_ib = A[idx_int][:, idx_bnd]
    D_ii = deg[idx_int]
    ub = boundary_values[idx_bnd]
    rhs = -np.full(n_int, rhs_value) / scale + W_ib @ ub
    lhs_diag = D_ii
    if np.any(lhs_diag <= 0):
        raise GeometryError("isolated cloud point; kernel radius too small")

    def matvec(v):
        return lhs_diag * v - W_ii @ v

    from scipy.sparse.linalg import LinearOperator

    op = LinearOperator((n_int, n_int), matvec=matvec)
    M = LinearOperator((n_int, n_int), matvec=lambda v: v / lhs_diag)
    cap = int(50 * math.sqrt(n_int)) + 10
    iters = 0

    def count_iter(_):
        nonlocal iters
        iters += 1

    x0 = np.interp(
        cloud.center_dist[idx_int], [0.0, cloud.radius], [float(np.min(ub)), float(np.max(ub))]
    )
    sol, info = cg(op, rhs, x0=x0, rtol=rtol, maxiter=cap, M=M, callback=count_iter)
    res = float(np.linalg.norm(matvec(sol) - rhs) / max(np.linalg.norm(rhs), 1e-300))
    values = np.empty(cloud.coords.shape[0])
    values[idx_int] = sol
    values[idx_bnd] = ub
    stats = SolveStats(iterations=iters, residual=res, converged=(info == 0), unknowns=n_int)
    return values, interior, stats


class CloudField:
    """Scalar field carried by a cloud, evaluable off the cloud by local fits."""

    def __init__(self, cloud: Cloud, values: np.ndarray, label: str):
        self.cloud = cloud
        self.manifold = cloud.manifold
        self.table = np.asarray(values, dtype=float)
        self.label = label
        emb = (
            cloud.manifold._embed(cloud.coords)
            if cloud.manifold.is_graph
            else cloud._embed_analytic(cloud.coords)
        )
        self._tree = cKDTree(emb)
        self._emb = emb

    def _neighborhoods(self, pts: np.ndarray, k: int):
        emb = (
            self.cloud.manifold._embed(pts)
            if self.cloud.manifold.is_graph
            else self.cloud._embed_analytic(pts)
        )
        _, idx = self._tree.query(emb, k=min(k, self.table.size))
        return idx

    def values(self, pts) -> np.ndarray:
        """Local linear interpolation from the nearest cloud points."""
        m = self.cloud.manifold
        pts = np.asarray(pts, dtype=float) if not m.is_graph else m.coords[np.asarray(pts, int)]
        idx = self._neighborhoods(pts, k=max(m.n + 4, 8))
        out = np.empty(pts.shape[0])
        for a in range(pts.shape[0]):
            nb = idx[a]
            xi = m.log_coords(tuple(pts[a]), self.cloud.coords[nb]) if not m.is_graph else None
            if xi is None:
                xi = m.base.log_coords(tuple(pts[a]), self.cloud.coords[nb])
            fv = self.table[nb]
            ok = np.isfinite(fv)
            if ok.sum() < m.n + 1:
                out[a] = np.nan
                continue
            Amat = np.concatenate([np.ones((ok.sum(), 1)), xi[ok]], axis=1)
            sol, *_ = np.linalg.lstsq(Amat, fv[ok], rcond=None)
            out[a] = sol[0]
        return out

    def value(self, x) -> float:
        if self.cloud.manifold.is_graph:
            pos = np.flatnonzero(self.cloud.ids == int(x))
            if pos.size:
                return float(self.table[pos[0]])
        return float(self.values(self.cloud.manifold.as_array([x] if not self.cloud.manifold.is_graph else [x]))[0])

    def gradient_many(self, pts, fit_radius: float | None = None):
        """Least-squares gradient fits at query points; returns (grads, valid)."""
        m = self.cloud.manifold
        coords = (
            np.asarray(pts, dtype=float)
            if not m.is_graph
            else m.coords[np.asarray(pts, int)]
        )
        r = fit_radius if fit_radius else 1.5 * self.cloud.h
        emb = self.cloud._embed_analytic(coords) if not m.is_graph else m._embed(coords)
        neighborhoods = self._tree.query_ball_point(emb, r)
        grads = np.full((coords.shape[0], m.n), np.nan)
        valid = np.zeros(coords.shape[0], dtype=bool)
        for a, nb in enumerate(neighborhoods):
            nb = np.asarray(nb, dtype=int)
            if nb.size < m.n + 2:
                continue
            if m.is_graph:
                xi = m.base.log_coords(tuple(coords[a]), self.cloud.coords[nb])
            else:
                xi = m.log_coords(tuple(coords[a]), self.cloud.coords[nb])
            fv = self.table[nb]
            ok = np.isfinite(fv)
            if ok.sum() < m.n + 2:
                continue
            Amat = np.concatenate([np.ones((int(ok.sum()), 1)), xi[ok]], axis=1)
            sol, _, rank, _ = np.linalg.lstsq(Amat, fv[ok], rcond=None)
            if rank < Amat.shape[1]:
                continue
            grads[a] = sol[1:]
            valid[a] = True
        return grads, valid
