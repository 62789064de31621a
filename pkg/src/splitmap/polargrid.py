"""Polar-grid Laplace solver for analytic backends.

Around the scenario center every analytic backend is a surface of
revolution: the metric reads dr^2 + A(r)^2 dphi^2 with A(r) = r on the
plane, A(r) = r with angular period theta on the cone (apex-centered), and
A(r) = R sin(r/R) on the round sphere.  The finite-volume Laplacian on an
(r, phi) lattice is stochastic-noise free, so harmonic replacements keep
their gradient structure at the 1e-4 discretization level instead of the
percent-level roughness of random-cloud solves.

Off-center cone charts (balls avoiding the apex) are handled by developing
the ball to a flat disk first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import LinearOperator, cg

from .fields import AnalyticField, Ball
from .manifold import GeometryError
from .pointcloud import SolveStats


@dataclass
class PolarChart:
    """Surface-of-revolution coordinates (r, phi) around a center point."""

    manifold: object
    center: object
    period: float

    def to_polar(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        m = self.manifold
        kind = m.kind
        if kind == "cone" and float(self.center[0]) < 1e-12:
            return pts[:, 0].copy(), pts[:, 1].copy()
        if kind == "euclidean" and m.n == 2:
            rel = pts - np.asarray(self.center, dtype=float)
            return np.linalg.norm(rel, axis=1), np.arctan2(rel[:, 1], rel[:, 0]) % (2 * math.pi)
        if kind == "cone":
            # ball away from the apex: develop around the center angle
            psi = m._reduce(pts[:, 1] - self.center[1])
            zx = pts[:, 0] * np.cos(psi) - float(self.center[0])
            zy = pts[:, 0] * np.sin(psi)
            return np.hypot(zx, zy), np.arctan2(zy, zx) % (2 * math.pi)
        if kind == "sphere-cap":
            r = m.distances_from(self.center, pts)
            xi = m.log_coords(self.center, pts)
            return r, np.arctan2(xi[:, 1], xi[:, 0]) % (2 * math.pi)
        raise GeometryError(f"no polar chart for backend {kind!r}")

    def area_coeff(self, r: np.ndarray) -> np.ndarray:
        m = self.manifold
        if m.kind == "sphere-cap":
            return m.radius * np.sin(r / m.radius)
        return np.asarray(r, dtype=float)


def make_chart(m, center) -> PolarChart:
    if m.n != 2:
        raise GeometryError("polar grid solver is two-dimensional")
    period = 2.0 * math.pi
    if m.kind == "cone" and float(center[0]) < 1e-12:
        period = m.theta
    return PolarChart(manifold=m, center=center, period=period)


def solve_polar_dirichlet(
    m,
    center,
    radius: float,
    boundary_fn,
    rhs_value: float = 0.0,
    nr: int = 96,
    nphi: int = 128,
    rtol: float = 1e-8,
):
    """Solve Laplace(u) = rhs on B_radius(center) with Dirichlet data.

    boundary_fn maps coordinate stacks to values; it is evaluated on the
    outer grid ring.  Returns an AnalyticField-compatible spline field with
    solver stats attached.
    """
    chart = make_chart(m, center)
    if m.kind == "cone" and float(center[0]) >= 1e-12 and float(center[0]) < radius:
        raise GeometryError("off-apex cone chart must not contain the apex")
    dr = radius / (nr + 0.5)
    rs = (np.arange(nr + 1) + 0.5) * dr  # cell centers; last ring is Dirichlet
    dphi = chart.period / nphi
    phis = np.arange(nphi) * dphi
    A = chart.area_coeff(rs)
    A_half = chart.area_coeff(np.arange(nr + 2) * dr)  # faces at i*dr

    def index(i, j):
        return i * nphi + (j % nphi)

    ni = nr * nphi  # interior unknowns (rings 0..nr-1); ring nr is boundary
    rows, cols, vals = [], [], []
    rhs = np.full(ni, rhs_value, dtype=float)

    # boundary ring values
    bpts = _ring_points(chart, rs[nr], phis)
    ub = np.asarray(boundary_fn(bpts), dtype=float)

    # rows are scaled by the cell measure A_i so the flux matrix is symmetric
    for i in range(nr):
        a_in = A_half[i]  # face at r = i*dr (0 at the center: no inner flux)
        a_out = A_half[i + 1]
        for j in range(nphi):
            k = index(i, j)
            diag = 0.0
            c_out = a_out / (dr * dr)
            if i + 1 <= nr - 1:
                rows.append(k)
                cols.append(index(i + 1, j))
                vals.append(c_out)
            else:
                rhs[k] = rhs[k] * A[i] - c_out * ub[j]
            diag -= c_out
            if i >= 1:
                c_in = a_in / (dr * dr)
                rows.append(k)
                cols.append(index(i - 1, j))
                vals.append(c_in)
                diag -= c_in
            c_ang = 1.0 / (A[i] * dphi * dphi)
            for jj in (j - 1, j + 1):
                rows.append(k)
                cols.append(index(i, jj))
                vals.append(c_ang)
            diag -= 2.0 * c_ang
            rows.append(k)
            cols.append(k)
            vals.append(diag)
            if i + 1 <= nr - 1:
                rhs[k] = rhs[k] * A[i]

    L = csr_matrix((vals, (rows, cols)), shape=(ni, ni))
    # positive definite form: -L u = -rhs
    diag = -L.diagonal()
    op = LinearOperator((ni, ni), matvec=lambda v: -(L @ v))
    M = LinearOperator((ni, ni), matvec=lambda v: v / diag)
    iters = 0

    def cb(_):
        nonlocal iters
        iters += 1

    x0 = np.tile(ub, nr)
    sol, info = cg(op, -rhs, x0=x0, rtol=rtol, maxiter=int(50 * math.sqrt(ni)) + 10, M=M, callback=cb)
    res = float(np.linalg.norm(-(L @ sol) + rhs) / max(np.linalg.norm(rhs), 1e-300))
    stats = SolveStats(iterations=iters, residual=res, converged=(info == 0), unknowns=ni)
    if info != 0:
        raise GeometryError(f"polar-grid CG failed (residual {res:.2e})")

    grid = np.concatenate([sol.reshape(nr, nphi), ub[None, :]], axis=0)
    # periodic padding in phi for a smooth interpolant
    pad = 3
    phis_ext = np.concatenate([phis[-pad:] - chart.period, phis, phis[:pad] + chart.period])
    grid_ext = np.concatenate([grid[:, -pad:], grid, grid[:, :pad]], axis=1)
    spline = RectBivariateSpline(rs, phis_ext, grid_ext, kx=3, ky=3)

    center_value = float(np.mean(sol[:nphi]))

    def fn(pts):
        r, ph = chart.to_polar(m.as_array(pts))
        r = np.clip(r, rs[0], rs[-1])
        out = spline.ev(r, ph)
        return out

    field = AnalyticField(m, fn, "harmonic", Ball(center, radius))
    field.solver_stats = stats
    field.grid_shape = (nr + 1, nphi)
    field.center_value = center_value
    field.boundary_values = ub
    return field


def _ring_points(chart: PolarChart, r: float, phis: np.ndarray) -> np.ndarray:
    m = chart.manifold
    kind = m.kind
    if kind == "cone" and float(chart.center[0]) < 1e-12:
        return np.stack([np.full(phis.size, r), phis], axis=1)
    if kind == "euclidean" and m.n == 2:
        c = np.asarray(chart.center, dtype=float)
        return np.stack([c[0] + r * np.cos(phis), c[1] + r * np.sin(phis)], axis=1)
    if kind == "cone":
        zx = float(chart.center[0]) + r * np.cos(phis)
        zy = r * np.sin(phis)
        s = np.hypot(zx, zy)
        ang = (chart.center[1] + np.arctan2(zy, zx)) % m.theta
        return np.stack([s, ang], axis=1)
    # sphere: exponential map in the frame at the center
    coeffs = np.stack([r * np.cos(phis), r * np.sin(phis)], axis=1)
    return m.flow_many(np.repeat(m.as_array([chart.center]), phis.size, axis=0), coeffs)
