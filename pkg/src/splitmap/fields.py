"""Scalar fields on a manifold with derivative and integral estimation.

Analytic backends probe derivatives by central finite differences in normal
coordinates (stencil points placed with the exponential map); the graph
backend fits local linear/quadratic models over neighbors.  Probes near a
cut locus or outside a field's region are declared invalid and excluded
from integrals, with the excluded mass reported rather than hidden.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .manifold import GeometryError, Manifold


@dataclass(frozen=True)
class Ball:
    """A metric ball region on a manifold."""

    center: tuple | int
    radius: float


class ScalarField:
    """Common interface: values at points, definedness, owning manifold."""

    manifold: Manifold
    label: str
    region: Ball

    def values(self, pts) -> np.ndarray:
        raise NotImplementedError

    def value(self, x) -> float:
        raise NotImplementedError


class AnalyticField(ScalarField):
    """Field on an analytic backend given by a vectorized coordinate function.

    `cut_bases` lists points whose cut loci make the field non-smooth (the
    distance-field base q, typically); derivative probes too close to one of
    those loci are invalidated.
    """

    def __init__(self, manifold, fn, label: str, region: Ball, cut_bases=()):
        self.manifold = manifold
        self.fn = fn
        self.label = label
        self.region = region
        self.cut_bases = tuple(cut_bases)

    def defined_mask(self, pts: np.ndarray) -> np.ndarray:
        d = self.manifold.distances_from(self.region.center, pts)
        return d <= self.region.radius * (1.0 + 1e-12)

    def values(self, pts) -> np.ndarray:
        pts = self.manifold.as_array(pts)
        out = np.asarray(self.fn(pts), dtype=float)
        out = np.where(self.defined_mask(pts), out, np.nan)
        return out

    def value(self, x) -> float:
        return float(self.values(self.manifold.as_array([x]))[0])

    def cut_margin(self, pts: np.ndarray) -> np.ndarray:
        m = np.full(pts.shape[0], np.inf)
        for q in self.cut_bases:
            m = np.minimum(m, self.manifold.cut_margins(q, pts))
        return m


class GraphField(ScalarField):
    """Field on the graph backend: one value per vertex (NaN = undefined)."""

    def __init__(self, manifold, table: np.ndarray, label: str, region: Ball):
        self.manifold = manifold
        self.table = np.asarray(table, dtype=float)
        self.label = label
        self.region = region

    def values(self, pts) -> np.ndarray:
        idx = np.asarray(pts, dtype=int)
        return self.table[idx]

    def value(self, x) -> float:
        return float(self.table[int(x)])


def distance_field(m, q, region: Ball, squared: bool = False, label: str | None = None) -> ScalarField:
    """rho(x) = d(q, x), or rho^2."""
    if label is None:
        label = "rho^2" if squared else "rho"
    if m.is_graph:
        d = m.distances_from(q, np.arange(m.vertex_count()))
        return GraphField(m, d**2 if squared else d, label, region)

    def fn(pts):
        d = m.distances_from(q, pts)
        return d**2 if squared else d

    return AnalyticField(m, fn, label, region, cut_bases=(q,))


class _CombinedGraphField(ScalarField):
    def __init__(self, a, b, op, label, region):
        self.manifold = a.manifold
        self.a, self.b, self.op = a, b, op
        self.label = label
        self.region = region

    def values(self, pts) -> np.ndarray:
        return self.op(self.a.values(pts), self.b.values(pts))

    def value(self, x) -> float:
        return float(self.values([int(x)])[0])


def combine(a: ScalarField, b: ScalarField, op, label: str) -> ScalarField:
    """Pointwise combination of two fields on the same manifold."""
    if a.manifold is not b.manifold:
        raise GeometryError("fields live on different manifolds")
    region = a.region if a.region.radius <= b.region.radius else b.region
    if a.manifold.is_graph:
        if isinstance(a, GraphField) and isinstance(b, GraphField):
            return GraphField(a.manifold, op(a.table, b.table), label, region)
        return _CombinedGraphField(a, b, op, label, region)
    bases = tuple(getattr(a, "cut_bases", ())) + tuple(getattr(b, "cut_bases", ()))
    return AnalyticField(
        a.manifold, lambda pts: op(a.fn(pts), b.fn(pts)), label, region, cut_bases=bases
    )


def default_stencil(m) -> float:
    return 1e-4 * m.domain_radius


@dataclass
class FieldProbe:
    """Derivative estimates at one point."""

    gradient: np.ndarray | None
    gradient_norm: float
    hess_dev: float
    valid: bool
    reason: str = ""


# --------------------------------------------------------------------------
# analytic stencils


def _stencil_offsets(n: int, h: float, want_hessian: bool) -> np.ndarray:
    rows = [np.zeros(n)]
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        rows.append(e)
        rows.append(-e)
    if want_hessian:
        for i in range(n):
            for j in range(i + 1, n):
                for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    e = np.zeros(n)
                    e[i] = si * h
                    e[j] = sj * h
                    rows.append(e)
    return np.array(rows)


def probe_many(
    field: ScalarField,
    pts,
    stencil: float | None = None,
    want_hessian: bool = False,
    deviation_target: float = 2.0,
    fit_radius: float | None = None,
):
    """Gradient (and Hessian-deviation) estimates at a batch of points.

    Returns (gradients, gradient_norms, hess_devs, valid_mask).  Entries for
    invalid probes are NaN.  `fit_radius` widens the graph-backend fit
    neighborhood beyond the adjacency (noise smoothing for Hessians of
    discrete solves).
    """
    m = field.manifold
    if m.is_graph:
        return _probe_many_graph(field, pts, want_hessian, deviation_target, fit_radius)
    return _probe_many_analytic(field, pts, stencil, want_hessian, deviation_target)


def _probe_many_analytic(field, pts, stencil, want_hessian, deviation_target):
    m = field.manifold
    n = m.n
    h = stencil if stencil else default_stencil(m)
    pts = m.as_array(pts)
    k = pts.shape[0]
    offs = _stencil_offsets(n, h, want_hessian)
    s = offs.shape[0]
    bases = np.repeat(pts, s, axis=0)
    coeffs = np.tile(offs, (k, 1))
    stencil_pts = m.flow_many(bases, coeffs)
    vals = field.values(stencil_pts).reshape(k, s)

    margin_ok = field.cut_margin(pts) > 3.0 * h if isinstance(field, AnalyticField) else np.ones(k, bool)
    finite_ok = np.all(np.isfinite(vals), axis=1)
    valid = margin_ok & finite_ok

    grads = np.full((k, n), np.nan)
    for i in range(n):
        plus = vals[:, 1 + 2 * i]
        minus = vals[:, 2 + 2 * i]
        grads[:, i] = (plus - minus) / (2.0 * h)
    gnorm = np.linalg.norm(grads, axis=1)

    hdev = np.full(k, np.nan)
    if want_hessian:
        H = np.zeros((k, n, n))
        for i in range(n):
            plus = vals[:, 1 + 2 * i]
            minus = vals[:, 2 + 2 * i]
            H[:, i, i] = (plus - 2.0 * vals[:, 0] + minus) / (h * h)
        base = 1 + 2 * n
        idx = 0
        for i in range(n):
            for j in range(i + 1, n):
                pp = vals[:, base + 4 * idx]
                pmn = vals[:, base + 4 * idx + 1]
                mp = vals[:, base + 4 * idx + 2]
                mm = vals[:, base + 4 * idx + 3]
                H[:, i, j] = H[:, j, i] = (pp - pmn - mp + mm) / (4.0 * h * h)
                idx += 1
        D = H - deviation_target * np.eye(n)[None, :, :]
        hdev = np.sqrt(np.sum(D * D, axis=(1, 2)))

    grads[~valid] = np.nan
    gnorm = np.where(valid, gnorm, np.nan)
    if want_hessian:
        hdev = np.where(valid, hdev, np.nan)
    return grads, gnorm, hdev, valid


def _probe_many_graph(field, pts, want_hessian, deviation_target, fit_radius=None):
    m = field.manifold
    n = m.n
    idx = np.asarray(pts, dtype=int)
    k = idx.size
    grads = np.full((k, n), np.nan)
    gnorm = np.full(k, np.nan)
    hdev = np.full(k, np.nan)
    valid = np.zeros(k, dtype=bool)
    nquad = 1 + n + n * (n + 1) // 2
    for a, v in enumerate(idx):
        nbrs = m.vertices_within(int(v), fit_radius) if fit_radius else m.neighbors(int(v))
        if nbrs.size < (nquad if want_hessian else n + 1):
            continue
        xi = m.log_coords(int(v), nbrs)
        fv = field.table[nbrs]
        f0 = field.table[int(v)]
        ok = np.isfinite(fv)
        if np.isnan(f0) or ok.sum() < (nquad if want_hessian else n + 1):
            continue
        xi, fv = xi[ok], fv[ok]
        if want_hessian:
            cols = [np.ones(xi.shape[0])] + [xi[:, i] for i in range(n)]
            for i in range(n):
                for j in range(i, n):
                    fac = 0.5 if i == j else 1.0
                    cols.append(fac * xi[:, i] * xi[:, j])
            A = np.stack(cols, axis=1)
        else:
            A = np.concatenate([np.ones((xi.shape[0], 1)), xi], axis=1)
        sol, _, rank, _ = np.linalg.lstsq(A, fv - f0, rcond=None)
        if rank < A.shape[1]:
            continue
        g = sol[1 : 1 + n]
        grads[a] = g
        gnorm[a] = float(np.linalg.norm(g))
        valid[a] = True
        if want_hessian:
            H = np.zeros((n, n))
            c = 1 + n
            for i in range(n):
                for j in range(i, n):
                    H[i, j] = H[j, i] = sol[c]
                    c += 1
            D = H - deviation_target * np.eye(n)
            hdev[a] = float(np.sqrt(np.sum(D * D)))
    return grads, gnorm, hdev, valid


def probe(field: ScalarField, x, stencil: float | None = None, deviation_target: float = 2.0) -> FieldProbe:
    """Full derivative probe at a single point."""
    pts = [x] if not field.manifold.is_graph else [int(x)]
    g, gn, hd, v = probe_many(field, pts, stencil, want_hessian=True, deviation_target=deviation_target)
    if not v[0]:
        return FieldProbe(None, math.nan, math.nan, False, "invalid probe (boundary, cut locus, or rank)")
    return FieldProbe(g[0], float(gn[0]), float(hd[0]), True)


def gradient(field: ScalarField, x, stencil: float | None = None) -> FieldProbe:
    """Gradient estimate at one point; raises on invalid probes."""
    pts = [x] if not field.manifold.is_graph else [int(x)]
    g, gn, _, v = probe_many(field, pts, stencil, want_hessian=False)
    if not v[0]:
        raise GeometryError("gradient probe invalid (boundary point or degenerate fit)")
    return FieldProbe(g[0], float(gn[0]), math.nan, True)


def hessian_deviation(field: ScalarField, x, stencil: float | None = None, deviation_target: float = 2.0) -> float:
    """|Hess(field) - target*g|_F at one point; raises on invalid probes."""
    p = probe(field, x, stencil, deviation_target)
    if not p.valid:
        raise GeometryError("hessian probe invalid (boundary point or degenerate fit)")
    return p.hess_dev


class _LazyGraphProbeField(ScalarField):
    """Graph probe field computed on demand and cached per vertex."""

    def __init__(self, base: ScalarField, label: str, which: str, deviation_target: float, fit_radius: float | None):
        self.manifold = base.manifold
        self.base = base
        self.label = label
        self.region = base.region
        self.which = which
        self.deviation_target = deviation_target
        self.fit_radius = fit_radius
        self.table = np.full(self.manifold.vertex_count(), np.nan)
        self._done = np.zeros(self.manifold.vertex_count(), dtype=bool)

    def values(self, pts) -> np.ndarray:
        idx = np.asarray(pts, dtype=int)
        todo = idx[~self._done[idx]]
        todo = np.unique(todo)
        if todo.size:
            _, gn, hd, _ = probe_many(
                self.base,
                todo,
                want_hessian=(self.which == "hess"),
                deviation_target=self.deviation_target,
                fit_radius=self.fit_radius,
            )
            self.table[todo] = hd if self.which == "hess" else gn
            self._done[todo] = True
        return self.table[idx]

    def value(self, x) -> float:
        return float(self.values([int(x)])[0])


def gradient_norm_field(
    field: ScalarField,
    stencil: float | None = None,
    label: str | None = None,
    fit_radius: float | None = None,
) -> ScalarField:
    """|grad field| as a field; invalid probes evaluate to NaN."""
    lbl = label or f"|grad {field.label}|"
    m = field.manifold
    if m.is_graph:
        return _LazyGraphProbeField(field, lbl, "grad", 2.0, fit_radius)

    def fn(pts):
        _, gn, _, _ = _probe_many_analytic(field, pts, stencil, False, 2.0)
        return gn

    out = AnalyticField(m, fn, lbl, field.region, cut_bases=getattr(field, "cut_bases", ()))
    return out


def hessian_deviation_field(
    field: ScalarField,
    stencil: float | None = None,
    deviation_target: float = 2.0,
    label: str | None = None,
    fit_radius: float | None = None,
) -> ScalarField:
    """|Hess(field) - target*g|_F as a field; invalid probes evaluate to NaN."""
    lbl = label or f"|Hess {field.label} - {deviation_target:g}g|"
    m = field.manifold
    if m.is_graph:
        return _LazyGraphProbeField(field, lbl, "hess", deviation_target, fit_radius)

    def fn(pts):
        _, _, hd, _ = _probe_many_analytic(field, pts, stencil, True, deviation_target)
        return hd

    return AnalyticField(m, fn, lbl, field.region, cut_bases=getattr(field, "cut_bases", ()))


# --------------------------------------------------------------------------
# integrals


@dataclass
class IntegralResult:
    value: float
    excluded_fraction: float
    count: int


def line_integral(field: ScalarField, x, y, nodes: int | None = None) -> float:
    return line_integral_ex(field, x, y, nodes).value


def line_integral_ex(field: ScalarField, x, y, nodes: int | None = None) -> IntegralResult:
    """Trapezoidal line integral along the segment x -> y.

    Analytic backends resample the segment to the requested node count
    (default: waypoint spacing <= 1e-2 of the segment length); the graph
    backend walks the shortest path edge by edge.  NaN nodes contribute zero
    and are counted as excluded mass.
    """
    m = field.manifold
    if m.is_graph:
        seg = m.segment(int(x), int(y))
        path = np.asarray(seg.waypoints, dtype=int)
        vals = field.values(path)
        w = np.array([m.adjacency[path[i], path[i + 1]] for i in range(path.size - 1)])
        pair = 0.5 * (vals[:-1] + vals[1:])
        bad = ~np.isfinite(pair)
        total = float(np.sum(np.where(bad, 0.0, pair) * w))
        return IntegralResult(total, float(np.mean(bad)) if pair.size else 0.0, path.size)
    k = nodes if nodes else 101
    pts = m.segment_points(x, y, k)
    L = m.distance(x, y)
    vals = field.values(pts)
    bad = ~np.isfinite(vals)
    vals = np.where(bad, 0.0, vals)
    dt = L / (k - 1)
    weights = np.full(k, dt)
    weights[0] = weights[-1] = 0.5 * dt
    return IntegralResult(float(vals @ weights), float(np.mean(bad)), k)


def mean_integral(
    field: ScalarField,
    region: Ball | None = None,
    count: int = 10000,
    tag: str = "mean-integral",
) -> IntegralResult:
    """Volume-weighted mean of the field over a ball.

    Uses the manifold's own quadrature point set (quasi-uniform samples on
    analytic backends, all vertices on graphs); NaN values are excluded and
    their mass reported.
    """
    m = field.manifold
    reg = region or field.region
    if m.is_graph:
        idx = m.points_in_ball(reg.center, reg.radius)
        if idx.size == 0:
            raise GeometryError("empty region")
        if idx.size > count:
            from ._seeds import substream

            rng = substream(m.spec.seed, f"mean-sub-{tag}")
            idx = np.sort(rng.choice(idx, size=count, replace=False))
        vals = field.values(idx)
    else:
        pts = m.sample_ball(reg.center, reg.radius, count, tag=tag)
        vals = field.values(pts)
    bad = ~np.isfinite(vals)
    if np.all(bad):
        raise GeometryError("mean integral over fully excluded region")
    return IntegralResult(float(np.nanmean(np.where(bad, np.nan, vals))), float(np.mean(bad)), int(vals.size))
