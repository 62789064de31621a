"""Projections to distance spheres and the almost Gou-Gu machinery.

pi(x) extends the segment q -> x to the sphere of target radius around q
(or walks back to it when x lies beyond).  The bad set collects points
where that extension fails: non-unique segments or non-minimizing
extensions.  On top of the projections sit the Gou-Gu defect, the measure
of the bad set, the Cheeger-Colding segment inequality check, and the
integral-controlled point sets Q/T with their complements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._seeds import substream
from .fields import Ball, ScalarField, line_integral_ex, mean_integral
from .manifold import GeometryError

QUALIFYING = "ok"


@dataclass(frozen=True)
class Projection:
    source: tuple | int
    base: tuple | int
    target_radius: float
    point: tuple | int | None
    well_defined: bool
    reason: str = ""


def project(m, q, target_radius: float, x) -> Projection:
    """pi(x) on the sphere of `target_radius` around q, with definedness flag."""
    ext = m.extend_ray(q, x, target_radius)
    return Projection(
        source=x,
        base=q,
        target_radius=target_radius,
        point=ext.point,
        well_defined=ext.well_defined,
        reason=ext.reason,
    )


def project_batch(m, q, target_radius: float, pts):
    """Vectorized projections; returns (points_or_ids, well_defined mask)."""
    if m.is_graph:
        ids = np.asarray(pts, dtype=int)
        out = np.full(ids.size, -1, dtype=int)
        ok = np.zeros(ids.size, dtype=bool)
        for a, i in enumerate(ids):
            if int(i) == int(q):
                continue
            ext = m.extend_ray(q, int(i), target_radius)
            if ext.point is not None:
                out[a] = ext.point
            ok[a] = ext.well_defined
        return out, ok
    arr = m.as_array(pts)
    return m.extend_rays(q, arr, target_radius)


@dataclass(frozen=True)
class GouguDefect:
    defect: float | None
    defined: bool
    radial_part: float = math.nan
    sphere_part: float = math.nan


def gougu_defect(m, q, target_radius: float, x, y) -> GouguDefect:
    """| d(x,y)^2 - (rho(x)-rho(y))^2 - d(pi(x),pi(y))^2 |, or undefined."""
    px = project(m, q, target_radius, x)
    py = project(m, q, target_radius, y)
    if not (px.well_defined and py.well_defined):
        return GouguDefect(None, False)
    if (x == y) if not m.is_graph else (int(x) == int(y)):
        return GouguDefect(0.0, True, 0.0, 0.0)
    rx = m.distance(q, x)
    ry = m.distance(q, y)
    dpp = m.distance(px.point, py.point)
    dxy = m.distance(x, y)
    defect = abs(dxy**2 - (rx - ry) ** 2 - dpp**2)
    return GouguDefect(defect, True, (rx - ry) ** 2, dpp**2)


def gougu_defects_batch(m, q, target_radius: float, X, Y):
    """Defects for aligned point batches; NaN rows where a projection fails."""
    px, okx = project_batch(m, q, target_radius, X)
    py, oky = project_batch(m, q, target_radius, Y)
    ok = okx & oky
    if m.is_graph:
        X = np.asarray(X, int)
        Y = np.asarray(Y, int)
        rx = m.distances_from(q, X)
        ry = m.distances_from(q, Y)

        def group_dist(src_ids, dst_ids):
            # one Dijkstra per distinct source
            out = np.full(src_ids.size, np.nan)
            for src in np.unique(src_ids[ok]):
                sel = ok & (src_ids == src)
                out[sel] = m.distances_from(int(src), dst_ids[sel])
            return out

        dxy = group_dist(X, Y)
        dpp = group_dist(np.where(ok, px, 0).astype(int), np.where(ok, py, 0).astype(int))
        out = np.abs(dxy**2 - (rx - ry) ** 2 - dpp**2)
        out[~ok] = np.nan
        return out, ok
    X = m.as_array(X)
    Y = m.as_array(Y)
    rx = m.distances_from(q, X)
    ry = m.distances_from(q, Y)
    dxy = m.pair_distances(X, Y)
    dpp = m.pair_distances(px, py)
    out = np.abs(dxy**2 - (rx - ry) ** 2 - dpp**2)
    out[~ok] = np.nan
    return out, ok


@dataclass
class BadSetMeasure:
    fraction: float
    bad_count: int
    total: int
    reasons: dict


def bad_set_measure(m, q, target_radius: float, ball: Ball, count: int = 4000, tag: str = "bad-set") -> BadSetMeasure:
    """Volume fraction of the ball whose projection to the target sphere fails."""
    if m.is_graph:
        pts = m.points_in_ball(ball.center, ball.radius)
        if pts.size == 0:
            raise GeometryError("empty ball")
    else:
        pts = m.sample_ball(ball.center, ball.radius, count, tag=tag)
    reasons: dict[str, int] = {}
    if m.is_graph:
        bad = 0
        for i in pts:
            if int(i) == int(q):
                continue
            ext = m.extend_ray(q, int(i), target_radius)
            if not ext.well_defined:
                bad += 1
                reasons[ext.reason] = reasons.get(ext.reason, 0) + 1
        total = int(pts.size)
    else:
        _, ok = m.extend_rays(q, pts, target_radius)
        bad = int(np.count_nonzero(~ok))
        total = int(pts.shape[0])
        if bad:
            reasons["not-minimizing"] = bad
    return BadSetMeasure(fraction=bad / total, bad_count=bad, total=total, reasons=reasons)


@dataclass
class SegmentInequalityResult:
    lhs: float
    rhs: float
    ratio: float
    pair_count: int
    mean_segment_integral: float


def segment_inequality_check(
    m,
    ball: Ball,
    h: ScalarField,
    pair_count: int = 4000,
    seed: int = 0,
    nodes: int = 33,
) -> SegmentInequalityResult:
    """Monte-Carlo check of the segment inequality on B_r(q).

    lhs estimates the double integral of the segment integrals of h over
    pairs in the ball; rhs is 2^{n+1} r V(B_r) * integral of h over B_{2r}.
    """
    q, r = ball.center, ball.radius
    if m.is_graph:
        idx = m.points_in_ball(q, r)
        rng = substream(seed, "segment-ineq")
        y1 = rng.choice(idx, size=pair_count, replace=True)
        y2 = rng.choice(idx, size=pair_count, replace=True)
        vals = []
        for a, b in zip(y1, y2):
            if int(a) == int(b):
                vals.append(0.0)
                continue
            res = line_integral_ex(h, int(a), int(b))
            vals.append(res.value)
        vals = np.asarray(vals)
    else:
        y1 = m.sample_ball(q, r, pair_count, tag=f"seg-ineq-a-{seed}")
        y2 = m.sample_ball(q, r, pair_count, tag=f"seg-ineq-b-{seed}")
        pts = m.segment_points_batch(y1, y2, nodes)
        hv = h.values(pts.reshape(-1, pts.shape[-1])).reshape(pair_count, nodes)
        if np.nanmin(hv) < -1e-12:
            raise GeometryError("segment inequality needs a nonnegative field")
        hv = np.where(np.isfinite(hv), hv, 0.0)
        L = m.pair_distances(y1, y2)
        w = np.full(nodes, 1.0 / (nodes - 1))
        w[0] = w[-1] = 0.5 / (nodes - 1)
        vals = (hv @ w) * L
    vol = m.ball_volume(q, r).volume
    lhs = vol**2 * float(np.mean(vals))
    big = mean_integral(h, Ball(q, 2.0 * r), count=max(10000, pair_count), tag=f"seg-ineq-rhs-{seed}")
    rhs = 2.0 ** (m.n + 1) * r * vol * big.value * m.ball_volume(q, 2.0 * r).volume
    return SegmentInequalityResult(
        lhs=lhs,
        rhs=rhs,
        ratio=lhs / rhs if rhs > 0 else math.inf,
        pair_count=pair_count,
        mean_segment_integral=float(np.mean(vals)),
    )


@dataclass
class ControlledSets:
    """Membership masks over a sample of B_{r_q}(p) for one control field."""

    sample: object
    q: object
    target_radius: float
    r_q: float
    eta: float
    bad_mask: np.ndarray
    q_integrals: np.ndarray
    t_integrals: np.ndarray
    q_mask: np.ndarray = field(default=None)
    qcheck_mask: np.ndarray = field(default=None)
    t_mask: np.ndarray = field(default=None)
    tcheck_mask: np.ndarray = field(default=None)
    measures: dict = field(default_factory=dict)

    def finalize(self) -> None:
        good = ~self.bad_mask
        qi = self.q_integrals
        ti = self.t_integrals
        thr = self.eta * self.r_q**2
        self.q_mask = good & (qi <= thr)
        self.qcheck_mask = good & (qi > thr)
        self.t_mask = good & (ti <= thr)
        self.tcheck_mask = good & (ti > thr)
        total = max(len(self.bad_mask), 1)
        self.measures = {
            "bad": float(np.mean(self.bad_mask)),
            "Q": float(np.count_nonzero(self.q_mask)) / total,
            "Q_check": float(np.count_nonzero(self.qcheck_mask)) / total,
            "T": float(np.count_nonzero(self.t_mask)) / total,
            "T_check": float(np.count_nonzero(self.tcheck_mask)) / total,
        }


def sigma_integrals(
    m,
    q,
    target_radius: float,
    pts,
    proj_pts,
    ok,
    h: ScalarField,
    nodes: int = 17,
):
    """Line integrals of h along sigma_x (from pi(x) to x), vectorized.

    Zero-length sigmas (x on the target sphere) integrate to zero.
    """
    k = len(pts) if not m.is_graph else np.asarray(pts).size
    out = np.zeros(k)
    if m.is_graph:
        pts = np.asarray(pts, int)
        for a in range(k):
            if not ok[a]:
                continue
            if int(proj_pts[a]) == int(pts[a]):
                continue
            out[a] = line_integral_ex(h, int(proj_pts[a]), int(pts[a])).value
        return out
    X = m.as_array(pts)
    P = np.asarray(proj_pts)
    L = np.where(ok, m.pair_distances(P, X), 0.0)
    nz = ok & (L > 1e-300)
    if np.any(nz):
        seg = m.segment_points_batch(P[nz], X[nz], nodes)
        hv = h.values(seg.reshape(-1, seg.shape[-1])).reshape(-1, nodes)
        hv = np.where(np.isfinite(hv), hv, 0.0)
        w = np.full(nodes, 1.0 / (nodes - 1))
        w[0] = w[-1] = 0.5 / (nodes - 1)
        out[nz] = (hv @ w) * L[nz]
    return out


def pair_transport_integrals(
    m,
    pts_x,
    proj_x,
    pts_y,
    proj_y,
    h: ScalarField,
    outer_nodes: int = 9,
    inner_nodes: int = 9,
    chunk: int = 200000,
):
    """Double integrals int_0^{L_x} ( int_{gamma(sigma_x(s), sigma_y~(s))} h ) ds.

    Inputs are aligned anchor/partner batches with their projections; the
    relative-velocity reparameterization makes the uniform fractional nodes
    of both sigma polylines correspond.
    """
    X = m.as_array(pts_x)
    Y = m.as_array(pts_y)
    PX = np.asarray(proj_x)
    PY = np.asarray(proj_y)
    k = X.shape[0]
    Lx = m.pair_distances(PX, X)
    sx = m.segment_points_batch(PX, X, outer_nodes)
    sy = m.segment_points_batch(PY, Y, outer_nodes)
    a = sx.reshape(-1, sx.shape[-1])
    b = sy.reshape(-1, sy.shape[-1])
    inner = np.empty(a.shape[0])
    for lo in range(0, a.shape[0], chunk):
        hi = min(lo + chunk, a.shape[0])
        seg = m.segment_points_batch(a[lo:hi], b[lo:hi], inner_nodes)
        hv = h.values(seg.reshape(-1, seg.shape[-1])).reshape(-1, inner_nodes)
        hv = np.where(np.isfinite(hv), hv, 0.0)
        w = np.full(inner_nodes, 1.0 / (inner_nodes - 1))
        w[0] = w[-1] = 0.5 / (inner_nodes - 1)
        inner[lo:hi] = (hv @ w) * m.pair_distances(a[lo:hi], b[lo:hi])
    inner = inner.reshape(k, outer_nodes)
    wout = np.full(outer_nodes, 1.0 / (outer_nodes - 1))
    wout[0] = wout[-1] = 0.5 / (outer_nodes - 1)
    return (inner @ wout) * Lx


def classify_controlled_points(
    m,
    p,
    q,
    h: ScalarField,
    eta: float,
    target_radius: float | None = None,
    r_q: float | None = None,
    sample=None,
    count: int = 2000,
    partner_budget: int = 16,
    seed: int = 0,
    tag: str = "controlled",
    outer_nodes: int = 9,
    inner_nodes: int = 9,
) -> ControlledSets:
    """Q/T classification of sample points of B_{r_q}(p) for the field h.

    target_radius defaults to d(p, q) and r_q to target_radius / beta-free
    d(p,q) scaling is the caller's business: pass r_q explicitly for
    normalized thresholds.
    """
    if target_radius is None:
        target_radius = m.distance(p, q)
    if r_q is None:
        raise GeometryError("classify_controlled_points needs the scale r_q")
    if m.is_graph:
        pts = sample if sample is not None else m.points_in_ball(p, r_q)
    else:
        pts = sample if sample is not None else m.sample_ball(p, r_q, count, tag=tag)
    proj, ok = project_batch(m, q, target_radius, pts)
    bad = ~ok

    q_int = sigma_integrals(m, q, target_radius, pts, proj, ok, h)

    k = len(bad)
    rng = substream(seed, f"{tag}-partners")
    good_idx = np.flatnonzero(ok)
    t_int = np.full(k, np.inf)
    if good_idx.size >= 2:
        budget = min(partner_budget, good_idx.size)
        if m.is_graph:
            t_acc = np.zeros(k)
            partners = rng.choice(good_idx, size=(k, budget))
            pts_arr = np.asarray(pts, int)
            for a in range(k):
                if bad[a]:
                    continue
                tot = 0.0
                for b in partners[a]:
                    tot += _pair_transport_graph(
                        m, int(pts_arr[a]), int(proj[a]), int(pts_arr[b]), int(proj[b]), h
                    )
                t_acc[a] = tot / budget
            t_int = np.where(bad, np.inf, t_acc)
        else:
            partners = rng.choice(good_idx, size=(int(good_idx.size), budget))
            X = m.as_array(pts)[good_idx]
            PX = np.asarray(proj)[good_idx]
            flat_partner = partners.reshape(-1)
            Xp = m.as_array(pts)[flat_partner]
            PP = np.asarray(proj)[flat_partner]
            anchors_rep = np.repeat(np.arange(good_idx.size), budget)
            vals = pair_transport_integrals(
                m,
                X[anchors_rep],
                PX[anchors_rep],
                Xp,
                PP,
                h,
                outer_nodes=outer_nodes,
                inner_nodes=inner_nodes,
            )
            mean_vals = vals.reshape(good_idx.size, budget).mean(axis=1)
            t_full = np.full(k, np.inf)
            bad_frac = float(np.mean(bad))
            t_full[good_idx] = mean_vals * (1.0 - bad_frac)
            t_int = t_full

    cs = ControlledSets(
        sample=pts,
        q=q,
        target_radius=target_radius,
        r_q=r_q,
        eta=eta,
        bad_mask=bad,
        q_integrals=q_int,
        t_integrals=t_int,
    )
    cs.finalize()
    return cs


def _pair_transport_graph(m, x, px, y, py, h: ScalarField, outer_nodes: int = 7) -> float:
    """Graph version of the double transport integral via path waypoints."""
    if px == x or py == y:
        return 0.0
    seg_x = m.segment(px, x)
    seg_y = m.segment(py, y)
    Lx = seg_x.length
    wx = list(seg_x.waypoints)
    wy = list(seg_y.waypoints)

    def at_fraction(w, frac):
        return w[min(int(round(frac * (len(w) - 1))), len(w) - 1)]

    total = 0.0
    for j in range(outer_nodes):
        frac = j / (outer_nodes - 1)
        a = at_fraction(wx, frac)
        b = at_fraction(wy, frac)
        if a == b:
            continue
        weight = 0.5 if j in (0, outer_nodes - 1) else 1.0
        total += weight * line_integral_ex(h, a, b).value
    return total * Lx / (outer_nodes - 1)
