"""Distance map, quasi-isometry statistics, AG pairs, harmonic replacement,
integral Toponogov checks, and the final splitting report.

The distance map psi(x) = (d(x, q_i) - d(p, q_i))_i uses the frame's
direction points directly (no nets).  Each component is upgraded to a
harmonic function by solving the Laplace equation with the component as
Dirichlet data on a ball around p; the report then measures the gradient
sups, the Gram-deviation integrals for both the raw and the harmonic
components, the replacement gaps, and the integral Toponogov deviations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._seeds import substream
from . import fields as field_ops
from .direction import DirectionFrame
from .manifold import GeometryError
from .pointcloud import CloudField, build_cloud, dirichlet_solve
from .polargrid import solve_polar_dirichlet


@dataclass
class SplittingConfig:
    pair_count: int = 2000
    bundle_count: int = 20000
    probe_grid: int = 1000
    cloud_points: int = 4000
    seed: int = 0
    s_fraction: float = 0.5
    ag_candidates: int = 48


@dataclass(frozen=True)
class AGTriple:
    q_plus: object
    q_minus: object
    p: object
    excess: float
    scale: float
    found: bool = True
    note: str = ""


def distance_map(frame: DirectionFrame, x) -> np.ndarray:
    """psi(x): one component per direction point."""
    m = frame.manifold
    return np.array([m.distance(x, lev.q) - lev.d for lev in frame.levels])


def distance_map_batch(frame: DirectionFrame, pts) -> np.ndarray:
    m = frame.manifold
    if m.is_graph:
        idx = np.asarray(pts, dtype=int)
        return np.stack([m.distances_from(lev.q, idx) - lev.d for lev in frame.levels], axis=1)
    arr = m.as_array(pts)
    return np.stack([m.distances_from(lev.q, arr) - lev.d for lev in frame.levels], axis=1)


@dataclass
class QuasiIsometryStats:
    min_ratio: float
    max_ratio: float
    count: int
    threshold: float
    histogram_edges: list
    histogram_counts: list


def quasi_isometry_stats(frame: DirectionFrame, pair_count: int = 2000, seed: int = 0) -> QuasiIsometryStats:
    """Distance-ratio statistics of psi over separated pairs in B_{r_{q_n}}(p)."""
    m = frame.manifold
    lev = frame.levels[-1]
    thr = frame.config.beta**-0.5 * lev.r_q
    if m.is_graph:
        ball = m.points_in_ball(frame.p, lev.r_q)
        rng = substream(seed, "quasi-pairs")
        # one Dijkstra per distinct source: draw sources from a small pool
        pool = rng.choice(ball, size=min(64, ball.size), replace=False)
        X = rng.choice(pool, size=2 * pair_count)
        Y = rng.choice(ball, size=2 * pair_count)
        d = np.empty(X.size)
        for src in np.unique(X):
            sel = X == src
            d[sel] = m.distances_from(int(src), Y[sel])
    else:
        X = m.sample_ball(frame.p, lev.r_q, 2 * pair_count, tag=f"quasi-x-{seed}")
        Y = m.sample_ball(frame.p, lev.r_q, 2 * pair_count, tag=f"quasi-y-{seed}")
        d = m.pair_distances(X, Y)
    keep = d >= thr
    if not np.any(keep):
        raise GeometryError("no admissible pairs above the separation threshold")
    X, Y, d = X[keep], Y[keep], d[keep]
    px = distance_map_batch(frame, X)
    py = distance_map_batch(frame, Y)
    ratios = np.linalg.norm(px - py, axis=1) / d
    edges = np.linspace(0.0, 2.0, 41)
    counts, _ = np.histogram(ratios, bins=edges)
    return QuasiIsometryStats(
        min_ratio=float(ratios.min()),
        max_ratio=float(ratios.max()),
        count=int(ratios.size),
        threshold=thr,
        histogram_edges=[float(e) for e in edges],
        histogram_counts=[int(c) for c in counts],
    )


def _extension_curve(m, pivot, q, tmax: int, steps: int):
    """Geodesic continuation through `pivot` away from q, as arclength samples."""
    if m.is_graph:
        # greedy forward walk away from q
        d = m._dists(int(q))
        cur = int(pivot)
        pts = [cur]
        while len(pts) < steps:
            row = m.adjacency.getrow(cur)
            nbrs, w = row.indices, row.data
            fwd = d[nbrs] > d[cur]
            if not np.any(fwd):
                break
            detour = d[cur] + w[fwd] - d[nbrs[fwd]]
            pick = int(np.flatnonzero(fwd)[np.argmin(detour)])
            cur = int(nbrs[pick])
            pts.append(cur)
        return pts
    u = m.log_coords(pivot, m.as_array([q]))[0]
    rho = np.linalg.norm(u)
    if rho == 0:
        raise GeometryError("AG pivot coincides with q")
    away = -u / rho
    taus = np.linspace(0.0, tmax, steps)[1:]
    out = []
    for t in taus:
        try:
            pt = m.frame_shift(pivot, t * away)
        except GeometryError:
            break
        if not m.contains(pt):
            break
        out.append(pt)
    return out


def find_ag_pair(m, p, q, candidates: int = 48, seed: int = 0, tag: str = "ag") -> AGTriple:
    """Search for q^- with d(p, q^-) = d(p, q) on the far side of p.

    Pivots p~ near p are tried closest-first; along each geodesic
    continuation the matching point is located by scan + bisection.
    """
    D = m.distance(p, q)
    if D <= 0:
        raise GeometryError("AG pair needs q distinct from p")
    pivots = [p]
    if candidates > 1:
        r_search = 0.05 * D
        if m.is_graph:
            ball = m.points_in_ball(p, r_search)
            rng = substream(seed, f"{tag}-pivots")
            extra = rng.choice(ball, size=min(candidates - 1, ball.size), replace=False)
            pivots += [int(v) for v in extra]
        else:
            extra = m.sample_ball(p, r_search, candidates - 1, tag=f"{tag}-pivots-{seed}")
            order = np.argsort(m.distances_from(p, extra))
            pivots += [tuple(row) for row in extra[order]]

    for pivot in pivots:
        if (int(pivot) == int(q)) if m.is_graph else (tuple(pivot) == tuple(q)):
            continue
        try:
            curve = _extension_curve(m, pivot, q, tmax=2.5 * D, steps=160)
        except GeometryError:
            continue
        if not curve:
            continue
        if m.is_graph:
            g = np.array([m.distance(int(v), int(p)) for v in curve]) - D
        else:
            g = m.distances_from(p, m.as_array(curve)) - D
        cross = np.flatnonzero((g[:-1] < 0) & (g[1:] >= 0))
        if cross.size == 0:
            continue
        j = int(cross[0])
        if m.is_graph:
            qm = curve[j + 1] if abs(g[j + 1]) < abs(g[j]) else curve[j]
        else:
            # bisect between curve[j] and curve[j+1] along the same ray
            u = m.log_coords(pivot, m.as_array([q]))[0]
            away = -u / np.linalg.norm(u)
            taus = np.linspace(0.0, 2.5 * D, 160)[1:]
            lo, hi = taus[j], taus[j + 1]
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                pt = m.frame_shift(pivot, mid * away)
                if m.distance(pt, p) - D >= 0:
                    hi = mid
                else:
                    lo = mid
                if hi - lo < 1e-9 * D:
                    break
            qm = m.frame_shift(pivot, 0.5 * (lo + hi) * away)
        excess = m.distance(p, q) + m.distance(p, qm) - m.distance(q, qm)
        scale = min(m.distance(p, q), m.distance(p, qm))
        return AGTriple(q_plus=q, q_minus=qm, p=p, excess=excess, scale=scale)
    return AGTriple(q_plus=q, q_minus=None, p=p, excess=math.nan, scale=math.nan, found=False,
                    note="no extending segment found within the pivot budget")


@dataclass
class AbreschGromollCheck:
    sup_excess: float
    bound: float
    r: float
    big_radius: float
    excess_hypothesis_ok: bool
    scale_hypothesis_ok: bool


def abresch_gromoll_check(m, triple: AGTriple, r: float, count: int = 3000, tag: str = "ag-check") -> AbreschGromollCheck:
    """Sampled sup of the excess over B_r(p) against 2^6 (r/R)^{1/(n-1)} r."""
    if not triple.found:
        raise GeometryError("AG triple was not found")
    R = triple.scale
    n = m.n
    if m.is_graph:
        pts = m.points_in_ball(triple.p, r)
        e = (
            m.distances_from(triple.q_plus, pts)
            + m.distances_from(triple.q_minus, pts)
            - m.distance(triple.q_plus, triple.q_minus)
        )
    else:
        pts = m.sample_ball(triple.p, r, count, tag=tag)
        e = (
            m.distances_from(triple.q_plus, pts)
            + m.distances_from(triple.q_minus, pts)
            - m.distance(triple.q_plus, triple.q_minus)
        )
    if np.any(e < -1e-9):
        raise GeometryError("negative excess: triangle inequality violated")
    return AbreschGromollCheck(
        sup_excess=float(np.max(e)),
        bound=float(2**6 * (r / R) ** (1.0 / (n - 1)) * r),
        r=r,
        big_radius=R,
        excess_hypothesis_ok=bool(triple.excess <= r**2 / (n * R)),
        scale_hypothesis_ok=bool(R >= 2 ** (2 * n) * r),
    )


@dataclass
class HarmonicReplacement:
    field: CloudField
    boundary_label: str
    solver: object
    max_principle_gap: float


def harmonic_replacement(m, center, radius: float, boundary_values, label: str = "b",
                         cloud_points: int = 4000, tag: str = "harmonic", rtol: float = 1e-8,
                         grid=(96, 128)) -> HarmonicReplacement:
    """Solve Laplace(u) = 0 on B_radius(center) with Dirichlet data from
    `boundary_values` (a callable on coordinate stacks / vertex ids).

    Analytic two-dimensional backends use the noise-free polar-grid
    discretization; the graph backend uses its kernel Laplacian.
    """
    if not m.is_graph and m.n == 2:
        fld = solve_polar_dirichlet(m, center, radius, boundary_values, 0.0, nr=grid[0], nphi=grid[1], rtol=rtol)
        fld.label = label
        probes = m.sample_ball(center, radius * 0.98, 2000, tag=f"{tag}-maxprin")
        inner = fld.values(probes)
        lo, hi = float(np.min(fld.boundary_values)), float(np.max(fld.boundary_values))
        gap = max(float(np.nanmax(inner)) - hi, lo - float(np.nanmin(inner)), 0.0)
        return HarmonicReplacement(field=fld, boundary_label=label, solver=fld.solver_stats, max_principle_gap=gap)
    cloud = build_cloud(m, center, radius, count=cloud_points, tag=tag)
    bvals = boundary_values(cloud.ids if m.is_graph else cloud.coords)
    vals, interior, stats = dirichlet_solve(cloud, 0.0, np.asarray(bvals, dtype=float), rtol=rtol)
    if not stats.converged:
        raise GeometryError(f"harmonic replacement CG did not converge (residual {stats.residual:.2e})")
    lo, hi = float(np.min(bvals[~interior])), float(np.max(bvals[~interior]))
    gap = max(float(np.max(vals[interior])) - hi, lo - float(np.min(vals[interior])), 0.0)
    fld = CloudField(cloud, vals, label)
    return HarmonicReplacement(field=fld, boundary_label=label, solver=stats, max_principle_gap=gap)


@dataclass
class ToponogovStats:
    s: float
    cosine_mean: float
    cosine_se: float
    dq_mean: float
    dq_se: float
    first_term_bound: float
    samples: int
    dropped: int


def integral_toponogov_check(m, q, p, r1: float, s: float, count: int = 20000, seed: int = 0) -> ToponogovStats:
    """Monte-Carlo cosine-law and difference-quotient defects over SB_{r1}(p)."""
    d_qp = m.distance(p, q)
    if d_qp < 2.0 * r1:
        raise GeometryError("Toponogov check needs d(q, p) >= 2 r1")
    samples = m.sample_unit_bundle(p, r1, count, seed=seed)
    if m.is_graph:
        return _toponogov_graph(m, q, p, r1, s, samples, d_qp)
    bases = m.as_array([sm.base for sm in samples])
    dirs = np.asarray([sm.direction for sm in samples])
    flowed = m.flow_many(bases, s * dirs)
    inside = np.array([m.contains(tuple(pt)) for pt in flowed])
    dropped = int(np.count_nonzero(~inside))
    bases, dirs, flowed = bases[inside], dirs[inside], flowed[inside]
    rho_x = m.distances_from(q, bases)
    rho_f = m.distances_from(q, flowed)
    # exact first variation: <grad rho, v> = -<direction toward q, v>
    toward = np.stack([m.log_coords(tuple(b), m.as_array([q]))[0] for b in bases])
    toward /= np.linalg.norm(toward, axis=1, keepdims=True)
    grad_rho_v = -np.sum(toward * dirs, axis=1)
    cosine = np.abs(0.5 * rho_f**2 - 0.5 * rho_x**2 - rho_x * grad_rho_v * s - 0.5 * s**2)
    dq = np.abs(grad_rho_v - (rho_f - rho_x) / s)
    return ToponogovStats(
        s=s,
        cosine_mean=float(np.mean(cosine)),
        cosine_se=float(np.std(cosine) / math.sqrt(cosine.size)),
        dq_mean=float(np.mean(dq)),
        dq_se=float(np.std(dq) / math.sqrt(dq.size)),
        first_term_bound=2.0 * s / d_qp,
        samples=int(cosine.size),
        dropped=dropped,
    )


def _toponogov_graph(m, q, p, r1, s, samples, d_qp):
    rho = m.distances_from(q, np.arange(m.vertex_count()))
    cos_vals, dq_vals, dropped = [], [], 0
    h = m.mean_edge_length
    for sm in samples:
        try:
            fl = m.geodesic_flow(sm, s)
            near = m.geodesic_flow(sm, 2.0 * h)
        except GeometryError:
            dropped += 1
            continue
        x = int(sm.base)
        gv = (rho[near] - rho[x]) / max(m.distance(x, near), 1e-12)
        cos_vals.append(abs(0.5 * rho[fl] ** 2 - 0.5 * rho[x] ** 2 - rho[x] * gv * s - 0.5 * s**2))
        dq_vals.append(abs(gv - (rho[fl] - rho[x]) / s))
    cos_vals = np.asarray(cos_vals)
    dq_vals = np.asarray(dq_vals)
    return ToponogovStats(
        s=s,
        cosine_mean=float(np.mean(cos_vals)),
        cosine_se=float(np.std(cos_vals) / math.sqrt(cos_vals.size)),
        dq_mean=float(np.mean(dq_vals)),
        dq_se=float(np.std(dq_vals) / math.sqrt(dq_vals.size)),
        first_term_bound=2.0 * s / d_qp,
        samples=int(cos_vals.size),
        dropped=dropped,
    )


@dataclass
class SplittingReport:
    headline_epsilon: float
    grad_sup_b: list
    grad_sup_b_plus: list
    gram_b: list
    gram_b_plus: list
    replacement_sup_gap: list
    replacement_grad_gap_sq: list
    max_principle_gaps: list
    quasi: QuasiIsometryStats
    toponogov: list
    ag_triples: list
    ag_checks: list
    r1: float
    partial: bool
    errors: list
    exclusions: dict
    solver_stats: list

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, AGTriple):
                return {
                    "excess": v.excess,
                    "scale": v.scale,
                    "found": v.found,
                    "note": v.note,
                }
            if hasattr(v, "__dict__"):
                return {kk: enc(vv) for kk, vv in v.__dict__.items()}
            if isinstance(v, (list, tuple)):
                return [enc(x) for x in v]
            if isinstance(v, np.ndarray):
                return [enc(x) for x in v.tolist()]
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v

        return {k: enc(v) for k, v in self.__dict__.items()}


def _bplus_gradients_analytic(m, frame, pts):
    """Exact unit gradients of the distance components in the probe frames."""
    grads = []
    for lev in frame.levels:
        toward = np.stack([m.log_coords(tuple(x), m.as_array([lev.q]))[0] for x in pts])
        nrm = np.linalg.norm(toward, axis=1, keepdims=True)
        grads.append(-toward / np.maximum(nrm, 1e-300))
    return np.stack(grads, axis=1)  # (npts, k, n)


def splitting_report(m, frame: DirectionFrame, cfg: SplittingConfig) -> SplittingReport:
    """Assemble every splitting-map measurement for one frame."""
    errors: list[str] = []
    k = len(frame.levels)
    lev = frame.levels[-1]
    r1 = lev.r_q
    p = frame.p
    # fewer direction points than dimensions cannot split; flag it
    partial = frame.collapsed or k < m.n

    # --- probe grid and b+ gradients
    if m.is_graph:
        probes = m.points_in_ball(p, r1)
        rng = substream(cfg.seed, "probe-sub")
        if probes.size > cfg.probe_grid:
            probes = np.sort(rng.choice(probes, size=cfg.probe_grid, replace=False))
        probe_pts = probes
    else:
        probe_pts = m.sample_ball(p, r1 * 0.95, cfg.probe_grid, tag=f"probes-{cfg.seed}")

    if m.is_graph:
        psi = distance_map_batch(frame, probe_pts)
        gplus = None
    else:
        gplus = _bplus_gradients_analytic(m, frame, probe_pts)

    gram_plus = np.full((k, k), math.nan)
    grad_sup_plus = [math.nan] * k
    if gplus is not None:
        for i in range(k):
            grad_sup_plus[i] = float(np.max(np.linalg.norm(gplus[:, i, :], axis=1)))
            for j in range(k):
                dots = np.sum(gplus[:, i, :] * gplus[:, j, :], axis=1)
                gram_plus[i, j] = float(np.mean((dots - (1.0 if i == j else 0.0)) ** 2))

    # --- harmonic replacements
    reps: list[HarmonicReplacement | None] = []
    solver_stats = []
    for i, lv in enumerate(frame.levels):
        if m.is_graph:
            def bplus(ids, lv=lv):
                return m.distances_from(lv.q, ids) - lv.d
        else:
            def bplus(pts, lv=lv):
                return m.distances_from(lv.q, pts) - lv.d
        try:
            rep = harmonic_replacement(
                m, p, 2.0 * r1, bplus, label=f"b{i+1}",
                cloud_points=cfg.cloud_points, tag=f"harmonic-{i+1}-{cfg.seed}",
            )
            reps.append(rep)
            solver_stats.append(rep.solver)
        except GeometryError as exc:
            errors.append(f"harmonic replacement {i+1}: {exc}")
            reps.append(None)
            partial = True

    grad_sup_b = [math.nan] * k
    gram_b = np.full((k, k), math.nan)
    rep_sup_gap = [math.nan] * k
    rep_grad_gap = [math.nan] * k
    max_gaps = [math.nan] * k

    grads_b = []
    for i, rep in enumerate(reps):
        if rep is None:
            grads_b.append(None)
            continue
        if isinstance(rep.field, CloudField):
            g, valid = rep.field.gradient_many(probe_pts)
            cloud = rep.field.cloud
            bp = m.distances_from(frame.levels[i].q, cloud.ids if m.is_graph else cloud.coords) - frame.levels[i].d
            inner = cloud.center_dist <= r1
            if inner.any():
                rep_sup_gap[i] = float(np.max(np.abs(rep.field.table[inner] - bp[inner])))
        else:
            g, _, _, valid = field_ops.probe_many(rep.field, probe_pts, stencil=1e-4 * r1)
            bp = m.distances_from(frame.levels[i].q, probe_pts) - frame.levels[i].d
            vals = rep.field.values(probe_pts)
            rep_sup_gap[i] = float(np.nanmax(np.abs(vals - bp)))
        grads_b.append((g, valid))
        if valid.any():
            norms = np.linalg.norm(g[valid], axis=1)
            grad_sup_b[i] = float(np.max(norms))
        max_gaps[i] = rep.max_principle_gap
        if gplus is not None and valid.any():
            diff = g[valid] - gplus[valid, i, :]
            rep_grad_gap[i] = float(np.mean(np.sum(diff * diff, axis=1)))

    for i in range(k):
        for j in range(k):
            if grads_b[i] is None or grads_b[j] is None:
                continue
            gi, vi = grads_b[i]
            gj, vj = grads_b[j]
            both = vi & vj
            if not both.any():
                continue
            dots = np.sum(gi[both] * gj[both], axis=1)
            gram_b[i, j] = float(np.mean((dots - (1.0 if i == j else 0.0)) ** 2))

    # --- quasi-isometry, AG pairs, Toponogov
    try:
        quasi = quasi_isometry_stats(frame, pair_count=cfg.pair_count, seed=cfg.seed)
    except GeometryError as exc:
        errors.append(f"quasi-isometry: {exc}")
        quasi = QuasiIsometryStats(math.nan, math.nan, 0, math.nan, [], [])
        partial = True

    ag_triples, ag_checks = [], []
    for i, lv in enumerate(frame.levels):
        tri = find_ag_pair(m, p, lv.q, candidates=cfg.ag_candidates, seed=cfg.seed, tag=f"ag-{i+1}")
        ag_triples.append(tri)
        if tri.found:
            try:
                ag_checks.append(abresch_gromoll_check(m, tri, r1, tag=f"ag-check-{i+1}"))
            except GeometryError as exc:
                errors.append(f"abresch-gromoll {i+1}: {exc}")
                ag_checks.append(None)
                partial = True
        else:
            errors.append(f"AG pair {i+1}: {tri.note}")
            ag_checks.append(None)
            partial = True

    topo = []
    for i, lv in enumerate(frame.levels):
        s = cfg.s_fraction * r1
        try:
            topo.append(
                integral_toponogov_check(m, lv.q, p, r1, s, count=cfg.bundle_count, seed=cfg.seed + i)
            )
        except GeometryError as exc:
            errors.append(f"toponogov {i+1}: {exc}")
            topo.append(None)
            partial = True

    finite_grad = [g for g in grad_sup_b if math.isfinite(g)]
    finite_gram = gram_b[np.isfinite(gram_b)]
    headline = -math.inf
    if finite_grad:
        headline = max(headline, max(finite_grad) - 1.0)
    if finite_gram.size:
        headline = max(headline, float(np.max(finite_gram)))
    if not math.isfinite(headline):
        headline = math.nan
        partial = True

    exclusions = {
        "chain_failures": frame.chain_failures,
        "probe_invalid": {
            f"b{i+1}": int(np.count_nonzero(~grads_b[i][1])) if grads_b[i] is not None else None
            for i in range(k)
        },
        "toponogov_dropped": [t.dropped if t else None for t in topo],
        "net_bad_rejected": [lv.net.bad_rejected for lv in frame.levels],
        "net_density_violations": [lv.net.density_violations for lv in frame.levels],
    }

    return SplittingReport(
        headline_epsilon=headline,
        grad_sup_b=grad_sup_b,
        grad_sup_b_plus=grad_sup_plus,
        gram_b=gram_b.tolist(),
        gram_b_plus=gram_plus.tolist(),
        replacement_sup_gap=rep_sup_gap,
        replacement_grad_gap_sq=rep_grad_gap,
        max_principle_gaps=max_gaps,
        quasi=quasi,
        toponogov=topo,
        ag_triples=ag_triples,
        ag_checks=ag_checks,
        r1=r1,
        partial=partial,
        errors=errors,
        exclusions=exclusions,
        solver_stats=solver_stats,
    )
