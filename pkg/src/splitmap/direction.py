"""Direction points, dense nets, and the stratified Gou-Gu verification.

Level k of a frame owns a direction point q_k, its scale r_{q_k} =
d(p, q_k)/beta, a model function solved around q_k, and a net of
well-projecting sample points of B_{r_{q_k}}(p) chosen to minimize the
integral badness score of the construction.  q_{k+1} is the farthest point
from p in the image of the composed projection chain over the level-k net.

Paper-scale constants are not reachable on a desk: beta, nu, epsilon, eta
are independent knobs here, every level uses the same effective beta, and
defects are reported in r_q^2-normalized form instead of being asserted
against asymptotic constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._seeds import substream
from . import fields, gougu, poisson
from .fields import Ball
from .manifold import GeometryError


class NetConstructionError(GeometryError):
    """A cover ball contained no usable sample (all bad); diagnostics attached."""

    def __init__(self, message: str, level: int, center, bad_count: int):
        super().__init__(message)
        self.level = level
        self.center = center
        self.bad_count = bad_count


def elementary_bound(a, b, c, eps, eps1, eps2):
    """Hypothesis test and bound of the key elementary inequality.

    Hypothesis: a + b <= (1 + eps1) (sqrt(a^2 - c^2 + eps2^2)
                 + sqrt(b^2 - c^2 + eps2^2) + eps); negative radicands make
    it false.  Bound: c <= 4 sqrt((eps + eps2)(a + b + eps2))
                 + 4 sqrt(eps1) (a + b + eps2).
    """
    holds, bound = elementary_bound_batch(
        np.array([a]), np.array([b]), np.array([c]), np.array([eps]), np.array([eps1]), np.array([eps2])
    )
    return bool(holds[0]), float(bound[0])


def elementary_bound_batch(a, b, c, eps, eps1, eps2):
    for name, arr in (("a", a), ("b", b), ("c", c), ("eps", eps), ("eps2", eps2)):
        if np.any(arr < 0):
            raise ValueError(f"{name} must be nonnegative")
    if np.any((eps1 < 0) | (eps1 >= 1)):
        raise ValueError("eps1 must lie in [0, 1)")
    ra = a * a - c * c + eps2 * eps2
    rb = b * b - c * c + eps2 * eps2
    real = (ra >= 0) & (rb >= 0)
    lhs = a + b
    rhs = np.where(real, (1 + eps1) * (np.sqrt(np.maximum(ra, 0)) + np.sqrt(np.maximum(rb, 0)) + eps), -np.inf)
    holds = real & (lhs <= rhs)
    bound = 4.0 * np.sqrt((eps + eps2) * (a + b + eps2)) + 4.0 * np.sqrt(eps1) * (a + b + eps2)
    return holds, bound


@dataclass
class FrameConfig:
    beta: float = 30.0
    nu: float | None = None  # default 4^{n+1}
    epsilon: float = 0.05
    eta: float = 0.1
    q1_scale: float = 1.1
    k_max: int = 0  # 0 -> dimension
    net_samples: int = 3000
    partner_budget: int = 12
    collapse_floor: float = 0.0  # 0 -> 0.5 * 2^{-n(2n+3)}
    seed: int = 0
    sigma_nodes: int = 17
    outer_nodes: int = 9
    inner_nodes: int = 9
    stencil_frac: float = 1e-4
    estimate_count: int = 4000
    strict_nets: bool = False

    def resolved(self, n: int) -> "FrameConfig":
        out = FrameConfig(**self.__dict__)
        if not out.nu:
            out.nu = float(4 ** (n + 1))
        if not out.k_max:
            out.k_max = n
        if not out.collapse_floor:
            out.collapse_floor = 0.5 * 2.0 ** (-n * (2 * n + 3))
        return out

    def validate(self) -> None:
        if self.beta < 3.0:
            raise GeometryError("beta must be >= 3")
        if not (0 < self.epsilon <= 0.5):
            raise GeometryError("epsilon must lie in (0, 0.5]")
        if not (0 < self.eta < 0.5):
            raise GeometryError("eta must lie in (0, 0.5)")
        if self.q1_scale <= 0:
            raise GeometryError("q1_scale must be positive")


@dataclass
class DefectStats:
    rho_level: int
    net_a: int
    net_b: int
    sup: float
    mean: float
    sup_normalized: float
    pairs: int
    excluded: int


@dataclass
class Net:
    level: int
    points: list
    density_radius: float
    cover_count: int
    cardinality_const: float
    scores: np.ndarray
    q_membership: dict
    t_membership: dict
    bad_rejected: int
    density_violations: int = 0
    defect_tables: list[DefectStats] = field(default_factory=list)


@dataclass
class Level:
    index: int
    q: object
    d: float
    r_q: float
    solve_radius: float
    achieved_ratio: float | None
    f: object = None
    h_q: object = None
    h_t: object = None
    net: Net | None = None
    estimates: poisson.ModelEstimates | None = None


@dataclass
class DirectionFrame:
    manifold: object
    p: object
    r: float
    config: FrameConfig
    volume_ratio: float
    levels: list[Level] = field(default_factory=list)
    collapsed: bool = False
    collapse_level: int | None = None
    chain_failures: int = 0

    # ----- chain maps ---------------------------------------------------

    def net_array(self, i: int):
        m = self.manifold
        pts = self.levels[i - 1].net.points
        return np.asarray(pts, dtype=int) if m.is_graph else m.as_array(pts)

    def snap(self, i: int, x):
        """P_0^{(i-1)}: nearest point of net i (lowest index on ties)."""
        m = self.manifold
        arr = self.net_array(i)
        if m.is_graph:
            d = np.array([m.distance(int(x), int(v)) for v in arr])
        else:
            d = m.distances_from(x, arr)
        j = int(np.argmin(d))
        return self.levels[i - 1].net.points[j]

    def project_level(self, i: int, x):
        lev = self.levels[i - 1]
        ext = self.manifold.extend_ray(lev.q, x, lev.d)
        return ext.point if ext.well_defined else None

    def chain_P(self, s: int, x):
        """P_s = hat-pi_s o ... o hat-pi_0, with hat-pi_0 the net-1 snap."""
        cur = self.snap(1, x)
        for i in range(1, s + 1):
            pi = self.project_level(i, cur)
            if pi is None:
                return None
            cur = self.snap(i + 1, pi)
        return cur

    def chain_P_check(self, i: int, x):
        """P-check_i = snap_i o pi_i o P_{i-1}."""
        base = self.chain_P(i - 1, x) if i > 1 else self.snap(1, x)
        if base is None:
            return None
        pi = self.project_level(i, base)
        if pi is None:
            return None
        return self.snap(i, pi)

    def phi(self, j: int, x):
        """phi_j(x) = rho_j(P_{j-1}(x)) - rho_j(p)."""
        base = self.chain_P(j - 1, x) if j > 1 else self.snap(1, x)
        if base is None:
            return None
        lev = self.levels[j - 1]
        return self.manifold.distance(lev.q, base) - lev.d

    # ----- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        enc = (lambda v: int(v)) if self.manifold.is_graph else (lambda v: list(map(float, v)))
        return {
            "p": enc(self.p),
            "r": self.r,
            "volume_ratio": self.volume_ratio,
            "collapsed": self.collapsed,
            "collapse_level": self.collapse_level,
            "chain_failures": self.chain_failures,
            "config": {k: v for k, v in self.config.__dict__.items()},
            "levels": [
                {
                    "index": lev.index,
                    "q": enc(lev.q),
                    "d": lev.d,
                    "r_q": lev.r_q,
                    "solve_radius": lev.solve_radius,
                    "achieved_ratio": lev.achieved_ratio,
                    "net_points": [enc(pt) for pt in lev.net.points],
                    "net_cover_count": lev.net.cover_count,
                    "net_cardinality_const": lev.net.cardinality_const,
                    "net_bad_rejected": lev.net.bad_rejected,
                    "net_density_violations": lev.net.density_violations,
                    "defect_tables": [t.__dict__ for t in lev.net.defect_tables],
                    "estimates": lev.estimates.__dict__ if lev.estimates else None,
                }
                for lev in self.levels
            ],
        }


def frame_from_dict(m, data: dict) -> DirectionFrame:
    """Rebuild a frame (geometry and nets) from its JSON document."""
    dec = (lambda v: int(v)) if m.is_graph else (lambda v: tuple(v))
    cfg = FrameConfig(**data["config"])
    frame = DirectionFrame(
        manifold=m,
        p=dec(data["p"]),
        r=data["r"],
        config=cfg,
        volume_ratio=data["volume_ratio"],
        collapsed=data["collapsed"],
        collapse_level=data["collapse_level"],
        chain_failures=data["chain_failures"],
    )
    for lev_doc in data["levels"]:
        net = Net(
            level=lev_doc["index"],
            points=[dec(pt) for pt in lev_doc["net_points"]],
            density_radius=cfg.epsilon * lev_doc["r_q"],
            cover_count=lev_doc["net_cover_count"],
            cardinality_const=lev_doc["net_cardinality_const"],
            scores=np.array([]),
            q_membership={},
            t_membership={},
            bad_rejected=lev_doc["net_bad_rejected"],
            density_violations=lev_doc.get("net_density_violations", 0),
            defect_tables=[DefectStats(**t) for t in lev_doc["defect_tables"]],
        )
        lev = Level(
            index=lev_doc["index"],
            q=dec(lev_doc["q"]),
            d=lev_doc["d"],
            r_q=lev_doc["r_q"],
            solve_radius=lev_doc["solve_radius"],
            achieved_ratio=lev_doc["achieved_ratio"],
            net=net,
        )
        frame.levels.append(lev)
    _solve_level_fields(m, frame)
    return frame


def _solve_level_fields(m, frame: DirectionFrame) -> None:
    cfg = frame.config
    for lev in frame.levels:
        if lev.f is None:
            lev.f = poisson.solve_model_function(m, lev.q, lev.solve_radius)
            stencil = cfg.stencil_frac * lev.d if not m.is_graph else None
            diff = poisson.difference_field(m, lev.q, lev.f, Ball(lev.q, lev.solve_radius))
            grad_fit = max(2.0 * m.connectivity_radius, 0.1 * lev.r_q) if m.is_graph else None
            hess_fit = max(3.0 * m.connectivity_radius, 0.3 * lev.r_q) if m.is_graph else None
            lev.h_q = fields.gradient_norm_field(diff, stencil=stencil, fit_radius=grad_fit)
            lev.h_t = fields.hessian_deviation_field(lev.f, stencil=stencil, fit_radius=hess_fit)


def _solve_radius(m, q, d: float, r_q: float) -> float:
    want = d + 4.0 * r_q
    margin = m.interior_margin(q) if not m.is_graph else m.base.interior_margin(tuple(m.coords[int(q)]))
    cap = margin * 0.995 if math.isfinite(margin) else want
    if getattr(m, "kind", "") == "sphere-cap":
        cap = min(cap, math.pi * m.radius * 0.995)
    if m.is_graph and getattr(m.base, "kind", "") == "sphere-cap":
        cap = min(cap, math.pi * m.base.radius * 0.995)
    return min(want, cap)


def _pick_q1(m, p, d1: float):
    if m.is_graph:
        dists = m.distances_from(p, np.arange(m.vertex_count()))
        near = np.abs(dists - d1) <= 2.0 * m.mean_edge_length
        idx = np.flatnonzero(near)
        if idx.size == 0:
            raise GeometryError("no vertex near the requested q1 distance")
        return int(idx[0])
    coeffs = np.zeros(m.n)
    coeffs[0] = d1
    return m.frame_shift(p, coeffs)


def build_net(m, p, level_ctx: Level, frame: DirectionFrame, cfg: FrameConfig) -> Net:
    """Greedy half-epsilon cover of B_{r_q}(p); per ball, the least-bad sample.

    Badness of a candidate: infinity if any level projection fails, else the
    sum over levels of the eta-r_q^2-normalized sigma integral of
    |grad(f_l - rho_l^2)| plus the transport estimate of |Hess f_l - 2g|.
    """
    k = level_ctx.index
    r_q = level_ctx.r_q
    eps_r = cfg.epsilon * r_q
    if m.is_graph:
        cand_ids = m.points_in_ball(p, r_q)
        if cand_ids.size == 0:
            raise GeometryError("level ball contains no graph vertices")
        if cand_ids.size > cfg.net_samples:
            rng = substream(cfg.seed, f"net-sub-{k}")
            cand_ids = np.sort(rng.choice(cand_ids, size=cfg.net_samples, replace=False))
        cand = cand_ids
        coords = m.coords[cand_ids]
    else:
        cand = m.sample_ball(p, r_q, cfg.net_samples, tag=f"net-{k}-seed{cfg.seed}")
        coords = cand

    levels = frame.levels[:k]
    ncand = len(cand) if m.is_graph else cand.shape[0]
    score = np.zeros(ncand)
    ok_all = np.ones(ncand, dtype=bool)
    proj_by_level = {}
    q_members = {}
    t_members = {}
    rng = substream(cfg.seed, f"net-partners-{k}")

    for lev in levels:
        if m.is_graph:
            proj, ok = gougu.project_batch(m, lev.q, lev.d, cand)
            has_pt = np.asarray(proj) >= 0
        else:
            proj, ok = m.extend_rays(lev.q, cand, lev.d)
            has_pt = ok
        proj_by_level[lev.index] = (proj, ok)
        ok_all &= ok
        q_int = gougu.sigma_integrals(m, lev.q, lev.d, cand, proj, has_pt, lev.h_q, nodes=cfg.sigma_nodes)
        thr = cfg.eta * lev.r_q**2
        q_members[lev.index] = ok & (q_int <= thr)
        # tie-flagged graph points keep a usable projection: penalize, don't ban
        score += np.where(has_pt & ~ok, 1e9, 0.0)
        good_idx = np.flatnonzero(has_pt)
        t_est = np.zeros(ncand)
        if cfg.partner_budget < 1:
            pass  # transport estimates disabled (degenerate on coarse graphs)
        elif good_idx.size >= 2:
            budget = min(cfg.partner_budget, good_idx.size)
            partners = rng.choice(good_idx, size=(good_idx.size, budget))
            if m.is_graph:
                for pos, a in enumerate(good_idx):
                    tot = 0.0
                    for b in partners[pos]:
                        tot += gougu._pair_transport_graph(
                            m, int(cand[a]), int(proj[a]), int(cand[b]), int(proj[b]), lev.h_t
                        )
                    t_est[a] = tot / budget
            else:
                anchors_rep = np.repeat(good_idx, budget)
                flat = partners.reshape(-1)
                vals = gougu.pair_transport_integrals(
                    m,
                    coords[anchors_rep],
                    np.asarray(proj)[anchors_rep],
                    coords[flat],
                    np.asarray(proj)[flat],
                    lev.h_t,
                    outer_nodes=cfg.outer_nodes,
                    inner_nodes=cfg.inner_nodes,
                )
                t_est[good_idx] = vals.reshape(good_idx.size, budget).mean(axis=1)
        t_members[lev.index] = ok & (t_est <= thr)
        score += np.where(has_pt, (q_int + t_est) / thr, np.inf)

    # greedy half-epsilon cover in candidate order
    chosen: list[int] = []
    centers: list[int] = []
    taken = np.zeros(ncand, dtype=bool)
    bad_rejected = 0
    density_violations = 0
    order = np.arange(ncand)
    half = 0.5 * eps_r
    for idx in order:
        if taken[idx]:
            continue
        if m.is_graph:
            d_to = m.distances_from(int(cand[idx]), cand)
        else:
            d_to = m.distances_from(tuple(coords[idx]), coords)
        members = np.flatnonzero(d_to <= half)
        taken[members] = True
        centers.append(int(idx))
        member_scores = score[members]
        finite = np.isfinite(member_scores)
        if not finite.any():
            if cfg.strict_nets:
                raise NetConstructionError(
                    f"net level {k}: cover ball at candidate {idx} has no usable sample "
                    f"({members.size} members, all bad)",
                    level=k,
                    center=tuple(coords[idx]) if not m.is_graph else int(cand[idx]),
                    bad_count=int(members.size),
                )
            density_violations += int(members.size)
            bad_rejected += int(members.size)
            continue
        bad_rejected += int(np.count_nonzero(~finite))
        best_local = members[finite][int(np.argmin(member_scores[finite]))]
        chosen.append(int(best_local))
    if not chosen:
        raise NetConstructionError(
            f"net level {k}: no usable samples at all", level=k, center=None, bad_count=ncand
        )

    # overlapping cover balls can elect the same winner; keep first occurrence
    seen = set()
    unique = [i for i in chosen if not (i in seen or seen.add(i))]
    points = [int(cand[i]) for i in unique] if m.is_graph else [tuple(coords[i]) for i in unique]
    sel = np.asarray(unique, dtype=int)
    net = Net(
        level=k,
        points=points,
        density_radius=eps_r,
        cover_count=len(centers),
        cardinality_const=len(points) * cfg.epsilon**m.n,
        scores=score[sel],
        q_membership={l: q_members[l][sel] for l in q_members},
        t_membership={l: t_members[l][sel] for l in t_members},
        bad_rejected=bad_rejected,
        density_violations=density_violations,
    )
    return net


def _net_defect_tables(m, frame: DirectionFrame, new_level: Level, cfg: FrameConfig) -> None:
    """Pairwise Gou-Gu defects of the new net against itself and lower nets."""
    k = new_level.index
    new_pts = frame.net_array(k)
    max_pairs = 20000
    rng = substream(cfg.seed, f"net-defects-{k}")
    for i1 in range(1, k + 1):
        other = frame.net_array(i1)
        for l in range(1, i1 + 1):
            lev_l = frame.levels[l - 1]
            na = other.shape[0]
            nb = new_pts.shape[0]
            total = na * nb
            if total > max_pairs:
                ia = rng.integers(0, na, size=max_pairs)
                ib = rng.integers(0, nb, size=max_pairs)
            else:
                ia, ib = np.divmod(np.arange(total), nb)
            X = other[ia]
            Y = new_pts[ib]
            d, ok = gougu.gougu_defects_batch(m, lev_l.q, lev_l.d, X, Y)
            vals = d[np.isfinite(d)]
            sup = float(np.max(vals)) if vals.size else math.nan
            mean = float(np.mean(vals)) if vals.size else math.nan
            new_level.net.defect_tables.append(
                DefectStats(
                    rho_level=l,
                    net_a=i1,
                    net_b=k,
                    sup=sup,
                    mean=mean,
                    sup_normalized=sup / lev_l.r_q**2 if vals.size else math.nan,
                    pairs=int(ia.size),
                    excluded=int(np.count_nonzero(~np.isfinite(d))),
                )
            )


def find_direction_points(m, p, r: float, cfg: FrameConfig) -> DirectionFrame:
    """Run the inductive construction up to k_max direction points."""
    cfg = cfg.resolved(m.n)
    cfg.validate()
    vr = m.ball_volume(p, r).ratio
    frame = DirectionFrame(manifold=m, p=p, r=r, config=cfg, volume_ratio=vr)

    d1 = cfg.q1_scale * r
    q = _pick_q1(m, p, d1)
    for k in range(1, cfg.k_max + 1):
        d = m.distance(p, q)
        r_q = d / cfg.beta
        lev = Level(
            index=k,
            q=q,
            d=d,
            r_q=r_q,
            solve_radius=_solve_radius(m, q, d, r_q),
            achieved_ratio=None,
        )
        frame.levels.append(lev)
        _solve_level_fields(m, frame)
        est_r = min(lev.solve_radius * 0.95, lev.d + 2.0 * r_q)
        try:
            lev.estimates = poisson.model_function_estimates(
                m, q, lev.f, est_r, count=cfg.estimate_count,
                stencil=cfg.stencil_frac * lev.d if not m.is_graph else None,
                tag=f"level-{k}-est",
            )
        except GeometryError:
            lev.estimates = None
        lev.net = build_net(m, p, lev, frame, cfg)
        _net_defect_tables(m, frame, lev, cfg)

        if k == cfg.k_max:
            break
        # next direction point: farthest chain image over the level-k net
        images = []
        for x in lev.net.points:
            img = frame.chain_P_check(k, x)
            if img is None:
                frame.chain_failures += 1
            else:
                images.append(img)
        if not images:
            frame.collapsed = True
            frame.collapse_level = k + 1
            break
        if m.is_graph:
            dists = np.array([m.distance(p, int(v)) for v in images])
        else:
            dists = m.distances_from(p, m.as_array(images))
        best = int(np.argmax(dists))
        ratio = float(dists[best]) / r_q
        if ratio < cfg.collapse_floor:
            frame.collapsed = True
            frame.collapse_level = k + 1
            break
        q = images[best]
    # achieved ratio of level k+1 is d(p, q_{k+1}) / r-tilde_1 = d / r_{q_k}
    for idx in range(1, len(frame.levels)):
        frame.levels[idx].achieved_ratio = frame.levels[idx].d / frame.levels[idx - 1].r_q
    return frame


def stratified_gougu_defect(frame: DirectionFrame, x, y, k: int):
    """|d(x,y)^2 - sum_j [phi_j(x)-phi_j(y)]^2 - d(Pk(x), Pk(y))^2| or None."""
    m = frame.manifold
    same = (int(x) == int(y)) if m.is_graph else (tuple(x) == tuple(y))
    if same:
        return 0.0
    phx, phy = [], []
    for j in range(1, k + 1):
        a = frame.phi(j, x)
        b = frame.phi(j, y)
        if a is None or b is None:
            return None
        phx.append(a)
        phy.append(b)
    cx = frame.chain_P_check(k, x)
    cy = frame.chain_P_check(k, y)
    if cx is None or cy is None:
        return None
    dxy = m.distance(x, y)
    tail = m.distance(cx, cy)
    ssum = sum((a - b) ** 2 for a, b in zip(phx, phy))
    return abs(dxy**2 - ssum - tail**2)


@dataclass
class StratifiedDefectStats:
    k: int
    pairs: int
    excluded: int
    sup: float
    mean: float
    sup_normalized: float


def stratified_defect_stats(frame: DirectionFrame, k: int, pair_count: int = 300, seed: int = 0) -> StratifiedDefectStats:
    m = frame.manifold
    lev = frame.levels[k - 1]
    if m.is_graph:
        ball = m.points_in_ball(frame.p, lev.r_q)
        rng = substream(seed, f"strat-{k}")
        X = rng.choice(ball, size=pair_count)
        Y = rng.choice(ball, size=pair_count)
        pairs = list(zip(X.tolist(), Y.tolist()))
    else:
        X = m.sample_ball(frame.p, lev.r_q, pair_count, tag=f"strat-x-{k}-{seed}")
        Y = m.sample_ball(frame.p, lev.r_q, pair_count, tag=f"strat-y-{k}-{seed}")
        pairs = list(zip(m.as_points(X), m.as_points(Y)))
    vals = []
    excluded = 0
    for x, y in pairs:
        v = stratified_gougu_defect(frame, x, y, k)
        if v is None:
            excluded += 1
        else:
            vals.append(v)
    vals = np.asarray(vals)
    sup = float(np.max(vals)) if vals.size else math.nan
    return StratifiedDefectStats(
        k=k,
        pairs=pair_count,
        excluded=excluded,
        sup=sup,
        mean=float(np.mean(vals)) if vals.size else math.nan,
        sup_normalized=sup / lev.r_q**2,
    )


@dataclass
class ProjectionDiagnostics:
    rows: list
    gammas: list


def projection_diagnostics(frame: DirectionFrame) -> ProjectionDiagnostics:
    """d(q_j, pi_i(q_j)), d(P_i(q_j), q_j), |phi_i(q_j)|, raw and gamma-scaled.

    With the flattened per-level beta, gamma_i = beta^{-1/2} r_{q_i}.
    """
    m = frame.manifold
    beta = frame.config.beta
    gammas = [beta**-0.5 * lev.r_q for lev in frame.levels]
    rows = []
    for j in range(2, len(frame.levels) + 1):
        qj = frame.levels[j - 1].q
        for i in range(1, j):
            pi = frame.project_level(i, qj)
            d_pi = m.distance(qj, pi) if pi is not None else math.nan
            d_chain = math.nan
            if i <= j - 2:
                ch = frame.chain_P(i, qj)
                d_chain = m.distance(ch, qj) if ch is not None else math.nan
            ph = frame.phi(i, qj)
            rows.append(
                {
                    "i": i,
                    "j": j,
                    "d_qj_pi": d_pi,
                    "d_qj_pi_over_gamma": d_pi / gammas[i - 1] if math.isfinite(d_pi) else math.nan,
                    "d_chain": d_chain,
                    "phi": abs(ph) if ph is not None else math.nan,
                    "phi_over_r_last": abs(ph) / frame.levels[-1].r_q if ph is not None else math.nan,
                }
            )
    return ProjectionDiagnostics(rows=rows, gammas=gammas)


@dataclass
class ResidualDiameter:
    value: float
    normalized: float
    excluded: int
    count: int


def residual_diameter(frame: DirectionFrame) -> ResidualDiameter:
    """sup over the last net of d(p, P-check_n(x))."""
    m = frame.manifold
    n_lev = len(frame.levels)
    lev = frame.levels[-1]
    best = 0.0
    excluded = 0
    count = 0
    for x in lev.net.points:
        img = frame.chain_P_check(n_lev, x)
        if img is None:
            excluded += 1
            continue
        count += 1
        best = max(best, m.distance(frame.p, img))
    return ResidualDiameter(value=best, normalized=best / lev.r_q, excluded=excluded, count=count)
