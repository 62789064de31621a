import math

import numpy as np
import pytest

from splitmap.fields import (
    AnalyticField,
    Ball,
    combine,
    distance_field,
    gradient,
    gradient_norm_field,
    hessian_deviation,
    hessian_deviation_field,
    line_integral,
    line_integral_ex,
    mean_integral,
    probe_many,
)
from splitmap.manifold import ManifoldSpec, build_manifold


def euclid(n=2, dom=3.0):
    return build_manifold(ManifoldSpec(kind="euclidean", dimension=n, domain_radius=dom))


def graph(count=6000, seed=7, dom=1.0):
    return build_manifold(
        ManifoldSpec(kind="graph-sample", dimension=2, sample_count=count, seed=seed, domain_radius=dom)
    )


# ---------------------------------------------------------------- gradient


def test_gradient_of_rho_squared_euclidean():
    m = euclid()
    f = distance_field(m, (0.0, 0.0), Ball((0.0, 0.0), 2.5), squared=True)
    p = gradient(f, (1.0, 0.0))
    assert np.allclose(p.gradient, [2.0, 0.0], atol=1e-6)
    assert p.gradient_norm == pytest.approx(2.0, abs=1e-6)


def test_gradient_of_rho_unit_norm():
    for m in (
        euclid(),
        build_manifold(ManifoldSpec(kind="cone", shape=0.8, domain_radius=3.0)),
        build_manifold(ManifoldSpec(kind="sphere-cap", shape=1.0, domain_radius=3.1)),
    ):
        q = m.center
        f = distance_field(m, q, Ball(q, 0.8 * m.domain_radius if m.domain_radius != math.inf else 2.0))
        x = m.frame_shift(q, np.array([0.9, 0.3]))
        p = gradient(f, x)
        assert p.gradient_norm == pytest.approx(1.0, abs=1e-3)


def test_gradient_of_rho_unit_norm_graph():
    g = graph()
    q = g.center
    f = distance_field(g, q, Ball(q, 0.9))
    idx = g.points_in_ball(q, 0.7)
    far = idx[g.distances_from(q, idx) > 0.3][:50]
    _, gn, _, valid = probe_many(f, far)
    assert valid.mean() > 0.9
    assert np.nanmedian(np.abs(gn - 1.0)) < 0.05


def test_constant_field_zero_gradient():
    m = euclid()
    f = AnalyticField(m, lambda pts: np.full(pts.shape[0], 4.2), "const", Ball((0.0, 0.0), 2.5))
    p = gradient(f, (0.3, 0.4))
    assert p.gradient_norm == pytest.approx(0.0, abs=1e-8)


def test_gradient_matches_symbolic_for_random_cubics():
    # 20 random polynomial fields of degree <= 3 on the plane
    m = euclid(dom=2.0)
    rng = np.random.default_rng(20)
    exps = [(i, j) for i in range(4) for j in range(4) if i + j <= 3]
    for _ in range(20):
        coef = rng.standard_normal(len(exps))

        def fn(pts, coef=coef):
            out = np.zeros(pts.shape[0])
            for c, (i, j) in zip(coef, exps):
                out += c * pts[:, 0] ** i * pts[:, 1] ** j
            return out

        def grad_exact(x, y, coef=coef):
            gx = sum(c * i * x ** max(i - 1, 0) * y**j for c, (i, j) in zip(coef, exps) if i)
            gy = sum(c * j * x**i * y ** max(j - 1, 0) for c, (i, j) in zip(coef, exps) if j)
            return np.array([gx, gy])

        f = AnalyticField(m, fn, "poly", Ball((0.0, 0.0), 2.0))
        x = tuple(rng.random(2) * 0.8)
        p = gradient(f, x)
        exact = grad_exact(*x)
        assert np.linalg.norm(p.gradient - exact) <= 1e-3 * max(1.0, np.linalg.norm(exact))


# ---------------------------------------------------------------- hessian deviation


def test_hessian_deviation_of_rho_squared_zero():
    m = euclid()
    f = distance_field(m, (0.0, 0.0), Ball((0.0, 0.0), 2.5), squared=True)
    assert hessian_deviation(f, (0.7, -0.2)) == pytest.approx(0.0, abs=1e-4)


def test_hessian_deviation_quartic():
    # |x|^4 at (0.5, 0): Hessian = 12 x xT + 4 |x|^2 I = diag(3, 1); ||diag(3,1)-2I||_F = sqrt(2)
    m = euclid()
    f = AnalyticField(m, lambda pts: np.sum(pts**2, axis=1) ** 2, "r4", Ball((0.0, 0.0), 2.5))
    assert hessian_deviation(f, (0.5, 0.0)) == pytest.approx(math.sqrt(2.0), abs=1e-3)


def test_hessian_deviation_scaled_rho_squared_identity():
    # a*rho^2 + c deviates by 2|a-1|*sqrt(n)
    m = euclid()
    rng = np.random.default_rng(5)
    for a, c in rng.standard_normal((5, 2)):
        f = AnalyticField(
            m, lambda pts, a=a, c=c: a * np.sum(pts**2, axis=1) + c, "arho2", Ball((0.0, 0.0), 2.5)
        )
        got = hessian_deviation(f, (0.4, 0.1))
        assert got == pytest.approx(2.0 * abs(a - 1.0) * math.sqrt(2.0), abs=2e-3 * (1 + abs(a)))


def test_cone_rho_squared_deviation_grows_toward_apex():
    # off-apex distance field: flat until the probe sees the cut ray of q
    m = build_manifold(ManifoldSpec(kind="cone", shape=0.8, domain_radius=4.0))
    q = (1.0, 0.0)
    f = distance_field(m, q, Ball(q, 3.5), squared=True)
    shadow_phi = (0.5 * m.theta) % m.theta
    devs = []
    for s in (0.6, 0.3, 0.15):
        x = (s, (shadow_phi + 0.25) % m.theta)
        devs.append(hessian_deviation(f, x, stencil=2e-3))
    assert devs[0] < 1e-3
    assert devs[-1] > devs[0]


def test_probe_invalid_near_cut_locus():
    m = build_manifold(ManifoldSpec(kind="cone", shape=0.5, domain_radius=4.0))
    q = (1.0, 0.0)
    f = distance_field(m, q, Ball(q, 3.5))
    x = (1.0, 0.5 * m.theta)  # on the cut ray of q
    _, _, _, valid = probe_many(f, [x], want_hessian=True)
    assert not valid[0]


def test_boundary_probe_invalid():
    m = euclid(dom=1.0)
    f = distance_field(m, (0.0, 0.0), Ball((0.0, 0.0), 1.0), squared=True)
    _, _, _, valid = probe_many(f, [(0.999999, 0.0)], want_hessian=False)
    assert not valid[0]


# ---------------------------------------------------------------- line integral


def test_line_integral_constant():
    m = euclid()
    f = AnalyticField(m, lambda pts: np.ones(pts.shape[0]), "one", Ball((0.0, 0.0), 2.5))
    assert line_integral(f, (0.0, 0.0), (1.5, 0.0)) == pytest.approx(1.5, abs=1e-6)


def test_line_integral_arclength():
    m = euclid()
    f = AnalyticField(m, lambda pts: pts[:, 0], "t", Ball((0.0, 0.0), 2.5))
    assert line_integral(f, (0.0, 0.0), (1.0, 0.0)) == pytest.approx(0.5, abs=1e-6)


def test_line_integral_grad_difference_zero():
    m = euclid()
    ball = Ball((0.0, 0.0), 2.5)
    rho2 = distance_field(m, (0.0, 0.0), ball, squared=True)
    diff = combine(rho2, rho2, lambda a, b: a - b, "f-rho2")
    h = gradient_norm_field(diff)
    assert line_integral(h, (0.2, 0.1), (1.0, 0.9)) == pytest.approx(0.0, abs=1e-8)


def test_line_integral_additive_under_split():
    m = build_manifold(ManifoldSpec(kind="cone", shape=0.9, domain_radius=4.0))
    f = AnalyticField(m, lambda pts: pts[:, 0] ** 2, "s2", Ball((0.0, 0.0), 4.0))
    x, y = (1.0, 0.2), (2.0, 1.1)
    seg = m.segment_points(x, y, 3)
    mid = tuple(seg[1])
    whole = line_integral(f, x, y, nodes=401)
    parts = line_integral(f, x, mid, nodes=201) + line_integral(f, mid, y, nodes=201)
    assert whole == pytest.approx(parts, abs=1e-6)


def test_line_integral_graph_edges():
    g = graph()
    rho = distance_field(g, g.center, Ball(g.center, 0.9))
    const = type(rho)(g, np.ones(g.vertex_count()), "one", Ball(g.center, 0.9))
    i = int(g.points_in_ball(g.center, 0.1)[0])
    j = int(g.points_in_ball(g.center, 0.8)[-1])
    got = line_integral(const, i, j)
    assert got == pytest.approx(g.distance(i, j), rel=1e-9)


# ---------------------------------------------------------------- mean integral


def test_mean_integral_constant():
    m = euclid()
    f = AnalyticField(m, lambda pts: np.full(pts.shape[0], 7.0), "seven", Ball((0.0, 0.0), 1.0))
    r = mean_integral(f)
    assert r.value == pytest.approx(7.0, abs=1e-12)
    assert r.excluded_fraction == 0.0


def test_mean_integral_radius_squared():
    m = euclid()
    f = AnalyticField(m, lambda pts: np.sum(pts**2, axis=1), "r2", Ball((0.0, 0.0), 1.0))
    r = mean_integral(f, count=40000)
    assert r.value == pytest.approx(0.5, rel=0.01)


def test_mean_integral_half_ball_indicator():
    m = euclid()
    f = AnalyticField(m, lambda pts: (pts[:, 0] > 0).astype(float), "half", Ball((0.0, 0.0), 1.0))
    r = mean_integral(f, count=40000)
    assert r.value == pytest.approx(0.5, abs=3.0 / math.sqrt(40000))


def test_mean_integral_linear_and_monotone():
    m = euclid()
    ball = Ball((0.0, 0.0), 1.0)
    fa = AnalyticField(m, lambda pts: pts[:, 0] ** 2, "a", ball)
    fb = AnalyticField(m, lambda pts: np.abs(pts[:, 1]), "b", ball)
    fsum = combine(fa, fb, lambda a, b: 2.0 * a + b, "2a+b")
    va = mean_integral(fa, tag="lin").value
    vb = mean_integral(fb, tag="lin").value
    vs = mean_integral(fsum, tag="lin").value
    assert vs == pytest.approx(2.0 * va + vb, rel=1e-9)
    dom = combine(fa, fb, lambda a, b: a + np.abs(b) + 0.1, "dominates")
    assert mean_integral(dom, tag="lin").value > va


def test_mean_integral_reports_excluded_mass():
    m = euclid()

    def fn(pts):
        out = np.sum(pts**2, axis=1)
        return np.where(pts[:, 0] > 0.8, np.nan, out)

    f = AnalyticField(m, fn, "gappy", Ball((0.0, 0.0), 1.0))
    r = mean_integral(f, count=20000)
    assert r.excluded_fraction > 0.01
    assert np.isfinite(r.value)
