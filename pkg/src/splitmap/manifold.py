"""Geometry providers: closed-form model spaces and a sampled geodesic-graph backend.

Two families share one interface.  Analytic providers (plane, flat cone,
round-sphere cap) answer every query in closed form and act as exact
oracles; the graph backend runs the same queries through Dijkstra over a
connectivity-radius graph sampled from an analytic base space.

Points are opaque handles: coordinate tuples on analytic backends, integer
vertex ids on the graph backend.  Callers never do arithmetic on points
directly; they go through the manifold.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree

from ._seeds import substream

KINDS = ("euclidean", "cone", "sphere-cap", "graph-sample")

# Relative tolerance for cut-locus / path-length near-ties.
TIE_RTOL = 1e-6


def unit_ball_volume(n: int) -> float:
    """Volume of the unit ball in R^n."""
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def unit_sphere_area(n: int) -> float:
    """Area of the unit sphere S^{n-1} in R^n (equals n * omega_n)."""
    return n * unit_ball_volume(n)


class GeometryError(ValueError):
    """Invalid geometric query: unknown point, empty region, out-of-domain radius."""


@dataclass(frozen=True)
class ManifoldSpec:
    """Declarative description of a geometry provider.

    shape is the cone angle fraction alpha in (0, 1] for kind="cone" and the
    sphere radius for kind="sphere-cap"; it is ignored for euclidean.  For
    kind="graph-sample" the base analytic space is given by base_kind with
    the same dimension/shape.
    """

    kind: str
    dimension: int = 2
    shape: float = 1.0
    domain_radius: float | None = None
    sample_count: int = 0
    connectivity_radius: float | None = None
    seed: int = 0
    base_kind: str = "euclidean"

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise GeometryError(f"unknown manifold kind {self.kind!r}")
        if self.dimension < 2:
            raise GeometryError("dimension must be >= 2")
        if self.kind == "cone" or (self.kind == "graph-sample" and self.base_kind == "cone"):
            if not (0.0 < self.shape <= 1.0):
                raise GeometryError("cone angle fraction must lie in (0, 1]")
            if self.dimension != 2:
                raise GeometryError("cone backend is two-dimensional")
        if self.kind == "sphere-cap" or (self.kind == "graph-sample" and self.base_kind == "sphere-cap"):
            if self.shape <= 0.0:
                raise GeometryError("sphere radius must be positive")
        if self.kind == "graph-sample":
            if self.sample_count < 1:
                raise GeometryError("graph-sample needs sample_count >= 1")
            if self.base_kind not in ("euclidean", "cone", "sphere-cap"):
                raise GeometryError(f"unknown base kind {self.base_kind!r}")
        if self.domain_radius is not None and self.domain_radius <= 0.0:
            raise GeometryError("domain_radius must be positive")


@dataclass(frozen=True)
class GeodesicSegment:
    """One minimizing segment with an ordered waypoint polyline."""

    start: tuple | int
    end: tuple | int
    waypoints: tuple
    length: float
    unique: bool


@dataclass(frozen=True)
class UnitVectorSample:
    """A unit tangent vector (x, v) drawn from the sphere bundle over a ball.

    On analytic backends `direction` holds unit coefficients in the
    orthonormal frame at `base`.  On the graph backend the direction is the
    outgoing shortest path toward `target`.
    """

    base: tuple | int
    direction: tuple
    weight: float
    target: int | None = None


@dataclass(frozen=True)
class RayExtension:
    """Result of extending the segment q -> x to a target sphere around q."""

    point: tuple | int | None
    well_defined: bool
    reason: str = ""


@dataclass(frozen=True)
class BallVolume:
    volume: float
    ratio: float


def build_manifold(spec: ManifoldSpec):
    """Construct the geometry provider described by `spec`."""
    spec.validate()
    if spec.kind == "euclidean":
        return EuclideanManifold(spec)
    if spec.kind == "cone":
        return ConeManifold(spec)
    if spec.kind == "sphere-cap":
        return SphereCapManifold(spec)
    return GraphManifold(spec)


class _AnalyticManifold:
    """Shared plumbing for closed-form backends."""

    is_graph = False

    def __init__(self, spec: ManifoldSpec):
        self.spec = spec
        self.n = spec.dimension

    # -- conversions ----------------------------------------------------

    def as_array(self, pts) -> np.ndarray:
        a = np.asarray(pts, dtype=float)
        if a.ndim == 1:
            a = a[None, :]
        return a

    def as_points(self, arr: np.ndarray) -> list[tuple]:
        return [tuple(row) for row in np.atleast_2d(arr)]

    # -- generic helpers on top of backend primitives --------------------

    def distance(self, x, y) -> float:
        return float(self.distances_from(x, self.as_array([y]))[0])

    def segment(self, x, y, waypoints: int = 65) -> GeodesicSegment:
        if x == y:
            raise GeometryError("segment endpoints coincide")
        pts = self.segment_points(x, y, waypoints)
        length = self.distance(x, y)
        return GeodesicSegment(
            start=x,
            end=y,
            waypoints=tuple(self.as_points(pts)),
            length=length,
            unique=self.segment_unique(x, y),
        )

    def sample_ball(self, c, r: float, count: int, tag: str = "ball") -> np.ndarray:
        """`count` quasi-uniform (volume-weighted) sample coordinates in B_r(c)."""
        if count < 1:
            raise GeometryError("sample count must be >= 1")
        rng = substream(self.spec.seed, tag)
        return self._sample_ball_arr(c, r, count, rng)

    def point_weight(self, c, r: float, count: int) -> float:
        return self.ball_volume(c, r).volume / count

    def sample_unit_bundle(self, c, r: float, count: int, seed: int) -> list[UnitVectorSample]:
        if count < 1:
            raise GeometryError("empty unit-bundle request")
        rng = substream(seed, "unit-bundle")
        bases = self._sample_ball_arr(c, r, count, rng)
        dirs = rng.standard_normal((count, self.n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        w = self.ball_volume(c, r).volume / count
        return [
            UnitVectorSample(base=tuple(bases[i]), direction=tuple(dirs[i]), weight=w)
            for i in range(count)
        ]

    def geodesic_flow(self, sample: UnitVectorSample, s: float):
        if s < 0:
            raise GeometryError("flow parameter must be nonnegative")
        out = self.frame_shift(sample.base, s * np.asarray(sample.direction, dtype=float))
        if not self.contains(out):
            raise GeometryError("geodesic flow exits the provider domain")
        return out

    def flow_many(self, bases: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        """Vectorized exp: coeffs[i] in the frame at bases[i]."""
        return self.frame_shift_many(bases, coeffs)

    def ball_volume(self, c, r: float) -> BallVolume:
        if r <= 0:
            raise GeometryError("ball radius must be positive")
        self._check_ball_in_domain(c, r)
        v = self._ball_volume_value(c, r)
        return BallVolume(volume=v, ratio=v / (unit_ball_volume(self.n) * r**self.n))

    def interior_margin(self, x) -> float:
        """Distance from x to the domain boundary (inf for boundaryless domains)."""
        raise NotImplementedError

    def contains(self, x, margin: float = 0.0) -> bool:
        return self.interior_margin(x) >= -1e-12 + margin

    def _check_ball_in_domain(self, c, r: float) -> None:
        if r > self.interior_margin(c) + 1e-12:
            raise GeometryError("ball radius exceeds the provider domain")


class EuclideanManifold(_AnalyticManifold):
    """R^n, domain = closed ball of `domain_radius` around the origin."""

    kind = "euclidean"

    def __init__(self, spec: ManifoldSpec):
        super().__init__(spec)
        self.domain_radius = spec.domain_radius if spec.domain_radius else 3.0

    @property
    def center(self) -> tuple:
        return tuple([0.0] * self.n)

    def interior_margin(self, x) -> float:
        return self.domain_radius - float(np.linalg.norm(np.asarray(x, dtype=float)))

    def distances_from(self, x, pts: np.ndarray) -> np.ndarray:
        return np.linalg.norm(pts - np.asarray(x, dtype=float), axis=-1)

    def segment_points(self, x, y, k: int) -> np.ndarray:
        t = np.linspace(0.0, 1.0, k)[:, None]
        a = np.asarray(x, dtype=float)
        b = np.asarray(y, dtype=float)
        return a + t * (b - a)

    def segment_points_batch(self, X: np.ndarray, Y: np.ndarray, k: int) -> np.ndarray:
        t = np.linspace(0.0, 1.0, k)[None, :, None]
        return X[:, None, :] + t * (Y - X)[:, None, :]

    def segment_unique(self, x, y) -> bool:
        return True

    def _ball_volume_value(self, c, r: float) -> float:
        return unit_ball_volume(self.n) * r**self.n

    def sphere_area(self, c, s: float) -> float:
        if s <= 0:
            raise GeometryError("sphere radius must be positive")
        self._check_ball_in_domain(c, s)
        return unit_sphere_area(self.n) * s ** (self.n - 1)

    def _sample_ball_arr(self, c, r: float, count: int, rng) -> np.ndarray:
        self._check_ball_in_domain(c, r)
        d = rng.standard_normal((count, self.n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        u = rng.random(count) ** (1.0 / self.n)
        return np.asarray(c, dtype=float) + r * u[:, None] * d

    def frame_shift(self, x, coeffs: np.ndarray):
        return tuple(np.asarray(x, dtype=float) + np.asarray(coeffs, dtype=float))

    def frame_shift_many(self, bases: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        return bases + coeffs

    def log_coords(self, x, pts: np.ndarray) -> np.ndarray:
        return pts - np.asarray(x, dtype=float)

    def extend_ray(self, q, x, target_radius: float) -> RayExtension:
        qa = np.asarray(q, dtype=float)
        xa = np.asarray(x, dtype=float)
        rho = float(np.linalg.norm(xa - qa))
        if rho == 0.0:
            raise GeometryError("cannot project the base point itself")
        out = qa + target_radius * (xa - qa) / rho
        if not self.contains(tuple(out)):
            return RayExtension(None, False, "out-of-domain")
        return RayExtension(tuple(out), True)

    def extend_rays(self, q, X: np.ndarray, target_radius: float):
        qa = np.asarray(q, dtype=float)
        rel = X - qa
        rho = np.linalg.norm(rel, axis=1)
        pts = qa + target_radius * rel / np.maximum(rho, 1e-300)[:, None]
        ok = np.linalg.norm(pts, axis=1) <= self.domain_radius + 1e-12
        ok &= rho > 0
        return pts, ok

    def cut_margin(self, q, x) -> float:
        return math.inf

    def cut_margins(self, q, pts: np.ndarray) -> np.ndarray:
        return np.full(pts.shape[0], np.inf)

    def pair_distances(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        return np.linalg.norm(A - B, axis=1)


class ConeManifold(_AnalyticManifold):
    """Flat 2-d cone of total angle 2*pi*alpha; points are (s, phi) with phi in [0, theta).

    All queries run in developed (unrolled) charts.  For a chart centered on
    angular coordinate phi0 the map (s, phi) -> s * e^{i psi}, psi the reduced
    signed angle phi - phi0 in [-theta/2, theta/2], is an isometry away from the
    cut ray at phi0 + theta/2, and geodesic distance equals planar chart
    distance for every pair.  alpha = 1 degenerates to the plane in polar
    coordinates and is treated cut-free.
    """

    kind = "cone"

    def __init__(self, spec: ManifoldSpec):
        super().__init__(spec)
        self.alpha = spec.shape
        self.theta = 2.0 * math.pi * self.alpha
        self.domain_radius = spec.domain_radius if spec.domain_radius else 3.0
        self._is_plane = self.alpha >= 1.0 - 1e-12

    @property
    def center(self) -> tuple:
        return (0.0, 0.0)

    def interior_margin(self, x) -> float:
        return self.domain_radius - float(x[0])

    def _reduce(self, dphi):
        """Signed angle reduced to [-theta/2, theta/2)."""
        return (np.asarray(dphi) + 0.5 * self.theta) % self.theta - 0.5 * self.theta

    def _chart(self, ref_phi: float, pts: np.ndarray) -> np.ndarray:
        """Develop points into the plane chart cut opposite to ref_phi."""
        psi = self._reduce(pts[:, 1] - ref_phi)
        return np.stack([pts[:, 0] * np.cos(psi), pts[:, 0] * np.sin(psi)], axis=1)

    def _from_chart(self, ref_phi: float, z: np.ndarray) -> np.ndarray:
        s = np.linalg.norm(z, axis=1)
        psi = np.arctan2(z[:, 1], z[:, 0])
        phi = (ref_phi + psi) % self.theta
        return np.stack([s, phi], axis=1)

    def distances_from(self, x, pts: np.ndarray) -> np.ndarray:
        dpsi = self._reduce(pts[:, 1] - x[1])
        s1 = float(x[0])
        s2 = pts[:, 0]
        d2 = s1 * s1 + s2 * s2 - 2.0 * s1 * s2 * np.cos(dpsi)
        return np.sqrt(np.maximum(d2, 0.0))

    def segment_points(self, x, y, k: int) -> np.ndarray:
        return self.segment_points_batch(self.as_array([x]), self.as_array([y]), k)[0]

    def segment_points_batch(self, X: np.ndarray, Y: np.ndarray, k: int) -> np.ndarray:
        # Develop each pair in the chart centered on X's angle; the straight
        # planar segment realizes the geodesic because the reduced separation
        # never exceeds theta/2 <= pi.
        psi = self._reduce(Y[:, 1] - X[:, 1])
        ax = X[:, 0]
        bx = Y[:, 0] * np.cos(psi)
        by = Y[:, 0] * np.sin(psi)
        t = np.linspace(0.0, 1.0, k)[None, :]
        zx = ax[:, None] * (1.0 - t) + bx[:, None] * t
        zy = by[:, None] * t
        s = np.hypot(zx, zy)
        ang = np.arctan2(zy, zx)
        phi = (X[:, 1][:, None] + ang) % self.theta
        return np.stack([s, phi], axis=2)

    def segment_unique(self, x, y) -> bool:
        if self._is_plane:
            return True
        if x[0] < 1e-15 or y[0] < 1e-15:
            return True
        dpsi = abs(float(self._reduce(y[1] - x[1])))
        return dpsi < 0.5 * self.theta * (1.0 - TIE_RTOL)

    def _excluded_angle(self, sc: float, u: float) -> float:
        """Angular measure of the chart circle |z - (sc, 0)| = u outside the wedge."""
        if self._is_plane:
            return 0.0
        w = 0.5 * self.theta
        m = sc * math.sin(w) / u
        if m >= 1.0:
            return 0.0
        lo = w + math.asin(m)
        hi = w + math.pi - math.asin(m)
        return 2.0 * max(0.0, min(math.pi, hi) - lo)

    def sphere_area(self, c, u: float) -> float:
        if u <= 0:
            raise GeometryError("sphere radius must be positive")
        self._check_ball_in_domain(c, u)
        return u * (2.0 * math.pi - self._excluded_angle(float(c[0]), u))

    def _ball_volume_value(self, c, r: float) -> float:
        # Integrate the exact circle length over radii; the integrand has a
        # single kink at u = sc*sin(theta/2), so split there.
        sc = float(c[0])
        w = 0.5 * self.theta
        knot = sc * math.sin(w)
        pieces = []
        if 0.0 < knot < r:
            pieces = [(0.0, knot), (knot, r)]
        else:
            pieces = [(0.0, r)]
        total = 0.0
        for a, b in pieces:
            u = np.linspace(a, b, 2001)
            ex = np.array([self._excluded_angle(sc, max(ui, 1e-300)) for ui in u])
            total += np.trapezoid(u * (2.0 * math.pi - ex), u)
        return float(total)

    def _sample_ball_arr(self, c, r: float, count: int, rng) -> np.ndarray:
        self._check_ball_in_domain(c, r)
        sc = float(c[0])
        out = np.empty((0, 2))
        half = 0.5 * self.theta
        while out.shape[0] < count:
            m = max(2 * (count - out.shape[0]), 256)
            ang = rng.random(m) * 2.0 * math.pi
            rad = r * np.sqrt(rng.random(m))
            zx = sc + rad * np.cos(ang)
            zy = rad * np.sin(ang)
            psi = np.arctan2(zy, zx)
            keep = np.abs(psi) <= half
            z = np.stack([zx[keep], zy[keep]], axis=1)
            out = np.vstack([out, self._from_chart(float(c[1]), z)])
        return out[:count]

    def frame_shift(self, x, coeffs: np.ndarray):
        return tuple(self.frame_shift_many(self.as_array([x]), np.asarray(coeffs, dtype=float)[None, :])[0])

    def frame_shift_many(self, bases: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        # Frame at (s, phi): e1 radial (away from apex), e2 angular.  In the
        # chart centered on each base angle the base sits at (s, 0) and the
        # frame is the planar standard frame.
        z = np.stack([bases[:, 0] + coeffs[:, 0], coeffs[:, 1]], axis=1)
        s = np.linalg.norm(z, axis=1)
        psi = np.arctan2(z[:, 1], z[:, 0])
        phi = (bases[:, 1] + psi) % self.theta
        return np.stack([s, phi], axis=1)

    def log_coords(self, x, pts: np.ndarray) -> np.ndarray:
        psi = self._reduce(pts[:, 1] - x[1])
        zx = pts[:, 0] * np.cos(psi) - float(x[0])
        zy = pts[:, 0] * np.sin(psi)
        return np.stack([zx, zy], axis=1)

    def extend_rays(self, q, X: np.ndarray, target_radius: float):
        """Extend segments q -> x to the sphere of target_radius around q.

        In q's chart the extension is the planar ray; it is minimizing iff the
        endpoint's reduced angle stays strictly inside the wedge.
        """
        sq = float(q[0])
        z = self._chart(float(q[1]), X)
        rel = z - np.array([sq, 0.0])
        rho = np.linalg.norm(rel, axis=1)
        safe = np.maximum(rho, 1e-300)
        zstar = np.array([sq, 0.0]) + target_radius * rel / safe[:, None]
        psi = np.arctan2(zstar[:, 1], zstar[:, 0])
        sstar = np.linalg.norm(zstar, axis=1)
        ok = rho > 0
        if not self._is_plane:
            half = 0.5 * self.theta
            ok &= np.abs(psi) < half * (1.0 - TIE_RTOL)
            # the source segment itself must be unique
            ok &= np.abs(self._reduce(X[:, 1] - q[1])) < half * (1.0 - TIE_RTOL)
        ok &= sstar <= self.domain_radius + 1e-12
        pts = self._from_chart(float(q[1]), zstar)
        return pts, ok

    def extend_ray(self, q, x, target_radius: float) -> RayExtension:
        xa = self.as_array([x])
        if float(self.distances_from(q, xa)[0]) == 0.0:
            raise GeometryError("cannot project the base point itself")
        pts, ok = self.extend_rays(q, xa, target_radius)
        if not ok[0]:
            sstar = pts[0][0]
            reason = "out-of-domain" if sstar > self.domain_radius + 1e-12 else "not-minimizing"
            return RayExtension(None, False, reason)
        return RayExtension(tuple(pts[0]), True)

    def cut_margin(self, q, x) -> float:
        return float(self.cut_margins(q, self.as_array([x]))[0])

    def cut_margins(self, q, pts: np.ndarray) -> np.ndarray:
        if self._is_plane:
            return np.full(pts.shape[0], np.inf)
        psi = np.abs(self._reduce(pts[:, 1] - q[1]))
        # distance to the cut ray of q, including the apex itself
        ang = np.maximum(0.5 * self.theta - psi, 0.0)
        return np.minimum(pts[:, 0] * np.sin(np.minimum(ang, 0.5 * math.pi)), pts[:, 0])

    def pair_distances(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        dpsi = self._reduce(B[:, 1] - A[:, 1])
        d2 = A[:, 0] ** 2 + B[:, 0] ** 2 - 2.0 * A[:, 0] * B[:, 0] * np.cos(dpsi)
        return np.sqrt(np.maximum(d2, 0.0))


class SphereCapManifold(_AnalyticManifold):
    """Round n-sphere of radius R; points are unit (n+1)-vectors.

    The domain is the cap of geodesic radius domain_radius around the north
    pole (up to the full sphere).
    """

    kind = "sphere-cap"

    def __init__(self, spec: ManifoldSpec):
        super().__init__(spec)
        self.radius = spec.shape
        max_dom = math.pi * self.radius
        self.domain_radius = min(spec.domain_radius, max_dom) if spec.domain_radius else 0.5 * max_dom
        pole = np.zeros(self.n + 1)
        pole[-1] = 1.0
        self._pole = pole

    @property
    def center(self) -> tuple:
        return tuple(self._pole)

    def interior_margin(self, x) -> float:
        if self.domain_radius >= math.pi * self.radius * (1.0 - 1e-12):
            return math.inf
        return self.domain_radius - self.distance_to_pole(x)

    def distance_to_pole(self, x) -> float:
        return float(self.distances_from(tuple(self._pole), self.as_array([x]))[0])

    def distances_from(self, x, pts: np.ndarray) -> np.ndarray:
        # chord form keeps full precision at both ends, unlike arccos(dot)
        xa = np.asarray(x, dtype=float)
        dots = pts @ xa
        near = np.clip(0.5 * np.linalg.norm(pts - xa, axis=-1), 0.0, 1.0)
        far = np.clip(0.5 * np.linalg.norm(pts + xa, axis=-1), 0.0, 1.0)
        ang = np.where(dots >= 0.0, 2.0 * np.arcsin(near), math.pi - 2.0 * np.arcsin(far))
        return self.radius * ang

    def _tangent_toward(self, x: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Unit tangents at x pointing toward each row of Y (undefined when parallel)."""
        c = np.clip(Y @ x, -1.0, 1.0)[:, None]
        w = Y - c * x
        nrm = np.linalg.norm(w, axis=1, keepdims=True)
        return w / np.maximum(nrm, 1e-300)

    def segment_points(self, x, y, k: int) -> np.ndarray:
        return self.segment_points_batch(self.as_array([x]), self.as_array([y]), k)[0]

    def segment_points_batch(self, X: np.ndarray, Y: np.ndarray, k: int) -> np.ndarray:
        dots = np.clip(np.sum(X * Y, axis=1), -1.0, 1.0)
        ang = np.arccos(dots)[:, None]
        t = np.linspace(0.0, 1.0, k)[None, :]
        sin_ang = np.maximum(np.sin(ang), 1e-300)
        wa = np.sin((1.0 - t) * ang) / sin_ang
        wb = np.sin(t * ang) / sin_ang
        pts = wa[:, :, None] * X[:, None, :] + wb[:, :, None] * Y[:, None, :]
        return pts / np.linalg.norm(pts, axis=2, keepdims=True)

    def segment_unique(self, x, y) -> bool:
        d = self.distance(x, y)
        return d < math.pi * self.radius * (1.0 - TIE_RTOL)

    def _cap_volume(self, t: float) -> float:
        """Volume of a geodesic cap of radius t."""
        if self.n == 2:
            return 2.0 * math.pi * self.radius**2 * (1.0 - math.cos(t / self.radius))
        u = np.linspace(0.0, t / self.radius, 4001)
        return unit_sphere_area(self.n) * self.radius**self.n * float(np.trapezoid(np.sin(u) ** (self.n - 1), u))

    def _ball_volume_value(self, c, r: float) -> float:
        return self._cap_volume(r)

    def sphere_area(self, c, s: float) -> float:
        if s <= 0:
            raise GeometryError("sphere radius must be positive")
        self._check_ball_in_domain(c, s)
        return unit_sphere_area(self.n) * (self.radius * math.sin(s / self.radius)) ** (self.n - 1)

    def _frames_at(self, X: np.ndarray) -> np.ndarray:
        """Deterministic orthonormal tangent frames, shape (m, n, d)."""
        m, d = X.shape
        A = np.concatenate(
            [X[:, :, None], np.broadcast_to(np.eye(d)[None, :, :], (m, d, d))], axis=2
        )
        Q, _ = np.linalg.qr(A)
        return np.transpose(Q[:, :, 1 : self.n + 1], (0, 2, 1))

    def _frame_at(self, x: np.ndarray) -> np.ndarray:
        return self._frames_at(x[None, :])[0]

    def _sample_ball_arr(self, c, r: float, count: int, rng) -> np.ndarray:
        self._check_ball_in_domain(c, r)
        ca = np.asarray(c, dtype=float)
        frame = self._frame_at(ca)
        # geodesic radius by inverse CDF of sin^{n-1}
        grid = np.linspace(0.0, r / self.radius, 2049)
        dens = np.sin(grid) ** (self.n - 1)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
        cdf /= cdf[-1]
        t = np.interp(rng.random(count), cdf, grid) * self.radius
        d = rng.standard_normal((count, self.n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        tang = d @ frame
        pts = np.cos(t / self.radius)[:, None] * ca + np.sin(t / self.radius)[:, None] * tang
        return pts / np.linalg.norm(pts, axis=1, keepdims=True)

    def frame_shift(self, x, coeffs: np.ndarray):
        return tuple(self.frame_shift_many(self.as_array([x]), np.asarray(coeffs, dtype=float)[None, :])[0])

    def frame_shift_many(self, bases: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        t = np.linalg.norm(coeffs, axis=1)
        safe = np.maximum(t, 1e-300)
        frames = self._frames_at(bases)
        v = np.einsum("mi,mid->md", coeffs / safe[:, None], frames)
        out = np.cos(t / self.radius)[:, None] * bases + np.sin(t / self.radius)[:, None] * v
        out = np.where(t[:, None] < 1e-300, bases, out)
        return out / np.linalg.norm(out, axis=1, keepdims=True)

    def log_coords(self, x, pts: np.ndarray) -> np.ndarray:
        xa = np.asarray(x, dtype=float)
        frame = self._frame_at(xa)
        th = np.arccos(np.clip(pts @ xa, -1.0, 1.0))
        tang = self._tangent_toward(xa, pts)
        return (self.radius * th)[:, None] * (tang @ frame.T)

    def extend_rays(self, q, X: np.ndarray, target_radius: float):
        qa = np.asarray(q, dtype=float)
        rho = self.distances_from(q, X)
        tang = self._tangent_toward(qa, X)
        a = target_radius / self.radius
        pts = math.cos(a) * qa + math.sin(a) * tang
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        ok = rho > 0
        ok &= target_radius < math.pi * self.radius * (1.0 - TIE_RTOL)
        if self.domain_radius < math.pi * self.radius * (1.0 - 1e-12):
            ok &= self.distances_from(tuple(self._pole), pts) <= self.domain_radius + 1e-12
        return pts, ok

    def extend_ray(self, q, x, target_radius: float) -> RayExtension:
        xa = self.as_array([x])
        if float(self.distances_from(q, xa)[0]) == 0.0:
            raise GeometryError("cannot project the base point itself")
        pts, ok = self.extend_rays(q, xa, target_radius)
        if not ok[0]:
            reason = "not-minimizing" if target_radius >= math.pi * self.radius * (1.0 - TIE_RTOL) else "out-of-domain"
            return RayExtension(None, False, reason)
        return RayExtension(tuple(pts[0]), True)

    def cut_margin(self, q, x) -> float:
        return math.pi * self.radius - float(self.distances_from(q, self.as_array([x]))[0])

    def cut_margins(self, q, pts: np.ndarray) -> np.ndarray:
        return math.pi * self.radius - self.distances_from(q, pts)

    def pair_distances(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        dots = np.sum(A * B, axis=1)
        near = np.clip(0.5 * np.linalg.norm(B - A, axis=1), 0.0, 1.0)
        far = np.clip(0.5 * np.linalg.norm(B + A, axis=1), 0.0, 1.0)
        ang = np.where(dots >= 0.0, 2.0 * np.arcsin(near), math.pi - 2.0 * np.arcsin(far))
        return self.radius * ang


class GraphManifold:
    """Geodesic graph over points sampled from an analytic base space.

    Vertices carry uniform volume weights; edges join pairs within the
    connectivity radius with true base-space geodesic lengths.  Only the
    largest connected component is kept.
    """

    kind = "graph-sample"
    is_graph = True

    def __init__(self, spec: ManifoldSpec):
        self.spec = spec
        self.n = spec.dimension
        base_spec = ManifoldSpec(
            kind=spec.base_kind,
            dimension=spec.dimension,
            shape=spec.shape,
            domain_radius=spec.domain_radius,
            seed=spec.seed,
        )
        self.base = build_manifold(base_spec)
        self.domain_radius = self.base.domain_radius
        raw = self.base.sample_ball(self.base.center, self.domain_radius, spec.sample_count, tag="graph-vertices")
        domain_volume = self.base.ball_volume(self.base.center, self.domain_radius).volume
        if spec.connectivity_radius:
            h = spec.connectivity_radius
        else:
            # 3x the mean sample spacing; below that, shortest-path stretch
            # breaks the 3% distance-consistency target at desk sample counts
            h = 3.0 * (domain_volume / spec.sample_count) ** (1.0 / self.n)
        self.connectivity_radius = h
        coords, keep = self._connect(raw, h)
        if keep.size < raw.shape[0]:
            warnings.warn(
                f"graph-sample: kept largest component with {keep.size} of {raw.shape[0]} vertices",
                stacklevel=2,
            )
        self.coords = coords
        self.weight = domain_volume / spec.sample_count
        self._dist_cache: dict[int, np.ndarray] = {}
        self._pred_cache: dict[int, np.ndarray] = {}
        self._center = int(np.argmin(self.base.distances_from(self.base.center, self.coords)))

    # -- construction -----------------------------------------------------

    def _embed(self, pts: np.ndarray) -> np.ndarray:
        """Embed base points so that chordal distance <= geodesic distance."""
        if self.base.kind == "euclidean":
            return pts
        if self.base.kind == "sphere-cap":
            return self.base.radius * pts
        a = self.base.alpha
        s, phi = pts[:, 0], pts[:, 1]
        if a >= 1.0 - 1e-12:
            return np.stack([s * np.cos(phi), s * np.sin(phi)], axis=1)
        return np.stack(
            [a * s * np.cos(phi / a), a * s * np.sin(phi / a), s * math.sqrt(1.0 - a * a)],
            axis=1,
        )

    def _connect(self, pts: np.ndarray, h: float):
        emb = self._embed(pts)
        tree = cKDTree(emb)
        pairs = tree.query_pairs(h, output_type="ndarray")
        self._emb_all = emb
        if pairs.size:
            d = self.base.pair_distances(pts[pairs[:, 0]], pts[pairs[:, 1]])
            keep = d <= h
            pairs, d = pairs[keep], d[keep]
        else:
            d = np.empty(0)
        m = pts.shape[0]
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]]) if pairs.size else np.empty(0, dtype=int)
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]]) if pairs.size else np.empty(0, dtype=int)
        vals = np.concatenate([d, d]) if pairs.size else np.empty(0)
        adj = csr_matrix((vals, (rows, cols)), shape=(m, m))
        ncomp, labels = connected_components(adj, directed=False)
        if ncomp > 1:
            counts = np.bincount(labels)
            main = int(np.argmax(counts))
            keep_idx = np.flatnonzero(labels == main)
        else:
            keep_idx = np.arange(m)
        remap = -np.ones(m, dtype=int)
        remap[keep_idx] = np.arange(keep_idx.size)
        if pairs.size:
            sel = (remap[pairs[:, 0]] >= 0) & (remap[pairs[:, 1]] >= 0)
            pairs, d = pairs[sel], d[sel]
            rows = np.concatenate([remap[pairs[:, 0]], remap[pairs[:, 1]]])
            cols = np.concatenate([remap[pairs[:, 1]], remap[pairs[:, 0]]])
            vals = np.concatenate([d, d])
            self.adjacency = csr_matrix((vals, (rows, cols)), shape=(keep_idx.size, keep_idx.size))
        else:
            self.adjacency = csr_matrix((keep_idx.size, keep_idx.size))
        self.mean_edge_length = float(vals.mean()) if vals.size else h
        return pts[keep_idx], keep_idx

    # -- queries ----------------------------------------------------------

    @property
    def center(self) -> int:
        return self._center

    def vertex_count(self) -> int:
        return self.coords.shape[0]

    def _check_vertex(self, x) -> int:
        i = int(x)
        if not (0 <= i < self.coords.shape[0]):
            raise GeometryError(f"unknown point id {x!r}")
        return i

    def _dists(self, src: int) -> np.ndarray:
        if src not in self._dist_cache:
            d, pred = dijkstra(self.adjacency, indices=src, return_predecessors=True)
            self._dist_cache[src] = d
            self._pred_cache[src] = pred
            if len(self._dist_cache) > 64:
                old = next(iter(self._dist_cache))
                if old != src:
                    self._dist_cache.pop(old)
                    self._pred_cache.pop(old)
        return self._dist_cache[src]

    def distance(self, x, y) -> float:
        i, j = self._check_vertex(x), self._check_vertex(y)
        d = float(self._dists(i)[j])
        if not math.isfinite(d):
            raise GeometryError("disconnected pair")
        return d

    def distances_from(self, x, idx) -> np.ndarray:
        i = self._check_vertex(x)
        idx = np.asarray(idx, dtype=int)
        return self._dists(i)[idx]

    def interior_margin(self, x) -> float:
        i = self._check_vertex(x)
        return self.base.interior_margin(tuple(self.coords[i]))

    def contains(self, x, margin: float = 0.0) -> bool:
        return self.interior_margin(x) >= -1e-12 + margin

    def _path(self, i: int, j: int) -> list[int]:
        self._dists(i)
        pred = self._pred_cache[i]
        path = [j]
        while path[-1] != i:
            prev = pred[path[-1]]
            if prev < 0:
                raise GeometryError("disconnected pair")
            path.append(int(prev))
        return path[::-1]

    def _second_arrival_tied(self, src: int, v: int) -> bool:
        """True when two distinct last edges reach v at nearly the shortest length."""
        d = self._dists(src)
        row = self.adjacency.getrow(v)
        nbrs, w = row.indices, row.data
        if nbrs.size < 2:
            return False
        arriv = d[nbrs] + w
        order = np.argsort(arriv)
        best, second = arriv[order[0]], arriv[order[1]]
        return second <= best * (1.0 + TIE_RTOL)

    def segment(self, x, y, waypoints: int | None = None) -> GeodesicSegment:
        i, j = self._check_vertex(x), self._check_vertex(y)
        if i == j:
            raise GeometryError("segment endpoints coincide")
        path = self._path(i, j)
        length = self.distance(i, j)
        unique = not self._second_arrival_tied(i, j)
        return GeodesicSegment(start=i, end=j, waypoints=tuple(path), length=length, unique=unique)

    def ball_volume(self, c, r: float) -> BallVolume:
        if r <= 0:
            raise GeometryError("ball radius must be positive")
        if r > self.base.interior_margin(tuple(self.coords[self._check_vertex(c)])) + 1e-12:
            raise GeometryError("ball radius exceeds the provider domain")
        d = self._dists(self._check_vertex(c))
        v = self.weight * float(np.count_nonzero(d <= r))
        return BallVolume(volume=v, ratio=v / (unit_ball_volume(self.n) * r**self.n))

    def sphere_area(self, c, s: float) -> float:
        if s <= 0:
            raise GeometryError("sphere radius must be positive")
        h = 2.0 * self.mean_edge_length
        d = self._dists(self._check_vertex(c))
        shell = np.count_nonzero((d > s - 0.5 * h) & (d <= s + 0.5 * h))
        return self.weight * shell / h

    def points_in_ball(self, c, r: float) -> np.ndarray:
        d = self._dists(self._check_vertex(c))
        return np.flatnonzero(d <= r)

    def sample_ball(self, c, r: float, count: int, tag: str = "ball") -> np.ndarray:
        """Vertex ids drawn uniformly (with replacement if needed) from the ball."""
        idx = self.points_in_ball(c, r)
        if idx.size == 0:
            raise GeometryError("empty region")
        rng = substream(self.spec.seed, tag)
        if count >= idx.size:
            return idx
        return np.sort(rng.choice(idx, size=count, replace=False))

    def sample_unit_bundle(self, c, r: float, count: int, seed: int) -> list[UnitVectorSample]:
        if count < 1:
            raise GeometryError("empty unit-bundle request")
        idx = self.points_in_ball(c, r)
        if idx.size == 0:
            raise GeometryError("empty region")
        rng = substream(seed, "unit-bundle")
        bases = rng.choice(idx, size=count, replace=True)
        w = self.ball_volume(c, r).volume / count
        out = []
        for b in bases:
            # a uniformly drawn far target fixes the outgoing shortest-path direction
            far = int(rng.choice(idx))
            if far == int(b):
                continue
            out.append(UnitVectorSample(base=int(b), direction=(), weight=w, target=far))
        return out

    def geodesic_flow(self, sample: UnitVectorSample, s: float):
        if s < 0:
            raise GeometryError("flow parameter must be nonnegative")
        i = self._check_vertex(sample.base)
        t = self._check_vertex(sample.target)
        path = self._path(i, t)
        acc = 0.0
        for a, b in zip(path[:-1], path[1:]):
            step = float(self.adjacency[a, b])
            if acc + step >= s:
                return b if (s - acc) > 0.5 * step else a
            acc += step
        if acc < s - 2.0 * self.mean_edge_length:
            raise GeometryError("geodesic flow exits the shortest-path tree")
        return path[-1]

    def _children(self, src: int) -> list[list[int]]:
        self._dists(src)
        pred = self._pred_cache[src]
        kids: list[list[int]] = [[] for _ in range(self.coords.shape[0])]
        for v, p in enumerate(pred):
            if p >= 0:
                kids[p].append(v)
        return kids

    def extend_ray(self, q, x, target_radius: float) -> RayExtension:
        """Greedy straightest forward walk from x away from q.

        Each step picks the neighbor with the least detour increment
        d(q, cur) + w(cur, nbr) - d(q, nbr); the extension counts as
        minimizing when the accumulated detour at the target shell stays
        within discretization noise.
        """
        qi, xi = self._check_vertex(q), self._check_vertex(x)
        if qi == xi:
            raise GeometryError("cannot project the base point itself")
        d = self._dists(qi)
        tied = self._second_arrival_tied(qi, xi)
        shell = 1.5 * self.mean_edge_length
        if d[xi] > target_radius + shell:
            # target sphere crossed before x: pick the path vertex closest to it
            path = self._path(qi, xi)
            k = int(np.argmin(np.abs(d[np.asarray(path)] - target_radius)))
            if tied:
                return RayExtension(int(path[k]), False, "non-unique-segment")
            return RayExtension(int(path[k]), True)
        cur = xi
        walked = float(d[xi])
        guard = self.coords.shape[0]
        while d[cur] < target_radius - shell and guard > 0:
            guard -= 1
            row = self.adjacency.getrow(cur)
            nbrs, w = row.indices, row.data
            fwd = d[nbrs] > d[cur]
            if not np.any(fwd):
                return RayExtension(None, False, "out-of-domain")
            detour = d[cur] + w[fwd] - d[nbrs[fwd]]
            order = np.lexsort((nbrs[fwd], -d[nbrs[fwd]], np.round(detour / (1e-9 * self.mean_edge_length))))
            pick = int(np.flatnonzero(fwd)[order[0]])
            walked += float(w[pick])
            cur = int(nbrs[pick])
        if d[cur] < target_radius - shell:
            return RayExtension(None, False, "out-of-domain")
        detour_total = walked - float(d[cur])
        if detour_total > max(4.0 * self.mean_edge_length, 0.03 * target_radius):
            return RayExtension(int(cur), False, "not-minimizing")
        if tied:
            return RayExtension(int(cur), False, "non-unique-segment")
        return RayExtension(int(cur), True)

    def log_coords(self, x, idx) -> np.ndarray:
        i = self._check_vertex(x)
        idx = np.asarray(idx, dtype=int)
        return self.base.log_coords(tuple(self.coords[i]), self.coords[idx])

    def neighbors(self, x) -> np.ndarray:
        return self.adjacency.getrow(self._check_vertex(x)).indices

    def vertices_within(self, x, radius: float) -> np.ndarray:
        """Vertex ids within base-metric `radius` of x (chordal prefilter)."""
        i = self._check_vertex(x)
        if not hasattr(self, "_tree"):
            self._tree = cKDTree(self._embed(self.coords))
        cand = np.asarray(self._tree.query_ball_point(self._embed(self.coords[i][None, :])[0], radius), dtype=int)
        if cand.size == 0:
            return cand
        d = self.base.pair_distances(np.repeat(self.coords[i][None, :], cand.size, axis=0), self.coords[cand])
        return cand[d <= radius]


Manifold = EuclideanManifold | ConeManifold | SphereCapManifold | GraphManifold
