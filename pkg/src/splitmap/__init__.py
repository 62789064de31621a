"""splitmap: a numerical laboratory for splitting maps on geodesic balls.

Builds geometry providers with nonnegative curvature (plane, flat cones,
round-sphere caps, sampled geodesic graphs), solves the model Poisson
problem, constructs direction points and dense nets, and measures every
quantitative estimate of the construction: Gou-Gu defects, projection
errors, quasi-isometry ratios, integral Toponogov deviations, and the
final splitting-map statistics.
"""

from .manifold import (
    BallVolume,
    GeodesicSegment,
    GeometryError,
    Manifold,
    ManifoldSpec,
    UnitVectorSample,
    build_manifold,
)

__all__ = [
    "BallVolume",
    "GeodesicSegment",
    "GeometryError",
    "Manifold",
    "ManifoldSpec",
    "UnitVectorSample",
    "build_manifold",
]

__version__ = "0.1.0"
