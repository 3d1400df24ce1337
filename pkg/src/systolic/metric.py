"""Warped-product metrics on the (u, v[, z]) chart.

The surface metrics handled here are of the form ``w(v)^2 du^2 + dv^2``
(optionally extended by ``+ dz^2`` to a product 3-metric), where the
latitude weight ``w`` is either a positive constant (flat geometry) or
the pi/2-periodic even extension of ``cos`` (singular geometry).  The
singular weight makes each latitude band of width pi/2 isometric to the
band of a unit round sphere within pi/4 of its equator; the weight is
continuous but its derivative jumps on the "corner" latitudes
``v = pi/4 (mod pi/2)``.

Note: some informal write-ups state the line element as ``w(v) du^2``;
the squared weight is the convention used throughout this package (the
band geodesics below are round-sphere great circles exactly for the
squared form).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HALF_PI = math.pi / 2.0
QUARTER_PI = math.pi / 4.0

#: global bounds of the singular latitude weight
WEIGHT_MIN = math.sqrt(0.5)
WEIGHT_MAX = 1.0


class DomainError(ValueError):
    """Raised when an argument leaves the mathematical domain of an operation."""


def band_center(v):
    """Nearest multiple of pi/2 (the equator of the band containing ``v``).

    Ties at band edges resolve by round-half-to-even; both neighbouring
    bands assign the same weight there, so the choice is immaterial.
    """
    return np.round(np.asarray(v, dtype=float) / HALF_PI) * HALF_PI


def band_offset(v):
    """Signed offset of ``v`` from its band center, in [-pi/4, pi/4]."""
    v = np.asarray(v, dtype=float)
    return v - band_center(v)


@dataclass(frozen=True)
class LatitudeProfile:
    """Latitude weight of the metric: flat constant or the singular cosine.

    ``kind`` is "flat" or "singular".  For flat profiles ``constant`` is
    the weight; for the singular profile the weight is
    ``cos(band_offset(v))``, which is pi/2-periodic, even, and ranges
    over [sqrt(2)/2, 1].
    """

    kind: str
    constant: float = 1.0

    def __post_init__(self):
        if self.kind not in ("flat", "singular"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind == "flat" and not (self.constant > 0 and math.isfinite(self.constant)):
            raise ValueError("flat profile requires a positive finite constant")

    @property
    def is_singular(self) -> bool:
        return self.kind == "singular"

    def weight(self, v):
        """Evaluate the latitude weight at ``v`` (scalar or array)."""
        arr = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise DomainError("latitude must be finite")
        if self.kind == "flat":
            out = np.full_like(arr, self.constant)
        else:
            out = np.cos(band_offset(arr))
        return float(out) if np.isscalar(v) or arr.ndim == 0 else out

    def bounds(self):
        """(min, max) of the weight over all latitudes."""
        if self.kind == "flat":
            return (self.constant, self.constant)
        return (WEIGHT_MIN, WEIGHT_MAX)


SINGULAR = LatitudeProfile("singular")


def singular_profile() -> LatitudeProfile:
    """The pi/2-periodic singular cosine profile."""
    return SINGULAR


def flat_profile(constant: float = 1.0) -> LatitudeProfile:
    return LatitudeProfile("flat", float(constant))


def latitude_weight(profile: LatitudeProfile, v):
    """Weight of ``profile`` at latitude ``v`` (the scalar warping factor)."""
    return profile.weight(v)


# The operation is exposed under this name too; the weight is the symbol
# usually written psi in the surface-of-revolution literature.
psi = latitude_weight


@dataclass(frozen=True)
class ChartPoint:
    """A point of the universal-cover chart (no range restriction)."""

    u: float
    v: float
    z: float = 0.0

    def __post_init__(self):
        for x in (self.u, self.v, self.z):
            if not math.isfinite(x):
                raise DomainError("chart coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.z], dtype=float)


def as_point(p) -> ChartPoint:
    """Coerce a ChartPoint or a (u, v[, z]) sequence to a ChartPoint."""
    if isinstance(p, ChartPoint):
        return p
    seq = tuple(float(x) for x in p)
    if len(seq) == 2:
        return ChartPoint(seq[0], seq[1], 0.0)
    if len(seq) == 3:
        return ChartPoint(*seq)
    raise ValueError("expected 2 or 3 coordinates")


@dataclass(frozen=True)
class MetricSpec:
    """Diagonal metric ``(w^2(v), 1[, 1])`` on the chart."""

    profile: LatitudeProfile
    dimension: int = 2

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")

    def tensor_at(self, p) -> tuple:
        p = as_point(p)
        w = self.profile.weight(p.v)
        if self.dimension == 2:
            return (w * w, 1.0)
        return (w * w, 1.0, 1.0)

    def speed(self, v, du, dv, dz=0.0):
        """Metric norm of the chart velocity (du, dv, dz) at latitude v."""
        w = self.profile.weight(v)
        return np.sqrt(w * w * np.asarray(du) ** 2 + np.asarray(dv) ** 2 + np.asarray(dz) ** 2)


def metric_tensor(spec: MetricSpec, p) -> tuple:
    """Diagonal entries of the metric at ``p``."""
    return spec.tensor_at(p)


SINGULAR_SURFACE = MetricSpec(SINGULAR, 2)
SINGULAR_SPACE = MetricSpec(SINGULAR, 3)

# fixed Gauss-Legendre rule used for per-piece curve quadrature
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)     # map to [0, 1]
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


def _corner_fractions(v0: float, v1: float):
    """Parameters in (0,1) where the straight chart segment crosses a corner."""
    if v0 == v1:
        return []
    lo, hi = (v0, v1) if v0 < v1 else (v1, v0)
    k0 = math.ceil((lo - QUARTER_PI) / HALF_PI)
    k1 = math.floor((hi - QUARTER_PI) / HALF_PI)
    out = []
    for k in range(k0, k1 + 1):
        c = QUARTER_PI + k * HALF_PI
        t = (c - v0) / (v1 - v0)
        if 1e-14 < t < 1.0 - 1e-14:
            out.append(t)
    return sorted(out)


def _segment_length(spec: MetricSpec, p0: np.ndarray, p1: np.ndarray) -> float:
    """Length of the straight chart segment p0 -> p1 under ``spec``.

    Splits at corner latitudes so each quadrature piece has a smooth
    integrand, then subdivides pieces to at most 0.5 chart units and
    applies a 10-point Gauss rule; the result is exact to roundoff for
    the profiles handled here.
    """
    du, dv, dz = (p1 - p0)[:3]
    if du == 0.0 and dv == 0.0 and dz == 0.0:
        return 0.0
    if not spec.profile.is_singular or du == 0.0:
        c = spec.profile.constant if not spec.profile.is_singular else 1.0
        if spec.profile.is_singular:
            # pure vertical/z moves do not feel the weight
            return math.hypot(dv, dz)
        return math.sqrt(c * c * du * du + dv * dv + dz * dz)
    breaks = [0.0] + _corner_fractions(p0[1], p1[1]) + [1.0]
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        n_sub = max(1, int(math.ceil(abs(b - a) * max(abs(du), abs(dv)) / 0.5)))
        edges = np.linspace(a, b, n_sub + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            ts = lo + (hi - lo) * _GL_NODES
            vs = p0[1] + ts * dv
            w = spec.profile.weight(vs)
            integrand = np.sqrt(w * w * du * du + dv * dv + dz * dz)
            total += (hi - lo) * float(np.dot(_GL_WEIGHTS, integrand))
    return total


def polyline_length(spec: MetricSpec, samples) -> float:
    """Length of a polyline given as an (N, 2) or (N, 3) vertex array."""
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        return 0.0
    if pts.shape[1] == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    deltas = np.diff(pts, axis=0)
    crosses_corner = np.zeros(len(deltas), dtype=bool)
    if spec.profile.is_singular:
        b0 = band_center(pts[:-1, 1])
        b1 = band_center(pts[1:, 1])
        crosses_corner = (b0 != b1) | (np.abs(band_offset(pts[:-1, 1])) >= QUARTER_PI - 1e-12)
    # vectorized mid-point-free quadrature for the smooth bulk
    total = 0.0
    smooth = ~crosses_corner
    if np.any(smooth):
        du, dv, dz = deltas[smooth, 0], deltas[smooth, 1], deltas[smooth, 2]
        v0 = pts[:-1, 1][smooth]
        seg = np.zeros(smooth.sum())
        for t, wgt in zip(_GL_NODES, _GL_WEIGHTS):
            w = spec.profile.weight(v0 + t * dv)
            seg += wgt * np.sqrt(w * w * du * du + dv * dv + dz * dz)
        total += float(np.sum(seg))
    for i in np.nonzero(crosses_corner)[0]:
        total += _segment_length(spec, pts[i], pts[i + 1])
    return total


def curve_length(spec: MetricSpec, curve) -> float:
    """Arc length of ``curve`` with respect to ``spec``.

    Accepts a geodesic arc object (anything with ``point``/``velocity``
    and an ``interval``), or a polyline vertex array.  Degenerate
    single-point inputs return 0.
    """
    point = getattr(curve, "point", None)
    velocity = getattr(curve, "velocity", None)
    if point is not None and velocity is not None:
        t0, t1 = curve.interval
        if t1 <= t0:
            return 0.0
        # 64 panels x GL10 over a smooth closed-form arc
        edges = np.linspace(t0, t1, 65)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            ts = lo + (hi - lo) * _GL_NODES
            pts = point(ts)
            vel = velocity(ts)
            sp = spec.speed(pts[:, 1], vel[:, 0], vel[:, 1], vel[:, 2])
            total += (hi - lo) * float(np.dot(_GL_WEIGHTS, sp))
        return total
    samples = getattr(curve, "samples", None)
    if samples is not None:
        return polyline_length(spec, samples)
    return polyline_length(spec, curve)


def _weight_integral_over(v0: float, v1: float) -> float:
    """Integral of the singular weight over [v0, v1], by per-band quadrature."""
    nodes, weights = np.polynomial.legendre.leggauss(20)
    breaks = [v0] + [v0 + t * (v1 - v0) for t in _corner_fractions(v0, v1)] + [v1]
    total = 0.0
    prof = SINGULAR
    for a, b in zip(breaks[:-1], breaks[1:]):
        ts = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        total += 0.5 * (b - a) * float(np.dot(weights, prof.weight(ts)))
    return total


def volume(m) -> float:
    """Riemannian volume (area in dimension 2) of a manifold specification.

    Computed as the integral of the metric density over a fundamental
    domain; products multiply the base area by the height extent.
    """
    topo = m.topology.name
    if topo in ("TORUS2", "TORUS3"):
        basis = np.asarray(m.basis, dtype=float)
        return abs(float(np.linalg.det(basis)))
    if m.geometry == "flat":
        area = 0.5 * m.a * m.b
    else:
        # u in [0, pi), v in [0, pi)
        area = math.pi * _weight_integral_over(0.0, math.pi)
    if topo == "KLEIN2":
        return area
    height = m.L if topo == "KLEIN_CROSS_CIRCLE" else m.d
    return area * height
