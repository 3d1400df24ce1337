"""Closed-form band geodesics and the numerical geodesic integrator.

Inside one latitude band the singular surface is a round-sphere band,
so the geodesics through the band equator have the closed form
``v(t) = center + arctan(tan(a) cos(t))`` with apex latitude ``a``.
The integrator advances the exact geodesic flow of the surface metric
with RK4 inside bands and continues across corner latitudes with a
continuous tangent (hence continuous Clairaut invariant ``w^2(v) du/ds``,
the weight being continuous there).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .metric import (
    QUARTER_PI,
    HALF_PI,
    ChartPoint,
    DomainError,
    MetricSpec,
    SINGULAR,
    as_point,
    band_center,
    band_offset,
)


class CornerTangencyError(RuntimeError):
    """The geodesic flow degenerated tangentially onto a corner latitude."""

    def __init__(self, u, v, s):
        super().__init__(
            f"corner tangency at (u={u:.6f}, v={v:.6f}) after arclength {s:.6f}; "
            "the smooth band flow does not continue through a tangential corner hit"
        )
        self.location = (u, v)
        self.arclength = s


def clairaut_slope(v: float, a: float) -> float:
    """Latitude slope dv/dt of the apex-``a`` band geodesic at latitude ``v``.

    The squared slope is ``cos^2(v) (cos^2(v) - cos^2(a)) / cos^2(a)``;
    the non-negative root is returned.  Valid for |v| <= |a| <= pi/4
    (beyond the apex the slope turns imaginary).
    """
    if not (math.isfinite(v) and math.isfinite(a)):
        raise DomainError("arguments must be finite")
    if abs(a) > QUARTER_PI + 1e-12:
        raise DomainError("apex latitude exceeds pi/4")
    if abs(v) > abs(a) + 1e-12:
        raise DomainError("latitude exceeds the apex (turning latitude)")
    cv, ca = math.cos(v), math.cos(a)
    val = (cv * cv) / (ca * ca) * max(cv * cv - ca * ca, 0.0)
    return math.sqrt(val)


clairaut_f = clairaut_slope


@dataclass(frozen=True)
class BandArc:
    """Half great circle of one spherical band, parameterized by longitude.

    Runs from ``(theta - pi/2, center)`` through the apex
    ``(theta, center + a)`` to ``(theta + pi/2, center)`` at constant
    height ``z``; its length is pi for every apex.
    """

    a: float
    theta: float = 0.0
    z: float = 0.0
    center: float = 0.0

    interval: tuple = (-HALF_PI, HALF_PI)

    def __post_init__(self):
        if abs(self.a) > QUARTER_PI + 1e-12:
            raise DomainError("band arcs require |a| <= pi/4")

    def point(self, t):
        t = np.asarray(t, dtype=float)
        u = t + self.theta
        v = self.center + np.arctan(math.tan(self.a) * np.cos(t))
        z = np.full_like(u, self.z)
        return np.stack([u, v, z], axis=-1)

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        ta = math.tan(self.a)
        du = np.ones_like(t)
        dv = -ta * np.sin(t) / (1.0 + ta * ta * np.cos(t) ** 2)
        dz = np.zeros_like(t)
        return np.stack([du, dv, dz], axis=-1)

    @property
    def endpoints(self):
        p = self.point(np.array([-HALF_PI, HALF_PI]))
        return ChartPoint(*p[0]), ChartPoint(*p[1])


@dataclass(frozen=True)
class StraightArc:
    """Straight chart segment, linearly parameterized on [0, 1]."""

    p: ChartPoint
    q: ChartPoint

    interval: tuple = (0.0, 1.0)

    def point(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        a, b = self.p.as_array(), self.q.as_array()
        return a + t * (b - a)

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        d = self.q.as_array() - self.p.as_array()
        return np.broadcast_to(d, t.shape + (3,)).copy()

    @property
    def samples(self):
        return np.stack([self.p.as_array(), self.q.as_array()])


@dataclass(frozen=True)
class PolylineArc:
    """Sampled curve; ``params`` carries the arclength of each vertex."""

    samples: np.ndarray
    params: np.ndarray = None

    def __post_init__(self):
        pts = np.asarray(self.samples, dtype=float)
        if pts.ndim != 2 or pts.shape[1] not in (2, 3):
            raise ValueError("samples must be an (N, 2) or (N, 3) array")
        if pts.shape[1] == 2:
            pts = np.column_stack([pts, np.zeros(len(pts))])
        object.__setattr__(self, "samples", pts)
        if self.params is None:
            object.__setattr__(self, "params", np.arange(len(pts), dtype=float))
        else:
            object.__setattr__(self, "params", np.asarray(self.params, dtype=float))

    @property
    def interval(self):
        return (float(self.params[0]), float(self.params[-1]))

    def point(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cols = [np.interp(t, self.params, self.samples[:, k]) for k in range(3)]
        return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class TracedArc(PolylineArc):
    """Integrator output: polyline plus tangent-angle and invariant records."""

    chi: np.ndarray = None
    clairaut: np.ndarray = None
    corner_crossings: int = 0


def band_geodesic(a: float, theta: float = 0.0, z: float = 0.0, center: float = 0.0) -> BandArc:
    """The apex-``a`` band geodesic through ``(theta, center + a, z)``."""
    return BandArc(float(a), float(theta), float(z), float(center))


def _start_band(v0: float, dv_sign: float) -> float:
    """Band center for the integrator start, honoring the motion direction."""
    off = band_offset(v0)
    c = float(band_center(v0))
    if QUARTER_PI - abs(off) < 1e-12:
        # starting on a corner: the band lies on the side of motion
        if dv_sign > 0:
            return v0 + QUARTER_PI
        if dv_sign < 0:
            return v0 - QUARTER_PI
        raise CornerTangencyError(0.0, v0, 0.0)
    return c


def integrate_geodesic(start, direction, arclength: float, step: float = 1e-3,
                       spec: MetricSpec | None = None) -> TracedArc:
    """Numerically integrate the geodesic from ``start`` along ``direction``.

    ``direction`` is a chart velocity (du, dv[, dz]); it is normalized
    to unit metric speed, so the parameter equals arclength.  The z
    component decouples (the 3-metric is a product): z advances linearly
    while the surface factor follows the band flow.  Corner crossings
    are located by bisection and continued with the tangent unchanged.
    """
    if spec is None:
        spec = MetricSpec(SINGULAR, 3)
    if not spec.profile.is_singular:
        raise ValueError("the integrator targets the singular profile; flat geodesics are straight")
    p = as_point(start)
    d = np.zeros(3)
    d[: len(tuple(direction))] = tuple(direction)
    w0 = spec.profile.weight(p.v)
    norm = math.sqrt(w0 * w0 * d[0] ** 2 + d[1] ** 2 + d[2] ** 2)
    if norm < 1e-15:
        raise DomainError("direction must be non-zero")
    d /= norm
    if arclength < 0:
        raise DomainError("arclength must be non-negative")
    dz = d[2]
    surf_share = math.sqrt(max(1.0 - dz * dz, 0.0))
    if surf_share < 1e-13:
        # pure height line
        samples = np.array([[p.u, p.v, p.z], [p.u, p.v, p.z + math.copysign(arclength, dz)]])
        return TracedArc(samples, np.array([0.0, arclength]),
                         chi=np.zeros(2), clairaut=np.zeros(2))
    chi0 = math.atan2(d[1] / surf_share, w0 * d[0] / surf_share)
    c0 = _start_band(p.v, math.sin(chi0))
    surf_len = arclength * surf_share
    cap = int(surf_len / step) + 4200
    us = np.empty(cap)
    vs = np.empty(cap)
    chis = np.empty(cap)
    cs = np.empty(cap)
    ss = np.empty(cap)
    status, n = _kernels.trace_surface(p.u, p.v, chi0, c0, surf_len, step,
                                       us, vs, chis, cs, ss)
    if status == _kernels.TRACE_TANGENCY:
        raise CornerTangencyError(us[n - 1], vs[n - 1], ss[n - 1] / max(surf_share, 1e-300))
    if status == _kernels.TRACE_OVERFLOW:
        raise RuntimeError("sample buffer overflow: too many corner crossings for the step budget")
    us, vs, chis, cs, ss = us[:n], vs[:n], chis[:n], cs[:n], ss[:n]
    t3 = ss / surf_share
    zs = p.z + dz * t3
    samples = np.column_stack([us, vs, zs])
    weight = np.cos(vs - cs)
    clairaut = weight * np.cos(chis) * surf_share  # w^2 du/ds in the 3-metric
    crossings = int(np.sum(np.abs(np.diff(cs)) > 1e-9))
    return TracedArc(samples, t3, chi=chis, clairaut=clairaut, corner_crossings=crossings)


def clairaut_drift(arc: TracedArc) -> float:
    """Maximum wander of the conserved quantity along a traced geodesic."""
    if arc.clairaut is None or len(arc.clairaut) < 2:
        return 0.0
    return float(np.max(np.abs(arc.clairaut - arc.clairaut[0])))
