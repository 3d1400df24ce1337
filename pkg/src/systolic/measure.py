"""The measure on the systolic band families and the extremality certificate.

A measure ``h(a) da (x) dtheta (x) dz`` on the two band-geodesic
families (the central family and its mirror across the corner surface)
pushes forward to a multiple of the volume measure exactly when the
density solves an Abel integral equation; the closed-form solution
makes the pushforward density identically 1 and the total mass equal to
volume/systole.  This module computes all the ingredients numerically
and bundles them into a pass/fail certificate, including the perturbed
densities used as negative controls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geodesics import band_geodesic
from .manifolds import (
    BIEBERBACH_TYPES,
    ManifoldSpec,
    Topology,
    b2_parameters,
    deck_group,
    enumerate_elements,
)
from .metric import DomainError, HALF_PI, QUARTER_PI, MetricSpec, volume
from .systole import _height, systole, systolic_families, verify_systolic_family

SQRT2 = math.sqrt(2.0)

#: mass-matched constant density (same single-family mass as the solved one)
UNIFORM_LEVEL = (SQRT2 / math.pi) / HALF_PI


@dataclass(frozen=True)
class FamilyDensity:
    """Density on the apex parameter: the Abel solution or a flat control.

    ``kind`` is "solved" (the closed-form density, singular at the band
    edge but integrable) or "uniform" (constant, mass-matched); ``scale``
    multiplies either one.
    """

    kind: str = "solved"
    scale: float = 1.0

    def value(self, a):
        a = np.abs(np.asarray(a, dtype=float))
        if np.any(a >= QUARTER_PI):
            raise DomainError("density domain is |a| < pi/4")
        if self.kind == "uniform":
            out = np.full_like(a, UNIFORM_LEVEL * self.scale)
        else:
            out = self.scale * np.sin(2 * a) / (2 * math.pi) / np.sqrt(
                np.cos(a) ** 2 - 0.5
            )
        return float(out) if out.ndim == 0 else out


def h_density(a) -> float:
    """The solved apex density ``sin(2a)/(2 pi) (cos^2 a - 1/2)^{-1/2}``."""
    return FamilyDensity().value(a)


def solve_abel(rhs: float):
    """Solution ``y(z) = rhs / (pi sqrt(z))`` of the half-kernel equation
    ``integral_0^t (t - z)^{-1/2} y(z) dz = rhs`` (constant right side).

    Composing with ``z = cos^2 a - 1/2`` and the Jacobian ``sin(2a)``
    reproduces the apex density when rhs = 1/2.
    """
    if not rhs > 0:
        raise ValueError("rhs must be positive")

    def y(z):
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise DomainError("the Abel solution lives on (0, 1/2]")
        out = rhs / (math.pi * np.sqrt(z))
        return float(out) if out.ndim == 0 else out

    return y


# Gauss-Legendre caches
_GL = {}


def _gl(n, lo=0.0, hi=1.0):
    key = (n, lo, hi)
    if key not in _GL:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL[key] = (0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w)
    return _GL[key]


def density_nodes(density: FamilyDensity, n: int = 48):
    """Quadrature nodes/weights for integrals against the density on [0, pi/4].

    The solved density is integrated through the substitution
    ``cos^2 a - 1/2 = s^2 / 2``, which removes its band-edge singularity;
    the weights still evaluate the density itself, so the quadrature is
    a genuine functional of the implemented formula.
    """
    if density.kind == "uniform":
        a, w = _gl(n, 0.0, QUARTER_PI)
        return a, w * density.value(a)
    s, ws = _gl(n, 0.0, 1.0)
    z = 0.5 * s * s
    a = np.arccos(np.sqrt(z + 0.5))
    dadz = 1.0 / np.sin(2.0 * a)   # |da/dz|
    w = ws * density.value(a) * s * dadz
    return a, w


def abel_lhs(v: float, density: FamilyDensity = FamilyDensity(), n: int = 64) -> float:
    """The kernel integral ``int_{|v|}^{pi/4} (cos^2 v - cos^2 a)^{-1/2} h(a) da``.

    For the solved density the substitution ``z = cos^2 a - 1/2``,
    ``t = cos^2 v - 1/2`` followed by ``z = t sin^2 phi`` removes both
    endpoint singularities (the transformed integrand is constant up to
    roundoff); the identity value is 1/2.  Other densities integrate
    with a square-root substitution at the kernel end only.
    """
    if not abs(v) < QUARTER_PI:
        raise DomainError("the kernel integral requires |v| < pi/4")
    t = math.cos(v) ** 2 - 0.5
    if density.kind != "uniform":
        phi, w = _gl(n, 0.0, HALF_PI)
        z = t * np.sin(phi) ** 2
        a = np.arccos(np.sqrt(z + 0.5))
        kernel = 1.0 / np.sqrt(np.maximum(math.cos(v) ** 2 - np.cos(a) ** 2, 1e-300))
        dzdphi = 2.0 * t * np.sin(phi) * np.cos(phi)
        dadz = 1.0 / np.sin(2.0 * a)
        return float(np.sum(w * kernel * density.value(a) * dzdphi * dadz))
    # kernel-end substitution a = |v| + span * xi^2
    span = QUARTER_PI - abs(v)
    xi, w = _gl(n, 0.0, 1.0)
    a = abs(v) + span * xi * xi
    a = np.minimum(a, QUARTER_PI - 1e-15)
    kernel = 1.0 / np.sqrt(np.maximum(math.cos(v) ** 2 - np.cos(a) ** 2, 1e-300))
    return float(np.sum(w * kernel * density.value(a) * 2.0 * span * xi))


def pushforward_density(v: float, density: FamilyDensity = FamilyDensity()) -> float:
    """Density of the family pushforward against the volume measure.

    Every latitude lies in one band of one family (the central family
    covers bands at even multiples of pi/2, the mirrored family the odd
    ones); interior latitudes receive ``2 x`` the kernel integral, and
    corner latitudes receive the half-sum of the one-sided limits from
    the two adjacent bands.  For the solved density the value is
    identically 1.
    """
    k = round(v / HALF_PI)
    off = abs(v - k * HALF_PI)
    if abs(off - QUARTER_PI) < 1e-12:
        limit = abel_lhs(QUARTER_PI - 1e-9, density)
        return 2.0 * limit  # half of each adjacent band's one-sided limit
    return 2.0 * abel_lhs(off, density)


def measure_mass(m: ManifoldSpec, density: FamilyDensity = FamilyDensity(),
                 n: int = 48) -> float:
    """Total mass of the measure on both families (quadrature through the
    density); equals volume/systole for the solved density."""
    height = _height(m)
    if height <= 0:
        raise ValueError("the measure lives on the 3-dimensional quotients")
    _, w = density_nodes(density, n)
    half_apex = float(np.sum(w))                       # integral over [0, pi/4]
    single_family = 2.0 * half_apex * math.pi * height  # even apex extension
    return 2.0 * single_family                          # central + mirrored


def solve_b2_params() -> tuple:
    """Twist and height of the B2 normalization (root residuals <= 1e-12)."""
    return b2_parameters()


# ---------------------------------------------------------------------------
# deck-invariant test functions


class GaussianBumpSet:
    """Deck-invariant Gaussian bumps built by orbit summation.

    Signed-affine deck maps are Euclidean isometries of the chart, so
    summing a chart Gaussian over the orbit of its center is exactly
    invariant.  The orbit is truncated at ``cutoff`` standard widths
    (relative error below 2e-8 at the default 6).
    """

    def __init__(self, m: ManifoldSpec, count: int = 20, width: float = 0.55,
                 seed: int = 0, cutoff: float = 6.0):
        self.m = m
        self.width = float(width)
        self.cutoff = float(cutoff)
        rng = np.random.default_rng(seed)
        height = _height(m)
        self.centers = np.column_stack([
            rng.uniform(0.0, math.pi, count),
            rng.uniform(0.0, math.pi, count),
            rng.uniform(0.0, height, count),
        ])
        # the window every consumer evaluates in (family sweep + volume box)
        self._box = (
            -HALF_PI - 0.3, math.pi + HALF_PI + 0.3,
            -QUARTER_PI - HALF_PI - 0.3, math.pi + 0.3,
            -0.3, height + 0.3,
        )
        self._images = None

    def _prepare(self, box):
        pad = self.cutoff * self.width
        group = deck_group(self.m)
        spec = self.m.metric_spec
        span = max(box[1] - box[0], box[3] - box[2], box[5] - box[4]) + 2 * pad
        elements = enumerate_elements(group, spec, bound=2.0 * span + 8.0,
                                      cap=10 ** 7)
        signs = np.array([e.signs for e in elements], dtype=float)
        shifts = np.array([e.shifts for e in elements], dtype=float)
        signs = np.vstack([signs, np.ones(3)])
        shifts = np.vstack([shifts, np.zeros(3)])
        images = []
        for c in self.centers:
            pts = signs * c[None, :] + shifts
            keep = (
                (pts[:, 0] > box[0] - pad) & (pts[:, 0] < box[1] + pad)
                & (pts[:, 1] > box[2] - pad) & (pts[:, 1] < box[3] + pad)
                & (pts[:, 2] > box[4] - pad) & (pts[:, 2] < box[5] + pad)
            )
            images.append(pts[keep])
        self._images = images
        self._box = box

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """(N, 3) chart points -> (N, count) bump values."""
        points = np.asarray(points, dtype=float)
        box = (
            points[:, 0].min(), points[:, 0].max(),
            points[:, 1].min(), points[:, 1].max(),
            points[:, 2].min(), points[:, 2].max(),
        )
        if self._images is None or any(
            box[2 * i] < self._box[2 * i] or box[2 * i + 1] > self._box[2 * i + 1]
            for i in range(3)
        ):
            grown = (
                min(box[0], self._box[0]), max(box[1], self._box[1]),
                min(box[2], self._box[2]), max(box[3], self._box[3]),
                min(box[4], self._box[4]), max(box[5], self._box[5]),
            )
            self._prepare(grown)
        out = np.zeros((len(points), len(self.centers)))
        inv_two_w2 = 1.0 / (2.0 * self.width * self.width)
        chunk = 200_000
        for lo in range(0, len(points), chunk):
            pts = points[lo:lo + chunk]
            for b, imgs in enumerate(self._images):
                d2 = (
                    (pts[:, 0, None] - imgs[None, :, 0]) ** 2
                    + (pts[:, 1, None] - imgs[None, :, 1]) ** 2
                    + (pts[:, 2, None] - imgs[None, :, 2]) ** 2
                )
                out[lo:lo + chunk, b] = np.exp(-d2 * inv_two_w2).sum(axis=1)
        return out

    def single(self, b: int):
        """Bump ``b`` as a vectorized scalar function of (N, 3) points."""

        def phi(points):
            return self.evaluate(points)[:, b]

        return phi


def check_deck_invariance(phi, m: ManifoldSpec, seed: int = 1,
                          samples: int = 8, tol: float = 1e-6) -> None:
    """Raise if ``phi`` is visibly not deck-invariant on random samples."""
    rng = np.random.default_rng(seed)
    group = deck_group(m)
    pts = np.column_stack([
        rng.uniform(0.0, math.pi, samples),
        rng.uniform(0.0, math.pi, samples),
        rng.uniform(0.0, max(_height(m), 1.0), samples),
    ])
    base = np.asarray(phi(pts), dtype=float)
    scale = max(float(np.max(np.abs(base))), 1e-9)
    for g in group.generators:
        moved = np.asarray(phi(g.apply_array(pts)), dtype=float)
        if np.max(np.abs(moved - base)) > tol * scale:
            raise ValueError("test function is not deck-invariant")


# ---------------------------------------------------------------------------
# pushforward pairing


@dataclass(frozen=True)
class PairResult:
    """Both sides of the pairing, in the raw and normalized conventions.

    ``pushforward`` is the measure's pairing with the test function;
    ``volume_integral`` is the integral against the volume measure.  For
    the solved density the two agree (the normalized convention divides
    by the mass, matching a mass-one measure against Sys/Vol times the
    volume integral).
    """

    pushforward: float
    volume_integral: float
    pushforward_error: float
    volume_error: float
    mass: float

    @property
    def relative_gap(self) -> float:
        ref = max(abs(self.volume_integral), 1e-300)
        return abs(self.pushforward - self.volume_integral) / ref


def _family_points_weights(m: ManifoldSpec, density: FamilyDensity,
                           n_s=16, n_t=24, n_theta=24, n_z=12):
    """Quadrature cloud along both families: (points, weights) arrays."""
    height = _height(m)
    a_nodes, a_w = density_nodes(density, n_s)
    t_nodes, t_w = _gl(n_t, -HALF_PI, HALF_PI)
    thetas = np.arange(n_theta) * (math.pi / n_theta)
    zs = np.arange(n_z) * (height / n_z)
    th_w = math.pi / n_theta
    z_w = height / n_z
    pts = []
    wts = []
    for ai, wa in zip(a_nodes, a_w):
        va = np.arctan(math.tan(ai) * np.cos(t_nodes))      # (n_t,)
        speed = np.cos(va) ** 2 / math.cos(ai)
        for sign in (+1.0, -1.0):
            for mirrored in (False, True):
                v_curve = sign * va
                if mirrored:
                    v_curve = HALF_PI - v_curve
                u = t_nodes[:, None] + thetas[None, :]       # (n_t, n_theta)
                U = np.broadcast_to(u[:, :, None], (n_t, n_theta, n_z))
                V = np.broadcast_to(v_curve[:, None, None], U.shape)
                Z = np.broadcast_to(zs[None, None, :], U.shape)
                W = (wa * th_w * z_w) * np.broadcast_to(
                    (t_w * speed)[:, None, None], U.shape
                )
                pts.append(np.column_stack([U.ravel(), V.ravel(), Z.ravel()]))
                wts.append(W.ravel())
    return np.concatenate(pts), np.concatenate(wts)


def _volume_grid(m: ManifoldSpec, n=32):
    height = _height(m)
    ux, uw = _gl(n, 0.0, math.pi)
    vx, vw = _gl(n, 0.0, math.pi)
    zx, zw = _gl(max(n // 2, 4), 0.0, height)
    spec = m.metric_spec
    dens = spec.profile.weight(vx)
    U, V, Z = np.meshgrid(ux, vx, zx, indexing="ij")
    W = uw[:, None, None] * (vw * dens)[None, :, None] * zw[None, None, :]
    return np.column_stack([U.ravel(), V.ravel(), Z.ravel()]), W.ravel()


def pushforward_pair(phi, m: ManifoldSpec, density: FamilyDensity = FamilyDensity(),
                     n_s=16, n_t=24, n_theta=24, n_z=12, n_vol=32,
                     check_invariance: bool = True) -> PairResult:
    """Pair a deck-invariant test function with the family measure and
    with the volume measure, with half-resolution error estimates."""
    if m.geometry != "singular" or m.dimension != 3:
        raise ValueError("the pairing is defined on the singular 3-quotients")
    if m.topology is Topology.KLEIN_CROSS_CIRCLE and m.L < math.pi - 1e-12:
        raise ValueError("the family measure requires circle length >= pi")
    if check_invariance:
        check_deck_invariance(phi, m)

    def lhs(ns, nt, nth, nz):
        pts, wts = _family_points_weights(m, density, ns, nt, nth, nz)
        vals = np.asarray(phi(pts), dtype=float)
        return float(np.dot(wts, vals))

    def rhs(n):
        pts, wts = _volume_grid(m, n)
        vals = np.asarray(phi(pts), dtype=float)
        return float(np.dot(wts, vals))

    full = lhs(n_s, n_t, n_theta, n_z)
    half = lhs(max(n_s // 2, 4), max(n_t // 2, 6), max(n_theta // 2, 6),
               max(n_z // 2, 4))
    vol_full = rhs(n_vol)
    vol_half = rhs(max(n_vol // 2, 8))
    _, w = density_nodes(density, n_s)
    mass = 4.0 * float(np.sum(w)) * math.pi * _height(m)
    return PairResult(full, vol_full, abs(full - half), abs(vol_full - vol_half), mass)


# ---------------------------------------------------------------------------
# certificate


@dataclass(frozen=True)
class CheckResult:
    name: str
    expected: float
    computed: float
    tolerance: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "expected": self.expected,
            "computed": self.computed,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


@dataclass(frozen=True)
class CertificateReport:
    manifold: str
    checks: tuple
    passed: bool
    seed: int
    tolerances: dict

    def as_dict(self) -> dict:
        return {
            "manifold": self.manifold,
            "checks": [c.as_dict() for c in self.checks],
            "pass": self.passed,
            "seed": self.seed,
            "tolerances": dict(self.tolerances),
        }


DEFAULT_TOLERANCES = {
    "systole": 1e-6,
    "family_length": 1e-6,
    "mass": 1e-9,
    "pushforward_grid": 1e-5,
    "pushforward_pair": 1e-3,
}


def extremality_certificate(m: ManifoldSpec, *, bumps: int = 20,
                            bump_width: float = 0.55, seed: int = 0,
                            v_grid: int = 1024,
                            density: FamilyDensity = FamilyDensity(),
                            tolerances: dict = None,
                            family_samples: int = 6) -> CertificateReport:
    """Numerical sufficient condition for conformal extremality.

    Bundles: (i) sampled family members have systolic length, (ii) the
    measure mass equals volume/systole, (iii) the pushforward density is
    uniform on a latitude grid, (iv) the pairing against seeded
    deck-invariant bumps matches the volume integral.  Failing checks
    are reported, never raised.
    """
    if m.geometry != "singular" or m.dimension != 3:
        raise ValueError("the certificate applies to the singular 3-quotients")
    if m.topology is Topology.KLEIN_CROSS_CIRCLE and (m.L or 0) < math.pi - 1e-12:
        raise ValueError("circle length below pi leaves the family non-systolic")
    tol = dict(DEFAULT_TOLERANCES)
    if tolerances:
        tol.update(tolerances)
    checks = []

    sys_res = systole(m)
    checks.append(CheckResult("systole_equals_pi", math.pi, sys_res.value,
                              tol["systole"],
                              abs(sys_res.value - math.pi) <= tol["systole"]))

    worst_family = 0.0
    for fam in systolic_families(m):
        if fam.expected is None:
            continue
        samples = verify_systolic_family(m, fam, samples=family_samples, seed=seed)
        worst_family = max(worst_family, max(s.gap for s in samples))
    checks.append(CheckResult("family_lengths_systolic", 0.0, worst_family,
                              tol["family_length"],
                              worst_family <= tol["family_length"]))

    vol = volume(m)
    mass = measure_mass(m, density)
    expected_mass = vol / math.pi
    checks.append(CheckResult("mass_equals_vol_over_sys", expected_mass, mass,
                              tol["mass"],
                              abs(mass - expected_mass) <= tol["mass"]))

    vs = np.linspace(0.0, math.pi, v_grid, endpoint=False)
    dens_vals = np.array([pushforward_density(v, density) for v in vs])
    worst_dev = float(np.max(np.abs(dens_vals - 1.0)))
    checks.append(CheckResult("pushforward_density_uniform", 1.0,
                              1.0 + worst_dev, tol["pushforward_grid"],
                              worst_dev <= tol["pushforward_grid"]))

    bumpset = GaussianBumpSet(m, count=bumps, width=bump_width, seed=seed)
    pts, wts = _family_points_weights(m, density)
    lhs_vals = wts @ bumpset.evaluate(pts)
    vpts, vwts = _volume_grid(m)
    rhs_vals = vwts @ bumpset.evaluate(vpts)
    rel = np.abs(lhs_vals - rhs_vals) / np.maximum(np.abs(rhs_vals), 1e-300)
    worst_pair = float(np.max(rel))
    checks.append(CheckResult("pushforward_pairs_volume", 0.0, worst_pair,
                              tol["pushforward_pair"],
                              worst_pair <= tol["pushforward_pair"]))

    passed = all(c.passed for c in checks)
    return CertificateReport(m.topology.value, tuple(checks), passed, seed, tol)
