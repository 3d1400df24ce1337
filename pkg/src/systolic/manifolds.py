"""Manifold specifications, their deck groups, and displacement computations.

Supported quotients: flat tori (2D/3D, arbitrary lattice bases), the
flat and singular Klein bottle, its product with a circle, and the four
non-orientable flat 3-manifold types B1..B4 obtained by suspending the
Klein bottle by an isometry.  In the singular normalization the Klein
bottle deck group is generated by the screw motion
``(u, v) -> (u + pi, -v)`` and the translation ``(u, v) -> (u, v + pi)``;
flat moduli (a, b) correspond to it via a/2 <-> pi and b <-> pi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from itertools import product as iter_product

import numpy as np
from scipy import optimize

from .isometry import DeckGroup, SignedAffineIsometry, is_isometry_of
from .metric import (
    HALF_PI,
    QUARTER_PI,
    ChartPoint,
    MetricSpec,
    as_point,
    flat_profile,
    singular_profile,
)
from . import distance as _distance

SQRT2 = math.sqrt(2.0)


class Topology(Enum):
    TORUS2 = "Torus2"
    KLEIN2 = "Klein2"
    TORUS3 = "Torus3"
    KLEIN_CROSS_CIRCLE = "KleinCrossCircle"
    B1 = "B1"
    B2 = "B2"
    B3 = "B3"
    B4 = "B4"


BIEBERBACH_TYPES = (Topology.B1, Topology.B2, Topology.B3, Topology.B4)


class EnumerationCapError(RuntimeError):
    """Raised when element enumeration would exceed the candidate cap."""

    def __init__(self, requested, cap, bound):
        super().__init__(
            f"enumeration at bound {bound:g} requires {requested} candidates, "
            f"exceeding the cap of {cap}"
        )
        self.requested = requested
        self.cap = cap
        self.bound = bound


@lru_cache(maxsize=1)
def b2_parameters() -> tuple:
    """Twist and height making the B2 suspension class systolic of length pi.

    The twist is the unique root in (0, pi) of
    ``arccos((cos(alpha) - 1)/2) = (pi - alpha)/sqrt(2)`` (the two
    competing displacement branches agree there); the height then solves
    ``displacement^2 + d^2 = pi^2``.
    """

    def gap(alpha):
        return math.acos((math.cos(alpha) - 1.0) / 2.0) - (math.pi - alpha) / SQRT2

    alpha = optimize.brentq(gap, 1e-9, math.pi - 1e-9, xtol=1e-15, rtol=8.9e-16)
    disp = (math.pi - alpha) / SQRT2
    d = math.sqrt(math.pi ** 2 - disp ** 2)
    return alpha, d


def b1_parameters() -> tuple:
    """Twist and height of the singular B1 normalization."""
    alpha = math.pi * (2.0 - SQRT2)
    d = math.pi * math.sqrt(2.0 * SQRT2 - 2.0)
    return alpha, d


@dataclass(frozen=True)
class ManifoldSpec:
    """Topology + geometry + moduli; owns the metric and the deck group."""

    topology: Topology
    geometry: str
    a: float = None
    b: float = None
    alpha: float = None
    d: float = None
    L: float = None
    basis: tuple = None

    def __post_init__(self):
        if self.geometry not in ("flat", "singular"):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        for name in ("d", "L"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive")

    # -- constructors -------------------------------------------------

    @classmethod
    def torus2(cls, basis) -> "ManifoldSpec":
        basis = tuple(tuple(float(x) for x in row) for row in basis)
        if len(basis) != 2 or any(len(r) != 2 for r in basis):
            raise ValueError("2-torus basis must be two 2-vectors")
        if abs(np.linalg.det(np.asarray(basis))) < 1e-12:
            raise ValueError("degenerate lattice basis")
        return cls(Topology.TORUS2, "flat", basis=basis)

    @classmethod
    def torus3(cls, basis) -> "ManifoldSpec":
        basis = tuple(tuple(float(x) for x in row) for row in basis)
        if len(basis) != 3 or any(len(r) != 3 for r in basis):
            raise ValueError("3-torus basis must be three 3-vectors")
        if abs(np.linalg.det(np.asarray(basis))) < 1e-12:
            raise ValueError("degenerate lattice basis")
        return cls(Topology.TORUS3, "flat", basis=basis)

    @classmethod
    def square_torus2(cls) -> "ManifoldSpec":
        return cls.torus2(((1.0, 0.0), (0.0, 1.0)))

    @classmethod
    def hexagonal_torus2(cls) -> "ManifoldSpec":
        return cls.torus2(((1.0, 0.0), (0.5, math.sqrt(3.0) / 2.0)))

    @classmethod
    def cubic_torus3(cls) -> "ManifoldSpec":
        return cls.torus3(((1, 0, 0), (0, 1, 0), (0, 0, 1)))

    @classmethod
    def fcc_torus3(cls) -> "ManifoldSpec":
        """Unit-systole lattice with all pairwise basis angles of 60 degrees."""
        return cls.torus3(
            (
                (1.0, 0.0, 0.0),
                (0.5, math.sqrt(3.0) / 2.0, 0.0),
                (0.5, 1.0 / (2.0 * math.sqrt(3.0)), math.sqrt(2.0 / 3.0)),
            )
        )

    @classmethod
    def klein_bottle(cls, geometry: str = "singular", a: float = None, b: float = None) -> "ManifoldSpec":
        if geometry == "singular":
            if a is not None or b is not None:
                raise ValueError("singular Klein moduli are fixed (a = 2*pi, b = pi)")
            return cls(Topology.KLEIN2, "singular", a=2 * math.pi, b=math.pi)
        a = 2.0 if a is None else float(a)
        b = 1.0 if b is None else float(b)
        if not (a > 0 and b > 0):
            raise ValueError("flat Klein moduli must be positive")
        return cls(Topology.KLEIN2, "flat", a=a, b=b)

    @classmethod
    def klein_cross_circle(cls, L: float = math.pi, geometry: str = "singular",
                           a: float = None, b: float = None) -> "ManifoldSpec":
        base = cls.klein_bottle(geometry, a, b)
        return cls(Topology.KLEIN_CROSS_CIRCLE, geometry, a=base.a, b=base.b, L=float(L))

    @classmethod
    def bieberbach(cls, kind: int, geometry: str = "singular", *,
                   alpha: float = None, d: float = None,
                   a: float = None, b: float = None) -> "ManifoldSpec":
        """One of the four non-orientable types; singular moduli are fixed."""
        topo = {1: Topology.B1, 2: Topology.B2, 3: Topology.B3, 4: Topology.B4}[int(kind)]
        if geometry == "singular":
            if any(x is not None for x in (alpha, d, a, b)):
                raise ValueError(
                    "singular B-type parameters are fixed by the construction"
                )
            if topo is Topology.B1:
                alpha, d = b1_parameters()
            elif topo is Topology.B2:
                alpha, d = b2_parameters()
            else:
                alpha, d = 0.0, math.pi
            return cls(topo, "singular", a=2 * math.pi, b=math.pi, alpha=alpha, d=d)
        a = 2.0 if a is None else float(a)
        b = 1.0 if b is None else float(b)
        d = 1.0 if d is None else float(d)
        if topo in (Topology.B3, Topology.B4):
            if alpha not in (None, 0.0):
                raise ValueError("B3/B4 admit no twist (it is conjugated away)")
            alpha = 0.0
        else:
            alpha = 0.0 if alpha is None else float(alpha)
        return cls(topo, "flat", a=a, b=b, alpha=alpha, d=d)

    # -- derived data --------------------------------------------------

    @property
    def dimension(self) -> int:
        return 2 if self.topology in (Topology.TORUS2, Topology.KLEIN2) else 3

    @property
    def metric_spec(self) -> MetricSpec:
        if self.geometry == "singular":
            return MetricSpec(singular_profile(), self.dimension)
        return MetricSpec(flat_profile(1.0), self.dimension)

    @property
    def deck(self) -> DeckGroup:
        return deck_group(self)

    def scaled(self, c: float) -> "ManifoldSpec":
        """The same manifold with all lengths multiplied by ``c`` (flat only)."""
        if self.geometry != "flat":
            raise ValueError("only flat specifications support uniform scaling")
        c = float(c)
        if self.basis is not None:
            basis = tuple(tuple(c * x for x in row) for row in self.basis)
            return ManifoldSpec(self.topology, "flat", basis=basis)
        scale = lambda x: None if x is None else c * x
        return ManifoldSpec(
            self.topology, "flat", a=scale(self.a), b=scale(self.b),
            alpha=scale(self.alpha), d=scale(self.d), L=scale(self.L)
        )


@lru_cache(maxsize=256)
def deck_group(m: ManifoldSpec) -> DeckGroup:
    """Generators of the deck transformation group acting on the chart."""
    spec = m.metric_spec
    topo = m.topology
    if topo is Topology.TORUS2:
        gens = [
            SignedAffineIsometry.translation(m.basis[0][0], m.basis[0][1]),
            SignedAffineIsometry.translation(m.basis[1][0], m.basis[1][1]),
        ]
        return DeckGroup("T2", tuple(gens), spec)
    if topo is Topology.TORUS3:
        gens = [SignedAffineIsometry.translation(*row) for row in m.basis]
        return DeckGroup("T3", tuple(gens), spec)
    screw = SignedAffineIsometry((1, -1, 1), (m.a / 2.0, 0.0, 0.0))
    vper = SignedAffineIsometry.translation(0.0, m.b)
    if topo is Topology.KLEIN2:
        return DeckGroup("K", (screw, vper), spec)
    if topo is Topology.KLEIN_CROSS_CIRCLE:
        circle = SignedAffineIsometry.translation(0.0, 0.0, m.L)
        return DeckGroup("KxS1", (screw, vper, circle), spec)
    half_b = m.b / 2.0
    if topo is Topology.B1:
        susp = SignedAffineIsometry((1, 1, 1), (m.alpha, 0.0, m.d))
    elif topo is Topology.B2:
        susp = SignedAffineIsometry((1, 1, 1), (m.alpha, half_b, m.d))
    elif topo is Topology.B3:
        susp = SignedAffineIsometry((-1, 1, 1), (0.0, 0.0, m.d))
    else:  # B4: point symmetry on the Moebius boundary latitude, suspended
        susp = SignedAffineIsometry((-1, -1, 1), (0.0, half_b, m.d))
    return DeckGroup(topo.value, (screw, vper, susp), spec)


def displacement_lower_bound(f: SignedAffineIsometry, spec: MetricSpec) -> float:
    """Valid lower bound on inf_p d(p, f(p)) from the translation parts.

    Axes with a sign flip contribute nothing (the flip axis can be
    centered); surviving translations are weighted by the global weight
    bounds of the profile.
    """
    wmin = spec.profile.bounds()[0]
    eu, ev, ez = f.signs
    tu, tv, tz = f.shifts
    du = wmin * abs(tu) if eu == 1 else 0.0
    dv = abs(tv) if ev == 1 else 0.0
    dz = abs(tz) if ez == 1 else 0.0
    return math.sqrt(du * du + dv * dv + dz * dz)


def enumerate_elements(group: DeckGroup, spec: MetricSpec, bound: float,
                       cap: int = 10 ** 6) -> list:
    """Non-identity deck elements relevant below the given length bound.

    Elements are produced in the normal form ``g_k^{e_k} ... g_1^{e_1}``
    with per-generator exponent casuffixes derived from their individual
    displacement lower bounds, then filtered to elements whose own lower
    bound is at most ``bound``.  Exponents along axes cancelled by sign
    flips are capped by conjugacy (every free-homotopy class below the
    bound keeps a representative); the literal set of all elements with
    lower bound below the bound is infinite for flip classes.  Output is
    deterministic: sorted by sign pattern, then translations; closed
    under inversion.
    """
    if bound <= 0:
        raise ValueError("bound must be positive")
    gens = group.generators
    caps = []
    for g in gens:
        lb = displacement_lower_bound(g, spec)
        if lb <= 1e-12:
            raise ValueError("deck generator with zero displacement bound")
        caps.append(max(4, int(math.ceil(bound / lb)) + 1))
    total = 1
    for c in caps:
        total *= 2 * c + 1
    if total > cap:
        raise EnumerationCapError(total, cap, bound)
    powers = []
    for g, c in zip(gens, caps):
        table = {0: SignedAffineIsometry.identity()}
        for k in range(1, c + 1):
            table[k] = g.compose(table[k - 1])
            table[-k] = g.inverse().compose(table[-(k - 1)])
        powers.append(table)
    out = {}
    for expo in iter_product(*[range(-c, c + 1) for c in caps]):
        el = powers[0][expo[0]]
        for tab, e in zip(powers[1:], expo[1:]):
            el = tab[e].compose(el)
        if el.is_identity:
            continue
        if displacement_lower_bound(el, spec) > bound:
            continue
        out.setdefault(el.key(), el)
    # lexicographic on sign pattern, then translations by magnitude
    return sorted(
        out.values(),
        key=lambda e: (e.signs, tuple((abs(t), t) for t in e.shifts)),
    )


def _flat_displacement(f: SignedAffineIsometry, constant: float = 1.0):
    """Closed-form displacement in a flat metric with constant weight."""
    eu, ev, ez = f.signs
    tu, tv, tz = f.shifts
    du = constant * tu if eu == 1 else 0.0
    dv = tv if ev == 1 else 0.0
    dz = tz if ez == 1 else 0.0
    value = math.sqrt(du * du + dv * dv + dz * dz)
    base = ChartPoint(
        0.0 if eu == 1 else tu / 2.0,
        0.0 if ev == 1 else tv / 2.0,
        0.0 if ez == 1 else tz / 2.0,
    )
    return value, base


def _base_latitude_bounds(tu, tv, ev, vs):
    """Per-base-latitude lower bounds on d((0, v), (tu, ev*v + tv)).

    The reflective fold of both endpoints into the central band gives a
    sphere-distance bound (folding is a local isometry); the net
    latitude change and the weighted horizontal translation are bounds
    as well.
    """
    vs = np.asarray(vs, dtype=float)
    v2 = ev * vs + tv
    f1 = _distance.fold_latitude(vs)
    f2 = _distance.fold_latitude(v2)
    sphere = _distance.sphere_angle_array(f1, f2, tu)
    from .metric import WEIGHT_MIN

    return np.maximum.reduce([
        np.full_like(vs, WEIGHT_MIN * abs(tu)),
        np.abs(v2 - vs),
        sphere,
    ])


def _singular_surface_displacement(eu, ev, tu, tv, samples: int = 17):
    """Displacement of the surface part of a singular-chart deck element.

    For u-flips a transverse compression argument pins the infimum on
    the flip axis, leaving a vertical run of |t_v| (or zero when v also
    flips).  For u-translations the base latitude is optimized; the
    fold bound prunes the scan, and quarter-pi lattice latitudes (band
    equators and corners, where the distance evaluates in closed form)
    are tried first.
    """
    if eu == -1:
        if ev == -1:
            return 0.0, ChartPoint(tu / 2.0, tv / 2.0, 0.0)
        return abs(tv), ChartPoint(tu / 2.0, 0.0, 0.0)

    def profile_at(v):
        return _distance.surface_distance((0.0, v), (tu, ev * v + tv))

    period = HALF_PI if ev == 1 else math.pi
    center = 0.0 if ev == 1 else tv / 2.0
    lo_edge = center - period / 2.0
    hi_edge = center + period / 2.0
    best = math.inf
    best_v = center
    # quarter-pi lattice latitudes first (band equators and corners, where
    # the distance usually evaluates in closed form), working outward from
    # the scan center so cheap exact hits prune the boundary ones
    k0 = int(math.ceil(lo_edge / QUARTER_PI))
    k1 = int(math.floor(hi_edge / QUARTER_PI))
    specials = sorted((k * QUARTER_PI for k in range(k0, k1 + 1)),
                      key=lambda v: abs(v - center))
    for v in specials:
        lbs = _base_latitude_bounds(tu, tv, ev, [v])
        if lbs[0] >= best - 1e-12:
            continue
        val = profile_at(v)
        if val < best:
            best, best_v = val, v
    vs = np.linspace(lo_edge, hi_edge, samples)
    lbs = _base_latitude_bounds(tu, tv, ev, vs)
    order = np.argsort(lbs, kind="stable")
    for idx in order:
        if lbs[idx] >= best - 1e-9:
            break
        val = profile_at(float(vs[idx]))
        if val < best:
            best, best_v = val, float(vs[idx])
    # local refinement unless the fold bound already certifies the value
    global_lb = float(np.min(_base_latitude_bounds(tu, tv, ev,
                                                   np.linspace(lo_edge, hi_edge, 257))))
    if best - global_lb > 1e-9:
        span = (hi_edge - lo_edge) / (samples - 1)
        res = optimize.minimize_scalar(
            profile_at,
            bounds=(best_v - span, best_v + span),
            method="bounded",
            options={"xatol": 1e-9},
        )
        if res.fun < best:
            best, best_v = float(res.fun), float(res.x)
    return best, ChartPoint(0.0, best_v, 0.0)


def displacement(f: SignedAffineIsometry, spec: MetricSpec, m: ManifoldSpec = None):
    """Infimal displacement ``inf_p d(p, f(p))`` and a base point achieving it.

    For an isometry of the quotient that is not itself a deck element
    (``m`` supplied, ``f`` outside the group), the infimum is taken over
    the whole deck coset, matching the shortest closed curve in the
    induced class.
    """
    if f.is_identity:
        return 0.0, ChartPoint(0.0, 0.0, 0.0)
    if m is not None:
        group = deck_group(m)
        if not group.contains(f):
            # quotient isometry: minimize over the deck coset (free class)
            best_val, best_base = displacement(f, spec)
            cands = [w.compose(f) for w in enumerate_elements(group, spec, bound=4 * math.pi)]
            cands.sort(key=lambda e: displacement_lower_bound(e, spec))
            for cand in cands:
                if displacement_lower_bound(cand, spec) >= best_val - 1e-12:
                    break
                val, base = displacement(cand, spec)
                if val < best_val:
                    best_val, best_base = val, base
            return best_val, best_base
    if not spec.profile.is_singular:
        value, base = _flat_displacement(f, spec.profile.constant)
        return value, base
    eu, ev, ez = f.signs
    tu, tv, tz = f.shifts
    dz = abs(tz) if ez == 1 else 0.0
    d2, base = _singular_surface_displacement(eu, ev, tu, tv)
    bz = 0.0 if ez == 1 else tz / 2.0
    return math.hypot(d2, dz), ChartPoint(base.u, base.v, bz)


def canonical_point(m: ManifoldSpec, p) -> ChartPoint:
    """Deck-reduce a chart point into the standard fundamental box.

    The box is ``[0, a/2) x [0, b) x [0, height)`` for Klein-based
    manifolds and the basis parallelepiped for tori.
    """
    p = as_point(p)
    u, v, z = p.u, p.v, p.z
    if m.topology in (Topology.TORUS2, Topology.TORUS3):
        basis = np.asarray(m.basis, dtype=float)
        dim = basis.shape[0]
        x = np.array([u, v, z])[:dim]
        coeffs = np.floor(np.linalg.solve(basis.T, x))
        x = x - basis.T @ coeffs
        out = np.zeros(3)
        out[:dim] = x
        return ChartPoint(*out)
    au = m.a / 2.0
    bv = m.b
    if m.dimension == 3:
        height = m.L if m.topology is Topology.KLEIN_CROSS_CIRCLE else m.d
        susp = deck_group(m).generators[2]
        k = int(math.floor(z / height))
        pt = susp.power(-k).apply((u, v, z))
        u, v, z = pt.u, pt.v, pt.z
    mshift = int(math.floor(u / au))
    u -= mshift * au
    if mshift % 2 != 0:
        v = -v
    v -= bv * math.floor(v / bv)
    return ChartPoint(u, v, z)
