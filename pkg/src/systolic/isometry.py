"""Sign-flip-plus-translation maps of the chart and deck groups built from them.

Every symmetry used in this package (screw motions, latitude
reflections, suspension generators, plain translations) acts on the
chart as ``(u, v, z) -> (eps_u u + t_u, eps_v v + t_v, eps_z z + t_z)``
with signs in {-1, +1}.  The family is closed under composition and
inversion, so deck groups are represented as finite generator lists of
such maps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .metric import HALF_PI, ChartPoint, MetricSpec, as_point

_KEY_DECIMALS = 9


def _axis_key(t: float) -> tuple:
    """Canonical (k, r) decomposition t = k*(pi/2) + r with r in [-pi/4, pi/4).

    Rational-in-pi translations reduce to exact integer parts, which
    makes membership and deduplication tests stable under composition
    roundoff.
    """
    k = int(round(t / HALF_PI))
    r = t - k * HALF_PI
    r = round(r, _KEY_DECIMALS)
    if r >= round(HALF_PI / 2, _KEY_DECIMALS):
        k += 1
        r = round(t - k * HALF_PI, _KEY_DECIMALS)
    elif r < -round(HALF_PI / 2, _KEY_DECIMALS):
        k -= 1
        r = round(t - k * HALF_PI, _KEY_DECIMALS)
    if r == 0.0:
        r = 0.0  # normalize -0.0
    return (k, r)


@dataclass(frozen=True)
class SignedAffineIsometry:
    """The chart map ``p -> signs * p + shifts`` (componentwise)."""

    signs: tuple
    shifts: tuple

    def __post_init__(self):
        if len(self.signs) != 3 or len(self.shifts) != 3:
            raise ValueError("signs and shifts must be length-3 tuples")
        if any(s not in (-1, 1) for s in self.signs):
            raise ValueError("signs must be +1 or -1")
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        object.__setattr__(self, "shifts", tuple(float(t) for t in self.shifts))

    @classmethod
    def identity(cls) -> "SignedAffineIsometry":
        return cls((1, 1, 1), (0.0, 0.0, 0.0))

    @classmethod
    def translation(cls, tu: float, tv: float = 0.0, tz: float = 0.0) -> "SignedAffineIsometry":
        return cls((1, 1, 1), (tu, tv, tz))

    @property
    def is_identity(self) -> bool:
        return self.signs == (1, 1, 1) and all(abs(t) < 1e-12 for t in self.shifts)

    def apply(self, p) -> ChartPoint:
        p = as_point(p)
        eu, ev, ez = self.signs
        tu, tv, tz = self.shifts
        return ChartPoint(eu * p.u + tu, ev * p.v + tv, ez * p.z + tz)

    def apply_array(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts * np.asarray(self.signs, dtype=float) + np.asarray(self.shifts)

    def __call__(self, p):
        return self.apply(p)

    def compose(self, other: "SignedAffineIsometry") -> "SignedAffineIsometry":
        """The map ``self o other`` (apply ``other`` first)."""
        s1, t1 = self.signs, self.shifts
        s2, t2 = other.signs, other.shifts
        signs = tuple(a * b for a, b in zip(s1, s2))
        shifts = tuple(a * t + u for a, t, u in zip(s1, t2, t1))
        return SignedAffineIsometry(signs, shifts)

    def inverse(self) -> "SignedAffineIsometry":
        s = self.signs
        shifts = tuple(-si * ti for si, ti in zip(s, self.shifts))
        return SignedAffineIsometry(s, shifts)

    def power(self, n: int) -> "SignedAffineIsometry":
        out = SignedAffineIsometry.identity()
        base = self if n >= 0 else self.inverse()
        for _ in range(abs(n)):
            out = base.compose(out)
        return out

    def key(self) -> tuple:
        """Hashable canonical form used for dedup and membership tests."""
        return self.signs + tuple(_axis_key(t) for t in self.shifts)

    def same_as(self, other: "SignedAffineIsometry", tol: float = 1e-9) -> bool:
        return self.signs == other.signs and all(
            abs(a - b) <= tol for a, b in zip(self.shifts, other.shifts)
        )


def compose(f: SignedAffineIsometry, g: SignedAffineIsometry) -> SignedAffineIsometry:
    """Composition ``f o g``; signs multiply, translations compose affinely."""
    return f.compose(g)


def is_isometry_of(f: SignedAffineIsometry, spec: MetricSpec) -> bool:
    """Whether ``f`` preserves the metric of ``spec``.

    The only non-trivial requirement is on the latitude translation:
    for the singular profile the weight is even and pi/2-periodic, so
    ``f`` is an isometry exactly when t_v is an integer multiple of
    pi/2.  Flat constant profiles admit every signed-affine map.
    """
    if not spec.profile.is_singular:
        return True
    tv = f.shifts[1]
    return abs(tv / HALF_PI - round(tv / HALF_PI)) < 1e-9


@dataclass(frozen=True)
class DeckGroup:
    """A finitely generated group of chart isometries.

    ``generators`` are ordered; groups built by
    :func:`systolic.manifolds.deck_group` satisfy the normal form
    ``g_k^{e_k} ... g_1^{e_1}`` used by the element enumerator.
    """

    name: str
    generators: tuple
    metric_spec: MetricSpec

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))

    def generator_ball(self, depth: int) -> dict:
        """All products of at most ``depth`` generator letters, keyed canonically."""
        letters = list(self.generators) + [g.inverse() for g in self.generators]
        found = {SignedAffineIsometry.identity().key(): SignedAffineIsometry.identity()}
        frontier = [SignedAffineIsometry.identity()]
        for _ in range(depth):
            nxt = []
            for w in frontier:
                for g in letters:
                    e = g.compose(w)
                    k = e.key()
                    if k not in found:
                        found[k] = e
                        nxt.append(e)
            frontier = nxt
        return found

    def contains(self, f: SignedAffineIsometry, depth: int = 8) -> bool:
        """Word search membership test, exact on the canonical keys.

        The search expands words whose translation stays within the
        target's translation plus a one-generator slack, which reaches
        every element of the crystallographic groups built here.
        """
        target = f.key()
        letters = list(self.generators) + [g.inverse() for g in self.generators]
        gen_step = max(
            (max(abs(t) for t in g.shifts) for g in self.generators), default=1.0
        )
        limit = max(abs(t) for t in f.shifts) + 2.0 * gen_step + 1e-6
        seen = {SignedAffineIsometry.identity().key()}
        frontier = [SignedAffineIsometry.identity()]
        for _ in range(depth):
            nxt = []
            for w in frontier:
                for g in letters:
                    e = g.compose(w)
                    k = e.key()
                    if k in seen:
                        continue
                    if k == target:
                        return True
                    if max(abs(t) for t in e.shifts) > limit:
                        continue
                    seen.add(k)
                    nxt.append(e)
            if not nxt:
                break
            frontier = nxt
        return target in seen


def descends(f: SignedAffineIsometry, group: DeckGroup) -> bool:
    """Whether ``f`` normalizes ``group`` and therefore induces a map downstairs.

    Non-isometries are rejected outright; otherwise conjugation must map
    every generator back into the group.
    """
    if not is_isometry_of(f, group.metric_spec):
        return False
    finv = f.inverse()
    for g in group.generators:
        conj = f.compose(g).compose(finv)
        if not group.contains(conj):
            return False
    return True
