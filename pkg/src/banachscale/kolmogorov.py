"""Finite ordered bases, sections, and norm-map calculus.

A `FiniteBase` is a finite partially ordered set of base points: radii,
(level, radius) pairs, or tuples in R^n, ordered componentwise.  A
`Section` assigns one `TruncatedSeries` to each point together with a
cached norm; horizontality means every value is the restriction of the
value above it.  Norm maps (plain dicts point -> float) support
kolmogorification (sup over down-sets), the opposite construction (sup
over up-sets), and rescaling by a positive weight.

The monotonicity convention: a norm map N is "Kolmogorov" when
N(b) <= N(a) for b <= a, which is exactly "restriction maps have norm at
most one" for the function-space model (majorant norms grow with the
radius).  Continuous bases are never materialized; iteration engines
handle radius schedules themselves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from .series import SeriesError, TruncatedSeries

__all__ = ["FiniteBase", "Section", "OrderError", "restrict",
           "sup_norm_over", "kolmogorify", "opposite_kolmogorify",
           "rescale", "RescaleResult", "kolmogorov_property"]


class OrderError(ValueError):
    """Order violation or malformed base."""


def _coords(point) -> tuple[float, ...]:
    if isinstance(point, (int, float)):
        return (float(point),)
    if isinstance(point, tuple):
        return tuple(float(x) for x in point)
    raise OrderError(f"unsupported base point {point!r}")


class FiniteBase:
    """Finite poset of base points under componentwise order."""

    def __init__(self, points: Iterable):
        self.points = list(points)
        if not self.points:
            raise OrderError("base must be nonempty")
        self._coords = {}
        arity = None
        for p in self.points:
            c = _coords(p)
            if arity is None:
                arity = len(c)
            elif len(c) != arity:
                raise OrderError("mixed point arities in one base")
            self._coords[p] = c
        # componentwise order is antisymmetric iff no two distinct points
        # share coordinates
        seen = {}
        for p, c in self._coords.items():
            if c in seen:
                raise OrderError(f"points {seen[c]!r} and {p!r} coincide")
            seen[c] = p
        self.arity = arity

    def __contains__(self, point) -> bool:
        return point in self._coords

    def __iter__(self):
        return iter(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def leq(self, a, b) -> bool:
        """a <= b componentwise."""
        ca, cb = self._coords[a], self._coords[b]
        return all(x <= y for x, y in zip(ca, cb))

    def comparable(self, a, b) -> bool:
        return self.leq(a, b) or self.leq(b, a)

    def down_set(self, b) -> list:
        return [p for p in self.points if self.leq(p, b)]

    def up_set(self, b) -> list:
        return [p for p in self.points if self.leq(b, p)]

    @property
    def is_chain(self) -> bool:
        return all(self.comparable(a, b)
                   for i, a in enumerate(self.points)
                   for b in self.points[i + 1:])

    def radius_of(self, point) -> float:
        """Radius coordinate: the point itself for scalars, the last
        component for (level, radius) pairs."""
        return self._coords[point][-1]

    def to_json_dict(self) -> dict:
        return {"points": [list(self._coords[p]) for p in self.points]}


def restrict(f: TruncatedSeries, t: float, s: float) -> TruncatedSeries:
    """Restriction morphism from radius t down to s.

    Coefficients are untouched; the tail rescales by the certified decay
    factor.  Requires s <= t <= ref_radius: no extrapolation.
    """
    if s > t:
        raise OrderError(f"restriction must go down: {s} > {t}")
    if t > f.ref_radius:
        raise OrderError(f"{t} beyond certified radius {f.ref_radius}")
    return f.restrict(s)


class Section:
    """One series per base point with a cached norm per point."""

    def __init__(self, base: FiniteBase,
                 values: Mapping[object, TruncatedSeries],
                 norm_of: Callable[[object, TruncatedSeries], float] | None = None):
        if set(values.keys()) != set(base.points):
            raise OrderError("section must assign a value to every base point")
        self.base = base
        self.values = dict(values)
        if norm_of is None:
            norm_of = lambda p, f: f.majorant_norm(base.radius_of(p)).value
        self._norm_of = norm_of
        self.norms = {p: float(norm_of(p, self.values[p])) for p in base.points}

    def __add__(self, other: "Section") -> "Section":
        if other.base is not self.base:
            raise OrderError("sections live over different bases")
        return Section(self.base,
                       {p: self.values[p] + other.values[p] for p in self.base},
                       self._norm_of)

    def scale(self, c: complex) -> "Section":
        return Section(self.base,
                       {p: self.values[p].scale(c) for p in self.base},
                       self._norm_of)

    def horizontal(self, tol: float = 1e-12) -> bool:
        """True when for every comparable pair a >= b the value at b is the
        restriction of the value at a: equal coefficients, and the tail at
        b not exceeding the restricted tail (a lower point may carry a
        sharper certificate, never a looser one)."""
        for a in self.base:
            for b in self.base:
                if a is b or not self.base.leq(b, a):
                    continue
                ra = self.base.radius_of(a)
                rb = self.base.radius_of(b)
                try:
                    down = restrict(self.values[a], ra, rb)
                except (OrderError, SeriesError):
                    return False
                vb = self.values[b]
                if down.coeffs.shape != vb.coeffs.shape:
                    return False
                if not bool((abs(down.coeffs - vb.coeffs) <= tol).all()):
                    return False
                if vb.tail > down.tail + tol:
                    return False
        return True

    def to_json_dict(self) -> dict:
        return {
            "base": self.base.to_json_dict(),
            "values": [self.values[p].to_json_dict() for p in self.base],
            "norms": [self.norms[p] for p in self.base],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


def sup_norm_over(section: Section, subset: Iterable | None = None) -> float:
    """sup of the cached pointwise norms over a nonempty subset."""
    points = list(section.base.points if subset is None else subset)
    if not points:
        raise OrderError("norm over an empty subset is undefined")
    for p in points:
        if p not in section.base:
            raise OrderError(f"{p!r} not in the base")
    return max(section.norms[p] for p in points)


def kolmogorov_property(norms: Mapping, base: FiniteBase,
                        tol: float = 0.0) -> bool:
    """Restriction maps have norm <= 1: N(b) <= N(a) whenever b <= a."""
    for a in base:
        for b in base:
            if a is not b and base.leq(b, a) and norms[b] > norms[a] + tol:
                return False
    return True


def kolmogorify(norms: Mapping, base: FiniteBase) -> dict:
    """New norm at b = sup of the input over the down-set of b.

    Output satisfies the Kolmogorov property and the map is idempotent;
    on an already-monotone input it is the identity.
    """
    return {b: max(norms[p] for p in base.down_set(b)) for b in base}


def opposite_kolmogorify(norms: Mapping, base: FiniteBase) -> dict:
    """Dual construction: sup over up-sets; output antitone."""
    return {b: max(norms[p] for p in base.up_set(b)) for b in base}


@dataclass(frozen=True)
class RescaleResult:
    norms: dict
    kolmogorov: bool


def rescale(norms: Mapping, weight, base: FiniteBase) -> RescaleResult:
    """Pointwise reweighted norm map b -> weight(b) * N(b).

    weight is a callable or a mapping; it must be positive on the base.
    The result records whether the Kolmogorov property survived: it always
    does when the weight is nondecreasing along the order and the input
    was monotone, and a decreasing weight can destroy it (kolmogorify
    repairs the damage).
    """
    get = weight if callable(weight) else weight.__getitem__
    scaled = {}
    for p in base:
        w = float(get(p))
        if not (w > 0.0 and math.isfinite(w)):
            raise OrderError(f"weight must be positive and finite at {p!r}")
        scaled[p] = w * float(norms[p])
    still = kolmogorov_property(scaled, base, tol=1e-15 * max(scaled.values()))
    weight_monotone = all(get(b) <= get(a) * (1 + 1e-15)
                          for a in base for b in base if base.leq(b, a))
    if weight_monotone and kolmogorov_property(norms, base) and not still:
        raise AssertionError("monotone weight must preserve the Kolmogorov "
                             "property; norm bookkeeping is inconsistent")
    return RescaleResult(scaled, still)
