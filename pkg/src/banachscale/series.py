"""Truncated power series with certified tail bounds.

A `TruncatedSeries` stores exact coefficients for every multi-index I
with |I| <= cap plus one scalar `tail` >= 0 certified at `ref_radius`:
the discarded part h of the represented function satisfies

    sum_{|I| > cap} |h_I| t^|I|  <=  tail * (t / ref_radius)^(cap+1)

for all 0 < t <= ref_radius (Taylor basis; the Fourier basis on a strip
uses weights e^(|k| t) and the rescaling e^((cap+1)(t - ref_radius))).
Operations propagate both the coefficients (exactly, up to float
rounding) and the tail (conservatively), so the majorant norm

    |f|_t  =  sum_|I|<=cap |a_I| t^|I|  +  tail * (t/ref_radius)^(cap+1)

is a true upper bound for the l1 coefficient norm of the represented
function at radius t.  The Hilbert norm on the polydisc,

    |f|_H,t^2 = sum_I |a_I|^2 C(I) t^(2d + 2|I|),   C(I) = pi^d / prod(1 + i_k),

is exact and is the norm in which the degree-cutoff estimate
|[f]_N|_s <= (s/t)^(d+N) |f|_t holds.

Tail bookkeeping rules worth knowing (each documented at the operation):

* multiply: T_fg = |f|_ref T_g + |g|_ref T_f + overflow of the exact
  convolution beyond the cap, majorized at ref_radius (the |f|_ref T_g
  cross terms double-count T_f T_g, which keeps the bound safe);
* derivative with tail > 0 must shrink to an explicit smaller radius s:
  the monomialwise Cauchy bound n s^(n-1) (r - s) <= r^n gives
  T' = T / (r - s), and the cap drops by one because the new top
  coefficient depends on an unknown coefficient of f;
* divide_by_coordinate adds (sub-tolerance residue)/ref_radius to the
  tail and likewise drops the cap by one when a tail is present.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import convolve as _convolve

__all__ = ["TruncatedSeries", "NormValue", "SeriesError",
            "DEFAULT_CAP_1D", "DEFAULT_CAP_ND", "DEFAULT_ORDER_TOL"]

DEFAULT_CAP_1D = 64
DEFAULT_CAP_ND = 16
DEFAULT_ORDER_TOL = 1e-12


class SeriesError(ValueError):
    """Domain or compatibility error in a series operation."""


@dataclass(frozen=True)
class NormValue:
    """A certified norm evaluation: which norm, at which radius."""

    kind: str       # 'majorant' | 'hilbert'
    radius: float
    value: float

    def __float__(self) -> float:
        return self.value


@lru_cache(maxsize=64)
def _degree_grid(dim: int, side: int) -> np.ndarray:
    """Total degree of every entry of a dim-dimensional (side,)*dim array."""
    return np.indices((side,) * dim).sum(axis=0)


@lru_cache(maxsize=64)
def _hilbert_c(dim: int, side: int) -> np.ndarray:
    """C(I) = pi^d / prod_k (1 + i_k) on the coefficient grid."""
    grids = np.indices((side,) * dim).astype(float)
    denom = np.prod(grids + 1.0, axis=0)
    return math.pi ** dim / denom


class TruncatedSeries:
    """Polynomial part + certified scalar tail, Taylor or Fourier basis."""

    __slots__ = ("dim", "cap", "ref_radius", "basis", "coeffs", "tail")

    def __init__(self, dim: int, cap: int, ref_radius: float,
                 basis: str = "taylor", coeffs: np.ndarray | None = None,
                 tail: float = 0.0):
        if basis not in ("taylor", "fourier"):
            raise SeriesError(f"unknown basis {basis!r}")
        if basis == "fourier" and dim != 1:
            raise SeriesError("fourier basis is univariate")
        if dim < 1 or cap < 0:
            raise SeriesError("need dim >= 1 and cap >= 0")
        if not (ref_radius > 0):
            raise SeriesError("ref_radius must be positive")
        if tail < 0:
            raise SeriesError("tail must be nonnegative")
        self.dim = dim
        self.cap = cap
        self.ref_radius = float(ref_radius)
        self.basis = basis
        shape = (2 * cap + 1,) if basis == "fourier" else (cap + 1,) * dim
        if coeffs is None:
            coeffs = np.zeros(shape, dtype=complex)
        else:
            coeffs = np.asarray(coeffs, dtype=complex)
            if coeffs.shape != shape:
                raise SeriesError(f"coefficient shape {coeffs.shape} != {shape}")
            coeffs = coeffs.copy()
        if basis == "taylor" and dim > 1:
            coeffs[_degree_grid(dim, cap + 1) > cap] = 0.0
        self.coeffs = coeffs
        self.tail = float(tail)

    # -- constructors --

    @staticmethod
    def zero(dim: int = 1, cap: int = DEFAULT_CAP_1D, ref_radius: float = 1.0,
             basis: str = "taylor") -> "TruncatedSeries":
        return TruncatedSeries(dim, cap, ref_radius, basis)

    @staticmethod
    def monomial(exponents, coeff: complex = 1.0, *, cap: int = DEFAULT_CAP_1D,
                 ref_radius: float = 1.0) -> "TruncatedSeries":
        if isinstance(exponents, int):
            exponents = (exponents,)
        dim = len(exponents)
        s = TruncatedSeries(dim, cap, ref_radius)
        if sum(exponents) > cap:
            raise SeriesError("monomial degree exceeds cap")
        s.coeffs[tuple(exponents)] = coeff
        return s

    @staticmethod
    def fourier_mode(k: int, coeff: complex = 1.0, *, cap: int = DEFAULT_CAP_1D,
                     strip: float = 1.0) -> "TruncatedSeries":
        s = TruncatedSeries(1, cap, strip, basis="fourier")
        if abs(k) > cap:
            raise SeriesError("mode exceeds cap")
        s.coeffs[k + cap] = coeff
        return s

    def copy(self) -> "TruncatedSeries":
        return TruncatedSeries(self.dim, self.cap, self.ref_radius, self.basis,
                               self.coeffs, self.tail)

    # -- indexing helpers --

    def _degrees(self) -> np.ndarray:
        if self.basis == "fourier":
            return np.abs(np.arange(-self.cap, self.cap + 1))
        return _degree_grid(self.dim, self.cap + 1)

    def coefficient(self, index) -> complex:
        if self.basis == "fourier":
            return complex(self.coeffs[int(index) + self.cap])
        if isinstance(index, int):
            index = (index,)
        return complex(self.coeffs[tuple(index)])

    def set_coefficient(self, index, value: complex) -> None:
        if self.basis == "fourier":
            self.coeffs[int(index) + self.cap] = value
            return
        if isinstance(index, int):
            index = (index,)
        if sum(index) > self.cap:
            raise SeriesError("index beyond cap")
        self.coeffs[tuple(index)] = value

    @property
    def is_zero(self) -> bool:
        return self.tail == 0.0 and not np.any(self.coeffs)

    def _check_compatible(self, other: "TruncatedSeries") -> None:
        if (self.dim, self.basis) != (other.dim, other.basis):
            raise SeriesError("mixed dimensions or bases")
        if self.cap != other.cap:
            raise SeriesError("mixed caps")
        if self.ref_radius != other.ref_radius:
            raise SeriesError(
                f"mixed reference radii {self.ref_radius} != {other.ref_radius}"
                " (restrict first)")

    # -- ring operations --

    def __add__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        self._check_compatible(other)
        return TruncatedSeries(self.dim, self.cap, self.ref_radius, self.basis,
                               self.coeffs + other.coeffs,
                               self.tail + other.tail)

    def __sub__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        self._check_compatible(other)
        return TruncatedSeries(self.dim, self.cap, self.ref_radius, self.basis,
                               self.coeffs - other.coeffs,
                               self.tail + other.tail)

    def scale(self, c: complex) -> "TruncatedSeries":
        return TruncatedSeries(self.dim, self.cap, self.ref_radius, self.basis,
                               self.coeffs * c, self.tail * abs(c))

    def __neg__(self) -> "TruncatedSeries":
        return self.scale(-1.0)

    def _poly_majorant(self, t: float) -> float:
        """Majorant of the stored coefficients alone, tail excluded."""
        deg = self._degrees()
        if self.basis == "fourier":
            return float(np.sum(np.abs(self.coeffs) * np.exp(deg * t)))
        return float(np.sum(np.abs(self.coeffs) * np.power(t, deg, dtype=float)))

    def multiply(self, other: "TruncatedSeries") -> "TruncatedSeries":
        """Exact truncated product; convolution overflow past the cap is
        majorized at ref_radius and folded into the tail together with the
        |f_poly| T_g + |g_poly| T_f + T_f T_g cross terms.

        The certified norm is submultiplicative at ref_radius.  Below
        ref_radius it stays sound but can exceed |f|_t |g|_t when both
        factors carry tails: the scalar tail model cannot remember that
        tail x tail starts at degree 2 cap + 2.
        """
        self._check_compatible(other)
        r = self.ref_radius
        full = _convolve(self.coeffs, other.coeffs, mode="full", method="direct")
        if self.basis == "fourier":
            # full index runs over k in [-2cap, 2cap]
            k = np.arange(-2 * self.cap, 2 * self.cap + 1)
            keep = np.abs(k) <= self.cap
            kept = full[keep]
            overflow = float(np.sum(np.abs(full[~keep])
                                    * np.exp(np.abs(k[~keep]) * r)))
        else:
            deg = _degree_grid(self.dim, 2 * self.cap + 1)
            keep_mask = deg <= self.cap
            overflow = float(np.sum(np.abs(full[~keep_mask])
                                    * np.power(r, deg[~keep_mask],
                                               dtype=float)))
            corner = tuple(slice(0, self.cap + 1) for _ in range(self.dim))
            kept = np.where(keep_mask, full, 0.0)[corner]
        cross = (self._poly_majorant(r) * other.tail
                 + other._poly_majorant(r) * self.tail
                 + self.tail * other.tail)
        return TruncatedSeries(self.dim, self.cap, r, self.basis, kept,
                               cross + overflow)

    def reciprocal(self) -> "TruncatedSeries":
        """1/f via the Neumann sum (1/c) sum_k (1 - f/c)^k, c = f(0).

        Requires the majorant norm of 1 - f/c at ref_radius to be < 1; the
        analytic remainder beyond the computed sum is the geometric bound
        theta^(cap+1) / (1 - theta), added to the tail.
        """
        if self.basis != "taylor":
            raise SeriesError("reciprocal implemented for taylor basis")
        origin = (0,) * self.dim
        c = self.coefficient(origin)
        if c == 0:
            raise SeriesError("reciprocal needs a unit constant term")
        u = self.scale(-1.0 / c)
        u.coeffs[origin] += 1.0               # u = 1 - f/c
        # Rounding can leave a ~1e-16 constant term in u; fold it into c so
        # u has exact order >= 1 and the geometric remainder keeps high order.
        eta = complex(u.coeffs[origin])
        if eta != 0:
            u.coeffs[origin] = 0.0
            c = c * (1.0 - eta)
            u = u.scale(1.0 / (1.0 - eta))
        theta = u.majorant_norm(self.ref_radius).value
        if theta >= 1.0:
            raise SeriesError(f"not invertible at this radius (theta={theta})")
        one = TruncatedSeries(self.dim, self.cap, self.ref_radius)
        one.coeffs[origin] = 1.0
        acc = one.copy()
        for _ in range(self.cap):
            acc = one + u.multiply(acc)       # Horner: 1 + u(1 + u(...))
        remainder = theta ** (self.cap + 1) / (1.0 - theta)
        out = acc.scale(1.0 / c)
        out.tail += remainder / abs(c)
        return out

    # -- norms --

    def majorant_norm(self, t: float) -> NormValue:
        if not (0.0 < t <= self.ref_radius):
            raise SeriesError(f"radius {t} outside (0, {self.ref_radius}]")
        deg = self._degrees()
        if self.basis == "fourier":
            value = float(np.sum(np.abs(self.coeffs) * np.exp(deg * t)))
            value += self.tail * math.exp((self.cap + 1) * (t - self.ref_radius))
        else:
            value = float(np.sum(np.abs(self.coeffs)
                                 * np.power(t, deg, dtype=float)))
            value += self.tail * (t / self.ref_radius) ** (self.cap + 1)
        return NormValue("majorant_sup", t, value)

    def hilbert_norm(self, t: float) -> NormValue:
        if self.basis != "taylor":
            raise SeriesError("hilbert norm defined for taylor basis")
        if self.tail != 0.0:
            raise SeriesError("hilbert norm needs an exact polynomial (tail 0)")
        if not (0.0 < t <= self.ref_radius):
            raise SeriesError(f"radius {t} outside (0, {self.ref_radius}]")
        deg = self._degrees()
        c = _hilbert_c(self.dim, self.cap + 1)
        sq = np.sum(np.abs(self.coeffs) ** 2 * c
                    * np.power(t, 2 * self.dim + 2 * deg, dtype=float))
        return NormValue("hilbert", t, float(math.sqrt(sq)))

    # -- calculus --

    def derivative(self, axis: int = 0, *, at: float | None = None
                   ) -> "TruncatedSeries":
        """d/dz_axis (Taylor) or d/dx (Fourier: c_k -> i k c_k).

        Exact when tail == 0.  With a tail the result lives at a strictly
        smaller radius `at` (default: the worst-case maximizer
        ref_radius * cap / (cap + 1)) and the tail propagates as described
        in the module docstring.
        """
        if self.tail > 0.0 and at is None:
            at = self.ref_radius * self.cap / (self.cap + 1)
        if self.basis == "fourier":
            k = np.arange(-self.cap, self.cap + 1)
            coeffs = self.coeffs * (1j * k)
            if self.tail == 0.0:
                return TruncatedSeries(1, self.cap, self.ref_radius, "fourier",
                                       coeffs, 0.0)
            if at is None or not (0.0 < at < self.ref_radius):
                raise SeriesError("derivative of a tailed series needs at < ref")
            delta = self.ref_radius - at
            kk = self.cap + 1
            sup = (kk * math.exp(-kk * delta) if kk >= 1.0 / delta
                   else 1.0 / (math.e * delta))
            return TruncatedSeries(1, self.cap, at, "fourier", coeffs,
                                   self.tail * sup)
        if not (0 <= axis < self.dim):
            raise SeriesError("axis out of range")
        shape = self.coeffs.shape
        idx = np.arange(1, shape[axis])
        shifted = np.take(self.coeffs, idx, axis=axis)
        mult_shape = [1] * self.dim
        mult_shape[axis] = len(idx)
        shifted = shifted * idx.reshape(mult_shape)
        pad = [(0, 0)] * self.dim
        pad[axis] = (0, 1)
        coeffs = np.pad(shifted, pad)
        if self.tail == 0.0:
            return TruncatedSeries(self.dim, self.cap, self.ref_radius,
                                   "taylor", coeffs, 0.0)
        if at is None or not (0.0 < at < self.ref_radius):
            raise SeriesError("derivative of a tailed series needs at < ref")
        if self.cap == 0:
            raise SeriesError("cap too small to differentiate a tailed series")
        new_cap = self.cap - 1
        corner = tuple(slice(0, new_cap + 1) for _ in range(self.dim))
        out = TruncatedSeries(self.dim, new_cap, at, "taylor", coeffs[corner],
                              self.tail / (self.ref_radius - at))
        return out

    def divide_by_coordinate(self, axis: int = 0,
                             tol: float = DEFAULT_ORDER_TOL
                             ) -> "TruncatedSeries":
        """f / z_axis for f with (numerically) vanishing z_axis = 0 face.

        Face coefficients must be <= tol in modulus; their majorant at
        ref_radius, divided by ref_radius, is added to the tail as the
        sub-tolerance residue.
        """
        if self.basis != "taylor":
            raise SeriesError("coordinate division is a taylor operation")
        if not (0 <= axis < self.dim):
            raise SeriesError("axis out of range")
        face = np.take(self.coeffs, 0, axis=axis)
        face_abs = np.abs(face)
        if np.any(face_abs > tol):
            raise SeriesError(
                f"not divisible: face coefficient {face_abs.max():g} > tol {tol:g}")
        if self.dim == 1:
            residue = float(face_abs[()] if face_abs.ndim == 0 else face_abs[0])
        else:
            fdeg = _degree_grid(self.dim - 1, self.cap + 1) if self.dim > 1 else 0
            residue = float(np.sum(face_abs * np.power(self.ref_radius, fdeg,
                                                       dtype=float)))
        idx = np.arange(1, self.coeffs.shape[axis])
        shifted = np.take(self.coeffs, idx, axis=axis)
        pad = [(0, 0)] * self.dim
        pad[axis] = (0, 1)
        coeffs = np.pad(shifted, pad)
        new_tail = (self.tail + residue) / self.ref_radius
        if self.tail > 0.0:
            if self.cap == 0:
                raise SeriesError("cap too small to divide a tailed series")
            new_cap = self.cap - 1
            corner = tuple(slice(0, new_cap + 1) for _ in range(self.dim))
            return TruncatedSeries(self.dim, new_cap, self.ref_radius, "taylor",
                                   coeffs[corner], new_tail)
        return TruncatedSeries(self.dim, self.cap, self.ref_radius, "taylor",
                               coeffs, new_tail)

    def cutoff(self, lo: int, hi: int | None = None) -> "TruncatedSeries":
        """Keep degrees (Taylor: total degree, Fourier: |k|) in [lo, hi).

        hi = None keeps everything from lo up, including the tail; a
        finite hi yields an exact polynomial window (tail dropped with the
        discarded high part).
        """
        deg = self._degrees()
        mask = deg >= lo if hi is None else (deg >= lo) & (deg < hi)
        coeffs = np.where(mask, self.coeffs, 0.0)
        tail = self.tail if hi is None else 0.0
        return TruncatedSeries(self.dim, self.cap, self.ref_radius, self.basis,
                               coeffs, tail)

    def order(self, tol: float = DEFAULT_ORDER_TOL) -> int:
        """Smallest degree carrying a coefficient above tol; cap+1 when
        none is detectable at this cap."""
        deg = self._degrees()
        big = np.abs(self.coeffs) > tol
        if not np.any(big):
            return self.cap + 1
        return int(deg[big].min())

    def shift(self, c: complex) -> "TruncatedSeries":
        """f(z + c) for univariate Taylor polynomials (tail must be 0).

        Exact binomial re-expansion; the new reference radius is
        ref_radius - |c| so the represented disc stays inside the old one.
        """
        if self.basis != "taylor" or self.dim != 1:
            raise SeriesError("shift is univariate taylor only")
        if self.tail != 0.0:
            raise SeriesError("shift needs an exact polynomial (tail 0)")
        if not (abs(c) < self.ref_radius):
            raise SeriesError("|c| must be below ref_radius")
        n = self.cap
        out = np.zeros(n + 1, dtype=complex)
        for m in range(n + 1):
            # g_m = sum_{j>=m} C(j, m) a_j c^(j-m)
            acc = 0.0 + 0.0j
            cp = 1.0 + 0.0j
            for j in range(m, n + 1):
                acc += math.comb(j, m) * complex(self.coeffs[j]) * cp
                cp *= c
            out[m] = acc
        new_ref = self.ref_radius - abs(c)
        return TruncatedSeries(1, n, new_ref, "taylor", out, 0.0)

    def with_cap(self, new_cap: int) -> "TruncatedSeries":
        """Re-truncate at a different degree cap.

        Raising the cap needs tail == 0 (the scalar tail certifies decay
        from its own cap and cannot be promoted).  Lowering the cap folds
        the dropped coefficients, majorized at ref_radius, into the tail;
        the old tail transfers unchanged since it decays faster than the
        new claim requires.
        """
        if new_cap == self.cap:
            return self.copy()
        if new_cap < 0:
            raise SeriesError("cap must be nonnegative")
        if new_cap > self.cap:
            if self.tail != 0.0:
                raise SeriesError("cannot widen the cap of a tailed series")
            out = TruncatedSeries(self.dim, new_cap, self.ref_radius,
                                  self.basis)
            if self.basis == "fourier":
                out.coeffs[new_cap - self.cap:new_cap + self.cap + 1] = \
                    self.coeffs
            else:
                corner = tuple(slice(0, self.cap + 1)
                               for _ in range(self.dim))
                out.coeffs[corner] = self.coeffs
            return out
        deg = self._degrees()
        drop = deg > new_cap
        r = self.ref_radius
        if self.basis == "fourier":
            extra = float(np.sum(np.abs(self.coeffs[drop])
                                 * np.exp(deg[drop] * r)))
            kept = self.coeffs[self.cap - new_cap:self.cap + new_cap + 1]
        else:
            extra = float(np.sum(np.abs(self.coeffs[drop])
                                 * np.power(r, deg[drop], dtype=float)))
            corner = tuple(slice(0, new_cap + 1) for _ in range(self.dim))
            kept = np.where(drop, 0.0, self.coeffs)[corner]
        return TruncatedSeries(self.dim, new_cap, r, self.basis, kept,
                               self.tail + extra)

    def restrict(self, s: float) -> "TruncatedSeries":
        """Move the reference radius down to s; coefficients unchanged,
        tail rescaled by its certified decay factor."""
        if not (0.0 < s <= self.ref_radius):
            raise SeriesError(f"cannot restrict {self.ref_radius} -> {s}")
        if s == self.ref_radius:
            return self.copy()
        if self.basis == "fourier":
            factor = math.exp((self.cap + 1) * (s - self.ref_radius))
        else:
            factor = (s / self.ref_radius) ** (self.cap + 1)
        return TruncatedSeries(self.dim, self.cap, s, self.basis, self.coeffs,
                               self.tail * factor)

    def evaluate(self, z) -> complex:
        """Point evaluation of the polynomial part (diagnostics only; the
        tail is not included)."""
        if self.basis == "fourier":
            k = np.arange(-self.cap, self.cap + 1)
            return complex(np.sum(self.coeffs * np.exp(1j * k * z)))
        if self.dim == 1:
            res = 0.0 + 0.0j
            for a in self.coeffs[::-1]:
                res = res * z + a
            return complex(res)
        z = np.asarray(z, dtype=complex)
        grids = np.indices(self.coeffs.shape)
        mono = np.ones(self.coeffs.shape, dtype=complex)
        for ax in range(self.dim):
            mono = mono * z[ax] ** grids[ax]
        return complex(np.sum(self.coeffs * mono))

    # -- serialization --

    def to_json_dict(self) -> dict:
        entries = []
        it = np.nditer(self.coeffs, flags=["multi_index"])
        for v in it:
            c = complex(v)
            if c != 0:
                if self.basis == "fourier":
                    idx = [it.multi_index[0] - self.cap]
                else:
                    idx = list(it.multi_index)
                entries.append(idx + [c.real, c.imag])
        return {
            "dim": self.dim,
            "cap": self.cap,
            "ref_radius": self.ref_radius,
            "basis": self.basis,
            "coeffs": entries,
            "tail": self.tail,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @staticmethod
    def from_json_dict(d: dict) -> "TruncatedSeries":
        s = TruncatedSeries(d["dim"], d["cap"], d["ref_radius"], d["basis"],
                            tail=d["tail"])
        for entry in d["coeffs"]:
            idx, re, im = entry[:-2], entry[-2], entry[-1]
            value = complex(re, im)
            if s.basis == "fourier":
                s.coeffs[idx[0] + s.cap] = value
            else:
                s.coeffs[tuple(idx)] = value
        return s

    @staticmethod
    def from_json(text: str) -> "TruncatedSeries":
        return TruncatedSeries.from_json_dict(json.loads(text))

    def __repr__(self) -> str:
        nz = int(np.count_nonzero(self.coeffs))
        return (f"TruncatedSeries(dim={self.dim}, cap={self.cap}, "
                f"ref={self.ref_radius:g}, basis={self.basis}, "
                f"nonzero={nz}, tail={self.tail:g})")
