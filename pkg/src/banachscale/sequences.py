"""Positive sequences, summability certificates and taming constructions.

A `PositiveSequence` is a symbolic family a_0, a_1, ... of positive reals
evaluated in log space throughout: the quantities of interest routinely
reach e^(+-alpha^n) at n ~ 60, far outside float range, while their
logarithms stay tame.

The central summability notion used everywhere downstream: a positive
monotone sequence is *admissible* when

    sum_k |log a_k| / 2^(k+1)  <  infinity.

(`bruno_check` certifies this with a closed-form tail bound where the
family admits one.)  The associated transform

    a^pi_n = prod_{k>=0} a_{k+n}^(-1/2^(k+1))

satisfies the recursion a^pi_{n+1} = a_n (a^pi_n)^2 and a^pi_0 is the
radius gate for the quadratic iteration z' = a_n z^2: starting below it
forces super-exponential decay, starting above forces blow-up.

A pair (a, b) with a >= 1, b <= 1, b -> 0 is *tame* when

    (*)    a_n b_n^2 <= b_{n+1}   for all n,

which makes b_n an invariant envelope for the mixed model iteration
x' = (a_n x^2 + b_n x) / 2.  `taming_epsilon` scales an envelope so that
(*) holds against a given admissible a on a window; `lemma_rho` builds
the doubly-exponentially-decaying schedule rho_n = K b_n c_n e^(-alpha^n)
together with sigma_n = 1 - rho_n^(1/2^n) used by the Lie scheduler.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .trace import IterationTrace, StepRecord

__all__ = [
    "PositiveSequence",
    "BrunoCertificate",
    "BrunoTransformResult",
    "TamePairReport",
    "TameBrunoResult",
    "LemmaRhoReport",
    "bruno_check",
    "bruno_transform",
    "tame_check",
    "tame_implies_bruno",
    "taming_epsilon",
    "taming_epsilon_log",
    "model_iteration",
    "lemma_rho",
]

LOG2 = math.log(2.0)


class SequenceDomainError(ValueError):
    """Raised when an operation's domain precondition fails."""


# ---- sequence families ----

class PositiveSequence:
    """Symbolic positive sequence with log-space evaluation.

    Families: geometric q^n, exp_power e^(sign*alpha^n), tabulated,
    and the closures product, power and (log-)scaled.  `log(n)` is the
    primary accessor; `value(n)` may over/underflow and is for display.
    """

    def __init__(self, family: str, **params):
        self.family = family
        self.params = params
        if family == "geometric":
            q = params["q"]
            if not (q > 0):
                raise SequenceDomainError("geometric ratio must be positive")
        elif family == "exp_power":
            if params["sign"] not in (-1, 1):
                raise SequenceDomainError("sign must be +1 or -1")
            if not (params["alpha"] > 0):
                raise SequenceDomainError("alpha must be positive")
        elif family == "tabulated":
            vals = np.asarray(params["values"], dtype=float)
            if vals.size == 0 or not np.all(vals > 0):
                raise SequenceDomainError("tabulated values must be positive")
            self.params = {"values": vals}
        elif family == "product":
            pass
        elif family == "power":
            pass
        elif family == "scaled":
            pass
        else:
            raise SequenceDomainError(f"unknown family {family!r}")

    # -- constructors --

    @staticmethod
    def geometric(q: float) -> "PositiveSequence":
        return PositiveSequence("geometric", q=float(q))

    @staticmethod
    def exp_power(sign: int, alpha: float) -> "PositiveSequence":
        return PositiveSequence("exp_power", sign=int(sign), alpha=float(alpha))

    @staticmethod
    def tabulated(values) -> "PositiveSequence":
        return PositiveSequence("tabulated", values=values)

    @staticmethod
    def constant(c: float) -> "PositiveSequence":
        return PositiveSequence.geometric(1.0).scaled(c)

    def __mul__(self, other: "PositiveSequence") -> "PositiveSequence":
        return PositiveSequence("product", factors=(self, other))

    def __pow__(self, p: float) -> "PositiveSequence":
        return PositiveSequence("power", base=self, exponent=float(p))

    def reciprocal(self) -> "PositiveSequence":
        return self ** -1.0

    def scaled(self, factor: float | None = None, *,
               log_factor: float | None = None) -> "PositiveSequence":
        """Multiply the whole sequence by a positive constant.

        The constant may be given in log space so that taming factors far
        below float range stay exact.
        """
        if (factor is None) == (log_factor is None):
            raise SequenceDomainError("give exactly one of factor, log_factor")
        if factor is not None:
            if not (factor > 0):
                raise SequenceDomainError("scale factor must be positive")
            log_factor = math.log(factor)
        return PositiveSequence("scaled", base=self, log_factor=float(log_factor))

    # -- evaluation --

    def log(self, n: int) -> float:
        """log a_n, exact up to float rounding."""
        if n < 0:
            raise SequenceDomainError("index must be nonnegative")
        f = self.family
        if f == "geometric":
            return n * math.log(self.params["q"])
        if f == "exp_power":
            return self.params["sign"] * self.params["alpha"] ** n
        if f == "tabulated":
            vals = self.params["values"]
            if n >= len(vals):
                raise SequenceDomainError(
                    f"tabulated sequence has {len(vals)} entries, index {n}")
            return math.log(vals[n])
        if f == "product":
            return sum(s.log(n) for s in self.params["factors"])
        if f == "power":
            return self.params["exponent"] * self.params["base"].log(n)
        if f == "scaled":
            return self.params["log_factor"] + self.params["base"].log(n)
        raise AssertionError(f)

    def value(self, n: int) -> float:
        """a_n as a float; may overflow to inf or underflow to 0."""
        lv = self.log(n)
        try:
            return math.exp(lv)
        except OverflowError:
            return math.inf

    def log_values(self, window: int) -> np.ndarray:
        return np.array([self.log(n) for n in range(window + 1)])

    def monotonicity(self, window: int) -> str:
        lv = self.log_values(window)
        d = np.diff(lv)
        if np.all(d >= 0):
            return "increasing"
        if np.all(d <= 0):
            return "decreasing"
        return "none"

    # -- closed-form tail bounds --

    def weighted_log_tail(self, offset: int, depth: int) -> float | None:
        """Upper bound for sum_{k>depth} |log a_{k+offset}| / 2^(k+1).

        Returns None when the family admits no closed form (tabulated
        leaves).  Bounds compose subadditively through products, powers
        and scalings, so every purely symbolic family gets one.
        """
        f = self.family
        N = depth
        if f == "geometric":
            c = abs(math.log(self.params["q"]))
            # sum_{k>N} (k+offset)/2^(k+1) = (N+offset+2)/2^(N+1)
            return c * (N + offset + 2.0) * math.pow(2.0, -(N + 1))
        if f == "exp_power":
            alpha = self.params["alpha"]
            if alpha >= 2.0:
                return None
            # sum_{k>N} alpha^(k+offset)/2^(k+1)
            #   = alpha^offset * (alpha/2)^(N+1) / (2 - alpha)
            logterm = offset * math.log(alpha) \
                + (N + 1) * math.log(alpha / 2.0) - math.log(2.0 - alpha)
            return math.exp(logterm)
        if f == "tabulated":
            return None
        if f == "product":
            total = 0.0
            for s in self.params["factors"]:
                t = s.weighted_log_tail(offset, depth)
                if t is None:
                    return None
                total += t
            return total
        if f == "power":
            t = self.params["base"].weighted_log_tail(offset, depth)
            return None if t is None else abs(self.params["exponent"]) * t
        if f == "scaled":
            t = self.params["base"].weighted_log_tail(offset, depth)
            if t is None:
                return None
            # |log(c a_k)| <= |log c| + |log a_k|
            return t + abs(self.params["log_factor"]) * math.pow(2.0, -(N + 1))
        raise AssertionError(f)

    def divergence_witness(self) -> bool:
        """True when the family alone certifies a divergent weighted log sum.

        Only an exp_power leaf with alpha >= 2 (possibly rescaled or raised
        to a nonzero power) is a witness; products are not, since factors
        may cancel.
        """
        f = self.family
        if f == "exp_power":
            return self.params["alpha"] >= 2.0
        if f == "power":
            return (self.params["exponent"] != 0.0
                    and self.params["base"].divergence_witness())
        if f == "scaled":
            return self.params["base"].divergence_witness()
        return False

    # -- serialization --

    def to_json_dict(self) -> dict:
        f = self.family
        if f == "geometric":
            return {"family": f, "q": self.params["q"]}
        if f == "exp_power":
            return {"family": f, "sign": self.params["sign"],
                    "alpha": self.params["alpha"]}
        if f == "tabulated":
            return {"family": f, "values": [float(v) for v in self.params["values"]]}
        if f == "product":
            return {"family": f,
                    "factors": [s.to_json_dict() for s in self.params["factors"]]}
        if f == "power":
            return {"family": f, "base": self.params["base"].to_json_dict(),
                    "exponent": self.params["exponent"]}
        if f == "scaled":
            return {"family": f, "base": self.params["base"].to_json_dict(),
                    "log_factor": self.params["log_factor"]}
        raise AssertionError(f)

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @staticmethod
    def from_json_dict(d: dict) -> "PositiveSequence":
        f = d["family"]
        if f == "geometric":
            return PositiveSequence.geometric(d["q"])
        if f == "exp_power":
            return PositiveSequence.exp_power(d["sign"], d["alpha"])
        if f == "tabulated":
            return PositiveSequence.tabulated(d["values"])
        if f == "product":
            factors = [PositiveSequence.from_json_dict(x) for x in d["factors"]]
            seq = factors[0]
            for s in factors[1:]:
                seq = seq * s
            return seq
        if f == "power":
            return PositiveSequence.from_json_dict(d["base"]) ** d["exponent"]
        if f == "scaled":
            return PositiveSequence.from_json_dict(d["base"]).scaled(
                log_factor=d["log_factor"])
        raise SequenceDomainError(f"unknown family {f!r}")

    @staticmethod
    def from_json(text: str) -> "PositiveSequence":
        return PositiveSequence.from_json_dict(json.loads(text))

    def __repr__(self) -> str:
        return f"PositiveSequence({self.to_json()})"


# ---- summability certificate ----

@dataclass(frozen=True)
class BrunoCertificate:
    """Outcome of the weighted log-sum check.

    partial_sum covers indices 0..depth; tail_bound, when available,
    dominates everything beyond, so partial_sum + tail_bound is a
    certified upper bound for the full sum.
    """

    verdict: str                 # 'bruno' | 'not_bruno' | 'inconclusive'
    partial_sum: float
    depth: int
    tail_bound: float | None
    monotone: str

    @property
    def total_bound(self) -> float | None:
        if self.tail_bound is None:
            return None
        return self.partial_sum + self.tail_bound


def bruno_check(a: PositiveSequence, depth: int = 60) -> BrunoCertificate:
    """Certify convergence of sum |log a_k| / 2^(k+1).

    Verdicts: 'bruno' when a closed-form tail bound exists (finite sum),
    'not_bruno' when the family itself witnesses divergence (an
    e^(+-alpha^n) leaf with alpha >= 2 contributes a term >= c > 0 for
    every k), 'inconclusive' otherwise (e.g. tabulated data).
    """
    partial = 0.0
    for k in range(depth + 1):
        partial += abs(a.log(k)) * math.pow(2.0, -(k + 1))
    if a.divergence_witness():
        return BrunoCertificate("not_bruno", partial, depth, None,
                                a.monotonicity(depth))
    tail = a.weighted_log_tail(0, depth)
    verdict = "bruno" if tail is not None else "inconclusive"
    return BrunoCertificate(verdict, partial, depth, tail, a.monotonicity(depth))


# ---- transform ----

@dataclass(frozen=True)
class BrunoTransformResult:
    """Truncated transform value with a log-space enclosure.

    log_value = -sum_{k<=depth} log a_{k+n} / 2^(k+1); when the family
    has a closed-form tail bound T the true log lies in
    [log_value - T, log_value] (terms beyond the truncation are >= 0
    since a >= 1), and `rigorous` is True.
    """

    n: int
    depth: int
    log_value: float
    log_lower: float
    rigorous: bool

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    @property
    def enclosure(self) -> tuple[float, float]:
        lo = math.exp(self.log_lower) if math.isfinite(self.log_lower) else 0.0
        return (lo, math.exp(self.log_value))

    @property
    def log_width(self) -> float:
        return self.log_value - self.log_lower


def bruno_transform(a: PositiveSequence, n: int = 0,
                    depth: int = 60) -> BrunoTransformResult:
    """Evaluate a^pi_n = prod_{k>=0} a_{k+n}^(-1/2^(k+1)), truncated.

    Requires a >= 1 and nondecreasing on the evaluated window (otherwise
    the one-sided enclosure logic is wrong and we refuse).
    """
    logs = [a.log(n + k) for k in range(depth + 1)]
    if min(logs) < 0.0:
        raise SequenceDomainError("transform needs a_k >= 1 on the window")
    if any(logs[i + 1] < logs[i] for i in range(len(logs) - 1)):
        raise SequenceDomainError("transform needs a nondecreasing on the window")
    log_trunc = -sum(lv * math.pow(2.0, -(k + 1)) for k, lv in enumerate(logs))
    # Pad both endpoints outward by a few ulps: the summation itself is
    # float arithmetic, so without padding "true value inside enclosure"
    # could fail by rounding alone.
    pad = 8.0 * sys.float_info.epsilon * (abs(log_trunc) + 1.0)
    tail = a.weighted_log_tail(n, depth)
    if tail is None:
        return BrunoTransformResult(n, depth, log_trunc + pad, -math.inf, False)
    return BrunoTransformResult(n, depth, log_trunc + pad,
                                log_trunc - tail - pad, True)


# ---- tame pairs ----

@dataclass(frozen=True)
class TamePairReport:
    window: int
    star_holds: tuple[bool, ...]   # (*) at n = 0..window-1
    a_ge_one: bool
    b_le_one: bool
    b_vanishing: bool
    first_violation: int | None

    @property
    def bounds_hold(self) -> bool:
        return self.a_ge_one and self.b_le_one and self.b_vanishing

    @property
    def tame(self) -> bool:
        return all(self.star_holds) and self.bounds_hold


def _b_vanishing(log_b: np.ndarray) -> bool:
    """Heuristic for b_n -> 0: log b nonincreasing on the window's second
    half and strictly lower at the end than at the midpoint."""
    m = len(log_b) // 2
    second = log_b[m:]
    if len(second) < 2:
        return bool(log_b[-1] < 0)
    return bool(np.all(np.diff(second) <= 0) and log_b[-1] < log_b[m])


def tame_check(a: PositiveSequence, b: PositiveSequence,
               window: int = 60) -> TamePairReport:
    """Check the pair conditions a >= 1, b <= 1, b -> 0 (heuristic) and
    (*) a_n b_n^2 <= b_{n+1} for n < window, all in log space."""
    log_a = a.log_values(window)
    log_b = b.log_values(window)
    star = []
    first = None
    for n in range(window):
        ok = log_a[n] + 2.0 * log_b[n] <= log_b[n + 1]
        star.append(bool(ok))
        if not ok and first is None:
            first = n
    return TamePairReport(
        window=window,
        star_holds=tuple(star),
        a_ge_one=bool(np.all(log_a >= 0.0)),
        b_le_one=bool(np.all(log_b <= 0.0)),
        b_vanishing=_b_vanishing(log_b),
        first_violation=first,
    )


def strictness_check(b: PositiveSequence, window: int = 60) -> bool:
    """b is strict when b <= 1 and b_n^2 <= b_{n+1} on the window."""
    log_b = b.log_values(window)
    if np.any(log_b > 0.0):
        return False
    return all(2.0 * log_b[n] <= log_b[n + 1] for n in range(window))


@dataclass(frozen=True)
class TameBrunoResult:
    """Per-index certificate that tameness forces summability.

    certificate[M-1] checks the telescoped inequality

        sum_{k<M} log a_k / 2^(k+1)  <=  log b_M / 2^M - log b_0.

    The limit hypothesis log b_M / 2^M -> 0 is judged numerically; when
    it fails the verdict is 'inconclusive' (the b-envelope sits at the
    doubly-exponential boundary and certifies nothing in the limit).
    """

    verdict: str                       # 'bruno_consistent' | 'inconclusive'
    certificate: tuple[bool, ...]
    hypothesis_tame: bool
    hypothesis_limit: bool
    lhs: tuple[float, ...]
    rhs: tuple[float, ...]


def tame_implies_bruno(a: PositiveSequence, b: PositiveSequence,
                       window: int = 60) -> TameBrunoResult:
    report = tame_check(a, b, window)
    log_a = a.log_values(window)
    log_b = b.log_values(window)
    lhs, rhs, cert = [], [], []
    acc = 0.0
    for M in range(1, window + 1):
        acc += log_a[M - 1] * math.pow(2.0, -M)   # log a_{M-1} / 2^M
        L = acc
        R = log_b[M] * math.pow(2.0, -M) - log_b[0]
        lhs.append(L)
        rhs.append(R)
        cert.append(bool(L <= R + 1e-12 * max(1.0, abs(R))))
    phi_end = abs(log_b[window]) * math.pow(2.0, -window)
    phi_half = abs(log_b[window // 2]) * math.pow(2.0, -(window // 2))
    limit_ok = phi_end <= max(1e-6, 0.3 * phi_half)
    verdict = ("bruno_consistent"
               if report.tame and limit_ok and all(cert) else "inconclusive")
    return TameBrunoResult(verdict, tuple(cert), report.tame, limit_ok,
                           tuple(lhs), tuple(rhs))


# ---- taming ----

def taming_epsilon_log(a: PositiveSequence, depth: int = 60) -> float:
    """log of the window infimum of (a^pi_n)^2, using enclosure lower bounds.

    Guarantee (proved by the transform recursion): for every n <= depth,
    eps <= (a^pi_n)^2, hence a_n * eps <= a_n (a^pi_n)^2 = a^pi_{n+1} <= 1,
    so (a, eps*b) satisfies (*) on the window for any strict b.  The
    infimum is over the window only: for unbounded increasing a the full
    infimum over all n is 0 (a^pi_n -> 0), so no positive global taming
    constant exists.
    """
    cert = bruno_check(a, depth)
    if cert.verdict != "bruno":
        raise SequenceDomainError(
            f"taming needs a certified summable sequence, got {cert.verdict}")
    best = math.inf
    for n in range(depth + 1):
        res = bruno_transform(a, n, depth)
        best = min(best, 2.0 * res.log_lower)
    return best


def taming_epsilon(a: PositiveSequence, depth: int = 60) -> float:
    """Window taming constant eps = inf_{n<=depth} (a^pi_n)^2 (lower bounds).

    May underflow to 0.0 for fast-growing a; use `taming_epsilon_log`
    when the constant is consumed in log space.
    """
    return math.exp(taming_epsilon_log(a, depth))


# ---- model iteration ----

def model_iteration(a: PositiveSequence, b: PositiveSequence | None,
                    x0: float, steps: int = 100) -> IterationTrace:
    """Run x_{n+1} = (a_n x_n^2 + b_n x_n) / 2 in log space.

    b may be None for the pure-quadratic model (the envelope bound is
    then not checked).  When (a, b) is tame and x0 <= b_0, the envelope
    x_n <= b_n is recorded per step; a violation marks the trace
    uncertified but the run continues.
    """
    if x0 < 0:
        raise SequenceDomainError("x0 must be nonnegative")
    trace = IterationTrace(engine="model")
    trace.metadata = {
        "a": a.to_json_dict(),
        "b": b.to_json_dict() if b is not None else None,
        "x0": x0,
        "steps": steps,
    }
    log_x = math.log(x0) if x0 > 0 else -math.inf
    bounded = True
    for n in range(steps + 1):
        log_b = b.log(n) if b is not None else None
        ok = True if log_b is None else (log_x <= log_b + 1e-12)
        bounded = bounded and ok
        b_lin = None
        if log_b is not None:
            b_lin = math.exp(log_b) if log_b < 700.0 else math.inf
        trace.add(StepRecord(
            n=n,
            value_norm=math.exp(log_x) if log_x < 700.0 else math.inf,
            bound=b_lin,
            checks_passed=bool(ok),
            extra={"log_x": log_x, "log_b": log_b},
        ))
        if not ok:
            trace.fail(f"envelope violated at n={n}")
        if n == steps:
            break
        log_a = a.log(n)
        if math.isinf(log_x) and log_x < 0:
            pass  # x = 0 is a fixed point
        else:
            quad = log_a + 2.0 * log_x
            if log_b is None:
                log_x = quad - LOG2
            else:
                log_x = np.logaddexp(quad, log_b + log_x) - LOG2
        if log_x > 700.0:
            trace.status = "diverged"
            trace.fail(f"overflow at n={n + 1}")
    if trace.status != "diverged":
        first = trace.steps[0].extra["log_x"]
        last = trace.steps[-1].extra["log_x"]
        trace.status = "converged" if last < min(-50.0, first) else "bounded"
    trace.certified = trace.all_checks_passed and b is not None
    return trace


# ---- the rho/sigma schedule construction ----

@dataclass(frozen=True)
class LemmaRhoReport:
    window: int
    K: float
    alpha: float
    log_eps: float
    pair_star: tuple[bool, ...]     # conclusion 1: (a sigma^-k, rho a' sigma^-l) obeys (*)
    below_b: tuple[bool, ...]       # conclusion 2: rho_n a'_n sigma_n^-l < b_n
    halvings: int

    @property
    def passed(self) -> bool:
        return all(self.pair_star) and all(self.below_b)

    @property
    def first_failure(self) -> int | None:
        for i, (s, c) in enumerate(zip(self.pair_star, self.below_b)):
            if not (s and c):
                return i
        return None


def _rho_sigma_logs(b: PositiveSequence, c: PositiveSequence, K: float,
                    alpha: float, window: int):
    """log rho_n = log K + log b_n + log c_n - alpha^n,
    sigma_n = 1 - rho_n^(1/2^n) and its log, elementwise on the window.

    Returns (log_rho, sigma, log_sigma) or None when some rho_n >= 1.
    sigma itself can round to 1.0 when rho_n^(1/2^n) underflows; log_sigma
    uses the stable log(1 - e^x) split so the conclusion checks never see
    that saturation.
    """
    log_rho = np.array([
        math.log(K) + b.log(n) + c.log(n) - alpha ** n
        for n in range(window + 2)
    ])
    x = log_rho / np.power(2.0, np.arange(window + 2))
    if np.any(x >= 0.0):
        return None
    sigma = -np.expm1(x)
    log_sigma = np.where(x < -math.log(2.0),
                         np.log1p(-np.exp(x)),
                         np.log(np.maximum(-np.expm1(x), 1e-300)))
    return log_rho, sigma, log_sigma


def lemma_rho(a: PositiveSequence, aprime: PositiveSequence,
              b: PositiveSequence, k: int, l: int, *,
              K: float | None = None, alpha: float = 1.5,
              window: int = 40, depth: int = 60):
    """Construct rho_n = K b_n c_n e^(-alpha^n) and sigma_n = 1 - rho_n^(1/2^n).

    c = eps * b where eps tames a * aprime^2 on the window, so the two
    conclusions hold index-by-index: the pair (a_n sigma_n^-k,
    rho_n a'_n sigma_n^-l) satisfies (*), and rho_n a'_n sigma_n^-l < b_n.
    Both are verified in log space on the window; when K is not given it
    is auto-tuned from 1/2 by halving (at most 64 times) until both
    verify.  Returns (rho, sigma, report).
    """
    if not (1.0 < alpha < 2.0):
        raise SequenceDomainError("alpha must lie in (1, 2)")
    if K is not None and not (0.0 < K < 1.0):
        raise SequenceDomainError("K must lie in (0, 1)")
    for name, seq in (("a", a), ("aprime", aprime)):
        cert = bruno_check(seq, depth)
        if cert.verdict == "not_bruno":
            raise SequenceDomainError(f"{name} is certified non-summable")
    if not strictness_check(b, window + 2):
        raise SequenceDomainError("b must be strict (b <= 1, b_n^2 <= b_{n+1})")

    combined = a * (aprime ** 2.0)
    log_eps = taming_epsilon_log(combined, depth)
    c = b.scaled(log_factor=log_eps)

    log_a = a.log_values(window + 2)
    log_ap = aprime.log_values(window + 2)
    log_b = b.log_values(window + 2)

    def attempt(K_try: float) -> LemmaRhoReport | None:
        logs = _rho_sigma_logs(b, c, K_try, alpha, window)
        if logs is None:
            return None
        log_rho, _, log_sigma = logs
        star, below = [], []
        for n in range(window):
            lhs = (log_a[n] - k * log_sigma[n]
                   + 2.0 * (log_rho[n] + log_ap[n] - l * log_sigma[n]))
            rhs = log_rho[n + 1] + log_ap[n + 1] - l * log_sigma[n + 1]
            star.append(bool(lhs <= rhs))
            below.append(bool(log_rho[n] + log_ap[n] - l * log_sigma[n]
                              < log_b[n]))
        return LemmaRhoReport(window, K_try, alpha, log_eps,
                              tuple(star), tuple(below), 0)

    if K is not None:
        report = attempt(K)
        if report is None:
            raise SequenceDomainError("rho fell outside (0, 1) on the window")
    else:
        K_try, report, cand = 0.5, None, None
        for halving in range(64):
            cand = attempt(K_try)
            if cand is not None and cand.passed:
                report = LemmaRhoReport(cand.window, cand.K, cand.alpha,
                                        cand.log_eps, cand.pair_star,
                                        cand.below_b, halving)
                break
            K_try *= 0.5
        if report is None:
            binding = "rho outside (0,1)"
            if cand is not None:
                binding = "pair (*)" if not all(cand.pair_star) else "rho < b"
            raise SequenceDomainError(
                f"no passing K within 64 halvings; binding condition: {binding}")

    rho = (b * c * PositiveSequence.exp_power(-1, alpha)).scaled(
        log_factor=math.log(report.K))
    _, sigma_vals, _ = _rho_sigma_logs(b, c, report.K, alpha, window)
    sigma = PositiveSequence.tabulated(sigma_vals[:window + 1])
    return rho, sigma, report
