"""Certified iteration engines on truncated series.

Four engines share the trace plumbing:

* `relative_contraction` runs x_{n+1} = T(x_n) and checks the measured
  increments against the product bound lam_n...lam_1 * d(x_1, x_0).
* `majorized_iteration` runs a series iteration in lockstep with a scalar
  majorant and asserts |x_n| <= y_n at every step.
* `newton` is the classical quadratically convergent loop with declared
  bounds m >= |j| and M >= |D^2 f|, certifying the ratio
  |x_{n+1} - x_n| / |x_n - x_{n-1}|^2 <= C = m M / 2.
* `nash_moser` runs the same loop on a falling radius schedule: the
  residual is restricted to the midpoint radius s_{n+1/2}, the declared
  quasi-inverse j (with Df o j = iota exactly) is applied there, and the
  update lands at s_{n+1}.  Quadraticity costs q^(-alpha n) with
  alpha = 2k + l from the declared locality exponents; the iteration is
  certified when the first increment is below the Bruno constant a^pi_0
  of the model sequence a_n = M q^(-alpha n).

Engines never raise on a failed certificate: the trace records the
violated inequality and loses its `certified` flag.  Exceptions are
reserved for malformed inputs and for steps that cannot be executed at
all (singular derivative inverse, locality violation).

In the trace columns, b_n holds the certified envelope for the increment
and sigma_n holds the per-step contraction factor or quadratic constant.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .local_ops import LocalOperator, OperatorError
from .sequences import (PositiveSequence, SequenceDomainError, bruno_check,
                        bruno_transform)
from .series import SeriesError, TruncatedSeries
from .trace import IterationTrace, StepRecord

__all__ = [
    "IterationError",
    "RadiusSchedule",
    "quadratic_model",
    "relative_contraction",
    "majorized_iteration",
    "newton",
    "nash_moser",
]


class IterationError(ValueError):
    """Raised for malformed engine inputs or non-executable steps."""


def _norm(x) -> float:
    if isinstance(x, TruncatedSeries):
        return x.majorant_norm(x.ref_radius).value
    return abs(x)


# ---- radius schedules ----

class RadiusSchedule:
    """Falling radius sequence with a positive limit.

    geometric(q, s0, s_inf): s_n = s_inf + (s0 - s_inf) q^n.  Anchoring
    the limit keeps it positive by construction; the decrements are then
    s_n - s_{n+1} = (s0 - s_inf)(1 - q) q^n, and under the normalization
    s0 - s_inf = q/(1-q) (see `proof_normalized`) they equal q^(n+1),
    the form the quadratic estimates are usually stated in.

    rho_driven(rho, s0): s_{n+1} = rho_n^(1/2^n) s_n with rho_n in (0,1).
    log s_inf = log s0 + sum_n log rho_n / 2^n, so the limit is positive
    exactly when the weighted log sum is finite; that is certified with
    the summability machinery when rho has a closed-form tail bound.
    """

    def __init__(self, kind: str, **params):
        if kind == "geometric":
            q, s0, s_inf = params["q"], params["s0"], params["s_inf"]
            if not (0.0 < q < 1.0):
                raise IterationError("geometric ratio must lie in (0, 1)")
            if not (0.0 < s_inf < s0):
                raise IterationError("need 0 < s_inf < s0")
        elif kind == "rho_driven":
            rho, s0 = params["rho"], params["s0"]
            if not (s0 > 0):
                raise IterationError("s0 must be positive")
            for n in range(61):
                try:
                    lr = rho.log(n)
                except SequenceDomainError:
                    break
                if lr >= 0.0:
                    raise IterationError(f"rho_{n} >= 1; radii must fall")
            try:
                cert = bruno_check(rho)
            except SequenceDomainError:    # table shorter than the window
                params["limit_certified"] = False
            else:
                if cert.verdict == "not_bruno":
                    raise IterationError(
                        "rho is certified non-summable; the limit radius is 0")
                params["limit_certified"] = cert.verdict == "bruno"
        else:
            raise IterationError(f"unknown schedule kind {kind!r}")
        self.kind = kind
        self.params = params

    @staticmethod
    def geometric(q: float, s0: float, s_inf: float) -> "RadiusSchedule":
        return RadiusSchedule("geometric", q=float(q), s0=float(s0),
                              s_inf=float(s_inf))

    @staticmethod
    def proof_normalized(q: float, s0: float) -> "RadiusSchedule":
        """Geometric schedule with s0 - s_inf = q/(1-q), so that
        s_n - s_{n+1} = q^(n+1) exactly."""
        s_inf = s0 - q / (1.0 - q)
        if s_inf <= 0:
            raise IterationError(
                f"s0 = {s0} leaves no positive limit for q = {q}; "
                f"need s0 > q/(1-q) = {q / (1.0 - q)}")
        return RadiusSchedule.geometric(q, s0, s_inf)

    @staticmethod
    def rho_driven(rho: PositiveSequence, s0: float) -> "RadiusSchedule":
        return RadiusSchedule("rho_driven", rho=rho, s0=float(s0))

    def radius(self, n: int) -> float:
        if n < 0:
            raise IterationError("index must be nonnegative")
        if self.kind == "geometric":
            p = self.params
            return p["s_inf"] + (p["s0"] - p["s_inf"]) * p["q"] ** n
        p = self.params
        log_s = math.log(p["s0"])
        for m in range(n):
            log_s += p["rho"].log(m) * math.pow(2.0, -m)
        return math.exp(log_s)

    def midpoint(self, n: int) -> float:
        return 0.5 * (self.radius(n) + self.radius(n + 1))

    def decrement(self, n: int) -> float:
        return self.radius(n) - self.radius(n + 1)

    @property
    def limit(self) -> float:
        """The limit radius (geometric: exact; rho_driven: certified
        lower bound when the family has a closed-form tail)."""
        if self.kind == "geometric":
            return self.params["s_inf"]
        p = self.params
        log_s = math.log(p["s0"])
        depth = 60
        try:
            for m in range(depth + 1):
                log_s += p["rho"].log(m) * math.pow(2.0, -m)
        except SequenceDomainError:
            return 0.0
        tail = p["rho"].weighted_log_tail(0, depth)
        if tail is None:
            return 0.0
        return math.exp(log_s - 2.0 * tail)

    def to_json_dict(self) -> dict:
        if self.kind == "geometric":
            p = self.params
            return {"kind": "geometric", "q": p["q"], "s0": p["s0"],
                    "s_inf": p["s_inf"]}
        p = self.params
        return {"kind": "rho_driven", "rho": p["rho"].to_json_dict(),
                "s0": p["s0"]}

    def __repr__(self) -> str:
        return f"RadiusSchedule({self.to_json_dict()})"


# ---- relative contraction ----

def relative_contraction(T: Callable[[int, TruncatedSeries], TruncatedSeries],
                         lam: PositiveSequence, x0: TruncatedSeries,
                         steps: int = 40) -> IterationTrace:
    """Run x_{n+1} = T(n, x_n) and certify the relative contraction bound.

    lam is indexed so that lam.value(n) is the contraction factor of the
    step producing x_{n+1} from x_n for n >= 1 (index 0 is unused).  The
    certificate checks the measured increment d(x_{n+1}, x_n) against the
    product bound lam_n...lam_1 * d(x_1, x_0); it is refused outright
    when some lam_n exceeds 1 (the product bound would not decrease) and
    the Cauchy conclusion additionally needs the product to vanish,
    judged on the run window by the product falling below 1/2.

    T must commute with restriction; this is spot-checked on x0 and a
    failure refuses certification without stopping the run.
    """
    if steps < 1:
        raise IterationError("need at least one step")
    trace = IterationTrace(engine="contraction")
    trace.metadata = {"lambda": lam.to_json_dict(), "steps": steps,
                      "ref_radius": x0.ref_radius}

    s_probe = 0.75 * x0.ref_radius
    probe_scale = 1.0 + _norm(x0)
    try:
        via_restrict = T(0, x0.restrict(s_probe))
        restricted = T(0, x0).restrict(s_probe)
        commutes = bool(np.max(np.abs(via_restrict.coeffs
                                      - restricted.coeffs))
                        <= 1e-12 * probe_scale)
    except (SeriesError, OperatorError) as exc:
        commutes = False
        trace.fail(f"restriction compatibility probe failed: {exc}")
    if not commutes:
        trace.fail("T does not commute with restriction; "
                   "certification refused")

    lam_ok = True
    for n in range(1, steps):
        if lam.log(n) > 1e-12:
            trace.fail(f"lambda_{n} exceeds 1; certification refused")
            lam_ok = False
            break

    x = x0.copy()
    x_next = T(0, x)
    d1 = _norm(x_next - x)
    trace.add(StepRecord(n=0, radius=x0.ref_radius, value_norm=_norm(x_next),
                         increment_norm=d1, bound=d1))
    x = x_next
    log_prod = 0.0
    for n in range(1, steps):
        x_next = T(n, x)
        d = _norm(x_next - x)
        log_prod += lam.log(n)
        bound = math.exp(log_prod) * d1
        ok = d <= bound * (1.0 + 1e-9) + 1e-300
        trace.add(StepRecord(n=n, radius=x0.ref_radius,
                             value_norm=_norm(x_next), increment_norm=d,
                             bound=bound, sigma=lam.value(n),
                             checks_passed=ok))
        if not ok:
            trace.fail(f"increment exceeds product bound at n={n}")
        x = x_next

    product_final = math.exp(log_prod)
    vanishes = lam_ok and product_final <= 0.5
    trace.metadata["product_final"] = product_final
    trace.metadata["product_vanishes"] = vanishes
    stepwise = trace.all_checks_passed and commutes and lam_ok
    trace.certified = stepwise and vanishes
    if trace.certified:
        trace.status = "converged"
    elif stepwise:
        trace.status = "bounded"
    return trace


# ---- majorized iteration ----

def majorized_iteration(F: Callable[[TruncatedSeries], TruncatedSeries],
                        f: Callable[[float], float], x0: TruncatedSeries,
                        y0: float, steps: int = 40) -> IterationTrace:
    """Run x_{n+1} = F(x_n) and y_{n+1} = f(y_n) in lockstep.

    Certifies |x_n| <= y_n at every step together with the diagram
    inequality |F(x_n)| <= f(|x_n|) measured on the orbit.  Convergence
    of x to 0 is declared only when the y-iterates are nonincreasing and
    reach 0 within tolerance; a stalled positive majorant downgrades the
    claim to status "bounded-only".  A majorization violation withdraws
    the certificate at its index but the run continues.
    """
    if y0 < 0:
        raise IterationError("y0 must be nonnegative")
    trace = IterationTrace(engine="majorized")
    trace.metadata = {"y0": y0, "steps": steps, "ref_radius": x0.ref_radius}
    x, y = x0.copy(), float(y0)
    xn = _norm(x)
    y_monotone = True
    for n in range(steps + 1):
        ok = xn <= y * (1.0 + 1e-12) + 1e-300
        trace.add(StepRecord(n=n, radius=x.ref_radius, value_norm=xn,
                             bound=y, checks_passed=ok))
        if not ok:
            trace.fail(f"majorization violated at n={n}")
        if n == steps:
            break
        x = F(x)
        x_next_norm = _norm(x)
        y_next = f(y)
        if x_next_norm > f(xn) * (1.0 + 1e-12) + 1e-300:
            trace.fail(f"diagram inequality |F(x)| <= f(|x|) fails at n={n}")
            trace.steps[-1].checks_passed = False
        if y_next > y * (1.0 + 1e-12):
            y_monotone = False
        xn, y = x_next_norm, y_next
    trace.certified = trace.all_checks_passed
    if trace.steps[-1].bound <= 1e-15 * max(1.0, y0) and y_monotone:
        trace.status = "converged"
    elif y_monotone:
        trace.status = "bounded-only"
    trace.metadata["y_monotone"] = y_monotone
    return trace


# ---- classical Newton ----

def newton(f: Callable, df_inverse: Callable, x0, y, m: float, M: float,
           steps: int = 40) -> IterationTrace:
    """Newton iteration x_{n+1} = x_n - j(x_n)(f(x_n) - y).

    Works on scalars and on truncated series: `df_inverse(x)` may return
    a multiplier (applied by scaling) or a callable (applied to the
    residual).  With declared bounds m >= |j| and M >= |D^2 f| on the
    working ball the loop certifies the quadratic estimate
    |x_{n+1} - x_n| <= C |x_n - x_{n-1}|^2 for C = m M / 2 together with
    the entry condition |x_1 - x_0| < 1/C.

    A singular derivative inverse (ZeroDivisionError, SeriesError or
    OperatorError from `df_inverse` or its application) aborts the run
    with an `IterationError` naming the step.
    """
    if not (m > 0 and M > 0):
        raise IterationError("bounds m, M must be positive")
    C = 0.5 * m * M
    trace = IterationTrace(engine="newton")
    trace.metadata = {"m": m, "M": M, "C": C, "steps": steps}
    x = x0.copy() if isinstance(x0, TruncatedSeries) else x0
    d_prev = None
    d_first = None
    for n in range(steps):
        try:
            resid = f(x) - y
            jx = df_inverse(x)
            if callable(jx):
                delta = jx(resid)
            elif isinstance(resid, TruncatedSeries):
                delta = resid.scale(jx)
            else:
                delta = jx * resid
        except (ZeroDivisionError, SeriesError, OperatorError) as exc:
            raise IterationError(
                f"derivative inverse failed at step {n}: {exc}") from exc
        x_next = x - delta
        d = _norm(delta)
        if d_first is None:
            d_first = d
        # below the float noise floor the quadratic ratio is meaningless
        # (d_prev^2 underflows relative to rounding), so the run stops
        # and the terminal row carries no ratio
        stopping = d <= 1e-14 * max(1.0, _norm(x_next))
        ratio = None
        ok = True
        if not stopping and d_prev is not None and d_prev > 0.0:
            ratio = d / d_prev ** 2
            ok = ratio <= C + 1e-9
        trace.add(StepRecord(n=n, value_norm=_norm(x_next), increment_norm=d,
                             bound=None if d_prev is None else C * d_prev ** 2,
                             sigma=C, checks_passed=ok,
                             extra={"ratio": ratio}))
        if not ok:
            trace.fail(f"quadratic ratio exceeds C at n={n}")
        x = x_next
        if stopping:
            trace.status = "converged"
            break
        d_prev = d
    trace.metadata["d_first"] = d_first
    entry_ok = d_first is not None and d_first < 1.0 / C
    if not entry_ok:
        trace.fail(f"entry condition |x_1 - x_0| < 1/C fails "
                   f"({d_first} >= {1.0 / C})")
    trace.certified = trace.all_checks_passed
    trace.metadata["final"] = x if not isinstance(x, TruncatedSeries) \
        else x.to_json_dict()
    return trace


# ---- Nash-Moser on a falling radius schedule ----

def quadratic_model(exponents: tuple, schedule: RadiusSchedule,
                    j_const: float, d2f_const: float):
    """Model sequence a_n = M q^(-alpha n) for the radius-losing Newton
    step, from the declared locality exponents (a, b, k, l).

    Each step applies j across (s_{n+1/2}, s_{n+1}) to a quadratic
    remainder measured across (s_n, s_{n+1/2}); chaining the two weight
    estimates spends (s_n - s_{n+1/2})^(2k+l) and a radius prefactor
    s_{n+1/2}^(a+2b).  With geometric decrements D q^n the n-dependence
    collects into q^(-alpha n), alpha = 2k + l, and the constant

        M = 4 C C' (2/D)^(2k+l) / s_inf^(a+2b)

    bounds the prefactors uniformly (C = j_const, C' = d2f_const).  The
    coarser exponent 2a + l sometimes quoted for this estimate is
    reported alongside, but the certified model uses alpha = 2k + l.

    Returns (M, alpha, model) with the model clamped below at 1 so its
    Bruno transform is defined (a larger model only shrinks the gate).
    """
    a, b, k, l = exponents
    if min(a, b, k, l) < 0:
        raise IterationError("locality exponents must be nonnegative")
    if schedule.kind != "geometric":
        raise IterationError("the quadratic model needs a geometric schedule")
    q = schedule.params["q"]
    D = schedule.decrement(0)
    alpha = 2 * k + l
    M = (4.0 * j_const * d2f_const * (2.0 / D) ** (2 * k + l)
         / schedule.limit ** (a + 2 * b))
    model = PositiveSequence.geometric(q ** (-alpha)).scaled(max(M, 1.0))
    return M, alpha, model


def nash_moser(f: Callable[[TruncatedSeries], TruncatedSeries],
               j: Callable[[TruncatedSeries], LocalOperator],
               exponents: tuple, schedule: RadiusSchedule,
               x0: TruncatedSeries, y: TruncatedSeries,
               steps: int = 40, *, j_const: float,
               d2f_const: float) -> IterationTrace:
    """Newton iteration with radius loss: x_{n+1} = iota(x_n + j(x_n)(y - f(x_n))).

    The residual y - f(x_n) is formed at s_n, restricted to the midpoint
    s_{n+1/2}, and j(x_n) (a LocalOperator with Df o j = iota exactly)
    carries it to s_{n+1} where the update lands.  The declared locality
    exponents (a, b, k, l) and certificate constants j_const, d2f_const
    build the model a_n = M q^(-alpha n) (see `quadratic_model`); the
    run is certified when

    * the first increment is below the Bruno constant a^pi_0 of the
      model (lower enclosure end, so the gate itself is rigorous), and
    * every measured increment obeys |x_{n+1} - x_n| <= a_n |x_n - x_{n-1}|^2.

    An oversized first increment sets status "uncertified" but the run
    continues.  Divergence is declared after 3 consecutive increment
    growths.  The final residual |f(x_N) - y| at the limit radius is
    reported in the metadata.
    """
    if schedule.kind != "geometric":
        raise IterationError("nash_moser needs a geometric schedule")
    s0 = schedule.radius(0)
    if x0.ref_radius < s0 or y.ref_radius < s0:
        raise IterationError(
            f"x0 and y must be given at radius >= s0 = {s0}")
    M, alpha, model = quadratic_model(exponents, schedule, j_const, d2f_const)
    gate = bruno_transform(model, 0, 60)
    gate_lo = gate.enclosure[0]
    q = schedule.params["q"]

    trace = IterationTrace(engine="nash_moser")
    trace.metadata = {
        "exponents": {"a": exponents[0], "b": exponents[1],
                      "k": exponents[2], "l": exponents[3]},
        "schedule": schedule.to_json_dict(),
        "j_const": j_const, "d2f_const": d2f_const,
        "M": M, "alpha": alpha,
        "alpha_coarse": 2 * exponents[0] + exponents[3],
        "bruno_gate": gate_lo,
    }

    x = x0.restrict(s0) if x0.ref_radius > s0 else x0.copy()
    d_prev = None
    log_env = None      # running log of the closed-form envelope
    growths = 0
    gate_ok = None
    for n in range(steps):
        s_n, s_half = schedule.radius(n), schedule.midpoint(n)
        s_next = schedule.radius(n + 1)
        try:
            resid = y.restrict(s_n) - f(x)
            w = j(x)(resid.restrict(s_half), s_half, s_next)
        except (SeriesError, OperatorError) as exc:
            raise IterationError(f"step {n}: {exc}") from exc
        x = x.restrict(s_next) + w
        d = w.majorant_norm(s_next).value
        a_n = M * q ** (-alpha * n)
        if gate_ok is None:
            gate_ok = d < gate_lo
            if not gate_ok:
                trace.fail(f"first increment {d} is not below the "
                           f"Bruno gate {gate_lo}")
        ok = True
        bound = None
        env = None
        if d_prev is not None:
            ok = d <= a_n * d_prev ** 2 * (1.0 + 1e-9) + 1e-300
            bound = a_n * d_prev ** 2
            if log_env is not None:
                log_env += math.log(a_n) * math.pow(2.0, -n)
                scaled = math.pow(2.0, n) * log_env
                env = math.exp(scaled) if scaled < 700.0 else math.inf
        elif d > 0:
            log_env = math.log(d)
        trace.add(StepRecord(n=n, radius=s_next, value_norm=_norm(x),
                             increment_norm=d, bound=bound, sigma=a_n,
                             checks_passed=ok,
                             extra={"s_half": s_half, "envelope": env}))
        if not ok:
            trace.fail(f"quadratic estimate violated at n={n}")
        if d_prev is not None and d > d_prev:
            growths += 1
            if growths >= 3:
                trace.status = "diverged"
                trace.fail(f"increment grew 3 steps in a row at n={n}")
                break
        else:
            growths = 0
        d_prev = d
        if d <= 1e-16 * (1.0 + _norm(x)):
            trace.status = "converged"
            break

    s_inf = schedule.limit
    x_lim = x.restrict(s_inf)
    resid_lim = y.restrict(s_inf) - f(x_lim)
    trace.metadata["residual_at_limit"] = resid_lim.majorant_norm(s_inf).value
    trace.metadata["limit_radius"] = s_inf
    trace.metadata["steps_used"] = len(trace.steps)
    trace.metadata["x_final"] = x.to_json_dict()
    trace.certified = bool(gate_ok) and trace.all_checks_passed
    if not gate_ok:
        trace.status = "uncertified"
    elif trace.status == "ran" and trace.certified:
        trace.status = "converged"
    return trace
