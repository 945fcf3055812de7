"""Worked conjugation problems on three base points.

Each builder returns an `ActionProblem` wired for `run_lie`, and each
demo function runs it end to end and packs the outcome into a
`DemoReport`: the trace, the final residual, and problem-specific
details (vanishing orders, membership thresholds, divisor margins).

* `morse` normalizes f = z^2 + r by the full division (r / 2z) d/dz;
  the cutoff defect is zero, so remainder orders double each step.
* `mather` normalizes f = z^k + o(z^k) by windowed division: the step
  field cancels the remainder band [k + 2^(n+1), k + 2^(n+2)) exactly
  and the engine's cutoff branch carries the rest.
* `circle` conjugates a perturbed rotation number on shrinking strips;
  mean extraction feeds the frequency correction and every mode the
  step touches is gated by a Diophantine lower bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .iterate import RadiusSchedule
from .lie import (ActionProblem, LieCertificate, LieError, LieSchedule,
                  LocalityExponents, certify, rho_schedule, run_lie)
from .local_ops import (LocalOperator, WeightFunction, certify_vector_field,
                        multiplication_operator)
from .sequences import PositiveSequence
from .series import SeriesError, TruncatedSeries
from .trace import IterationTrace

GOLDEN_MEAN = (1.0 + math.sqrt(5.0)) / 2.0

#: Classical Diophantine constants for the golden mean: the continued
#: fraction [1; 1, 1, ...] gives dist(k w, Z) >= C / k with C = 1/(1+w),
#: with equality approached along the Fibonacci denominators.
GOLDEN_C = 1.0 / (1.0 + GOLDEN_MEAN)

_STRICT_B = PositiveSequence.exp_power(-1, 1.5)


@dataclass(frozen=True)
class DemoReport:
    """Outcome of one worked problem.

    residual is the final remainder norm plus the truncation ledger
    (the trace's versality defect); details carries problem-specific
    observations; certificate is present when the run used a tuned
    schedule and was replayed against the convergence inequalities.
    """

    name: str
    trace: IterationTrace
    residual: float
    details: dict = field(default_factory=dict)
    certificate: LieCertificate | None = None

    @property
    def converged(self) -> bool:
        return self.trace.status == "converged"


def _entry_check(r0: TruncatedSeries, t: float, schedule: LieSchedule) -> float:
    norm = r0.majorant_norm(min(t, r0.ref_radius)).value
    threshold = schedule.report.threshold
    if norm > threshold:
        raise LieError(
            f"initial remainder norm {norm:g} exceeds the schedule entry "
            f"threshold {threshold:g}; shrink the perturbation or the radius")
    return norm


def _observed_orders(r0: TruncatedSeries, trace: IterationTrace) -> list[int]:
    orders = [] if r0.is_zero else [r0.order(tol=0.0)]
    for rec in trace.steps[1:]:
        if rec.extra and "r_order" in rec.extra:
            orders.append(rec.extra["r_order"])
    return orders


# ---- quadratic base point ----

def morse_problem(cap: int = 64, j_const: float = 10.0,
                  with_sampler: bool = False) -> ActionProblem:
    """Quadratic base point z^2 with step field (r / 2z) d/dz.

    Division by the derivative is exact on order >= 3, so the cutoff
    defect vanishes and every delta is zero: no projector, no kappa.
    """
    f = TruncatedSeries.monomial(2, 1.0, cap=cap, ref_radius=1.0)

    def qi(n, tau, r):
        a = r.divide_by_coordinate(0, tol=0.0).scale(0.5)
        return certify_vector_field(a, name="half r over z")

    def m_member(n, g):
        return g.is_zero or g.order(tol=0.0) >= 3

    def t_member(n, g):
        return g.is_zero

    def sampler(rng, n):
        c = np.zeros(cap + 1, dtype=complex)
        c[3:7] = rng.uniform(-1.0, 1.0, 4) * 1e-3
        return TruncatedSeries(1, cap, 1.0, "taylor", c)

    return ActionProblem(
        f, qi, m_member, t_member,
        j_norms=PositiveSequence.constant(j_const),
        exponents=LocalityExponents(alpha=0, beta=0, gamma=1, nu=0, xi=0),
        sampler=sampler if with_sampler else None,
        name="morse")


def morse(eps: float = 1e-3, t: float = 1.0, steps: int = 5, *,
          r0: TruncatedSeries | None = None, cap: int = 64) -> DemoReport:
    """Normalize z^2 + eps z^3 (or a caller-supplied r0) at radius t.

    The run uses the tuned contraction schedule; the report carries the
    replayed certificate and the observed vanishing orders, which double
    as 2 (o_n - 1) from o_0 = 3: the sequence 3, 4, 6, 10, 18, ...
    """
    problem = morse_problem(cap=cap)
    schedule = rho_schedule(problem, _STRICT_B, t)
    if r0 is None:
        r0 = TruncatedSeries.monomial(3, eps, cap=cap, ref_radius=t)
    elif r0.ref_radius < t:
        raise LieError("r0 must be certified at the starting radius")
    norm0 = _entry_check(r0, t, schedule)
    trace, conjugacy = run_lie(problem, schedule, r0, steps)
    cert = certify(trace, problem, schedule.rho, schedule.sigma, schedule.b)
    details = {
        "threshold": schedule.report.threshold,
        "r0_norm": norm0,
        "orders": _observed_orders(r0, trace),
        "conjugacy_defect": trace.metadata["conjugacy_coeff_defect"],
        "normalization_defect": _normalization_defect(
            problem.f, r0, t, conjugacy, trace.metadata["limit_radius"]),
        "verdict": cert.verdict,
    }
    return DemoReport("morse", trace, trace.metadata["versality_defect"],
                      details, cert)


def _normalization_defect(f: TruncatedSeries, r0: TruncatedSeries, t: float,
                          conjugacy, s_inf: float) -> float:
    """Norm of g(f + r0) - f at the limit radius, conjugacy remainder
    included; this is the distance of the conjugated seed to the base
    point, as opposed to the coefficientwise replay defect."""
    tau = f if f.ref_radius == t else f.restrict(t)
    seed = r0 if r0.ref_radius == t else r0.restrict(t)
    gx, g_rem = conjugacy.apply(tau + seed)
    base = tau if tau.ref_radius == gx.ref_radius \
        else tau.restrict(gx.ref_radius)
    return (gx - base).majorant_norm(s_inf).value + g_rem


# ---- finitely determined base point ----

def mather_problem(f: TruncatedSeries, *, floor_scale: float = 1e-12,
                   j_const: float = 10.0) -> ActionProblem:
    """Base point f = c z^k + o(z^k) with windowed division by f'.

    The step field at stage n is ([r]_lo^hi) / f' d/dz with the window
    lo = k + 2^(n+1), hi = k + 2^(n+2) taken on the numerator, so
    u(f) reproduces the banded coefficients of r exactly through the
    cap and the engine's cutoff branch keeps only [r]_hi plus division
    roundoff.  M at stage n is the order >= lo ideal; membership is
    measured above a noise floor frozen at the seed's coefficient
    scale, because division dust is ulp-sized relative to the
    coefficients that were cancelled, not to the ones that remain.
    """
    if f.basis != "taylor" or f.dim != 1:
        raise LieError("the base point must be a univariate taylor series")
    k = f.order(tol=0.0)
    cap = f.cap
    if k < 2 or k > cap:
        raise LieError("the base point must vanish to finite order >= 2")
    fp = f.derivative(0)
    lead = fp.coefficient(k - 1)
    if fp.is_zero or fp.order(tol=0.0) != k - 1 or lead == 0:
        raise LieError(
            "f' has vanishing leading coefficient; the unit direction "
            "is not invertible")

    # Coefficients of z^(k-1) / f' = 1 / (lead * unit).  They do not
    # depend on the radius, so halve it until the Neumann condition
    # theta < 1 holds and the reciprocal is computable.
    unit_c = np.zeros(cap + 1, dtype=complex)
    unit_c[:cap + 2 - k] = fp.coeffs[k - 1:] / lead
    radius = f.ref_radius
    rec = None
    for _ in range(80):
        unit = TruncatedSeries(1, cap, radius, "taylor", unit_c.copy())
        try:
            rec = unit.reciprocal()
            break
        except SeriesError:
            radius *= 0.5
    if rec is None:
        raise LieError("f' / z^(k-1) is not invertible near the origin")
    rec_c = rec.coeffs / lead

    scale = {}

    def floor_for(g):
        if "value" not in scale:
            scale["value"] = float(np.max(np.abs(g.coeffs)))
        return floor_scale * scale["value"]

    def qi(n, tau, r):
        lo = min(k + 2 ** (n + 1), cap + 1)
        hi = min(k + 2 ** (n + 2), cap + 1)
        wb = np.zeros(cap + 1, dtype=complex)
        wb[lo:hi] = r.coeffs[lo:hi]
        full = np.convolve(wb[k - 1:], rec_c)[:cap + 1]
        a = TruncatedSeries(1, cap, r.ref_radius, "taylor", full)
        return certify_vector_field(a, name=f"window [{lo},{hi}) over f'")

    def m_member(n, g):
        if g.is_zero:
            return True
        threshold = min(k + 2 ** (n + 1), cap + 1)
        return g.order(tol=floor_for(g)) >= threshold

    def t_member(n, g):
        return g.is_zero

    return ActionProblem(
        f, qi, m_member, t_member,
        j_norms=PositiveSequence.constant(j_const),
        exponents=LocalityExponents(alpha=0, beta=k - 1, gamma=1, nu=0, xi=0),
        kappa_norms=PositiveSequence.constant(1.0),
        name="mather")


def mather(f: TruncatedSeries | None = None,
           r0: TruncatedSeries | None = None, *, t: float = 0.8,
           steps: int = 4, cap: int = 64) -> DemoReport:
    """Normalize z^3 + 1e-4 z^7 (or caller-supplied f, r0) at radius t.

    The report's details carry the per-stage membership thresholds the
    run enforced: row n of the trace is certified to vanish to order
    at least min(k + 2^(n+1), cap + 1).
    """
    if f is None:
        f = TruncatedSeries.monomial(3, 1.0, cap=cap, ref_radius=1.0)
    if r0 is None:
        r0 = TruncatedSeries.monomial(7, 1e-4, cap=f.cap, ref_radius=1.0)
    problem = mather_problem(f)
    k = f.order(tol=0.0)
    schedule = rho_schedule(problem, _STRICT_B, t)
    norm0 = _entry_check(r0, t, schedule)
    trace, conjugacy = run_lie(problem, schedule, r0, steps)
    cert = certify(trace, problem, schedule.rho, schedule.sigma, schedule.b)
    thresholds = [min(k + 2 ** (n + 1), f.cap + 1)
                  for n in range(len(trace.steps))]
    details = {
        "threshold": schedule.report.threshold,
        "r0_norm": norm0,
        "k": k,
        "membership_thresholds": thresholds,
        "conjugacy_defect": trace.metadata["conjugacy_coeff_defect"],
        "verdict": cert.verdict,
    }
    return DemoReport("mather", trace, trace.metadata["versality_defect"],
                      details, cert)


# ---- circle rotations ----

def _mean_projector(cap: int) -> LocalOperator:
    """Extract the zero mode as a constant series: the transversal
    direction of constant fields, norm 1 in every strip."""
    def action(g, t, s):
        out = TruncatedSeries(g.dim, g.cap, min(s, g.ref_radius), "fourier")
        out.coeffs[g.cap] = g.coefficient(0)
        out.tail = g.tail
        return out
    return LocalOperator(action, WeightFunction(k=0), 0, 1.0,
                         kind="projector", name="mean")


def circle_problem(omega: float = GOLDEN_MEAN, *, C: float = GOLDEN_C,
                   nu: float = 1.0, cap: int = 64,
                   divisor_log: list | None = None) -> ActionProblem:
    """Perturbed rotation: tau = 2 pi omega as a constant fourier
    series, step multiplier m = [r]_(1 <= |k| <= 2^n) / mean(tau).

    Every mode the stage-n window touches must clear the Diophantine
    bound dist(k omega, Z) >= C / k^nu, or the problem refuses the
    step: the declared |j| envelope 2^n / (4 C) is exactly what the
    divisor field r_k / (e^(2 pi i k omega) - 1) costs under it.
    """
    if not (omega > 0.0) or not (C > 0.0) or nu < 0.0:
        raise LieError("omega and C must be positive, nu nonnegative")
    f = TruncatedSeries.fourier_mode(0, 2.0 * math.pi * omega, cap=cap,
                                     strip=1.0)

    def qi(n, tau, r):
        top = min(2 ** n, cap)
        for k in range(1, top + 1):
            dist = abs(k * omega - round(k * omega))
            bound = C / float(k) ** nu
            # the condition is dist >= bound; equality (the golden mean
            # at k = 1) must pass, so leave room for rounding in dist
            if dist < bound and not math.isclose(dist, bound, rel_tol=1e-9):
                raise LieError(
                    f"small divisor violation at mode k = {k}: "
                    f"dist(k omega, Z) = {dist:.6g} < {C:g} / k^{nu:g}")
        mean = tau.coefficient(0)
        if mean == 0:
            raise LieError("the rotation number collapsed to zero")
        m = TruncatedSeries(1, cap, r.ref_radius, "fourier")
        for k in range(1, top + 1):
            m.coeffs[cap + k] = r.coefficient(k) / mean
            m.coeffs[cap - k] = r.coefficient(-k) / mean
        if divisor_log is not None:
            # homological solve in the flow convention: v_k = r_k/(i k w)
            worst = max((max(abs(r.coefficient(k)), abs(r.coefficient(-k)))
                         / (k * omega) for k in range(1, top + 1)),
                        default=0.0)
            divisor_log.append({"n": n, "modes": top,
                                "divisor_field_coeff": float(worst)})
        return multiplication_operator(m, name=f"band [1,{top}] over mean")

    def m_member(n, g):
        return True

    def t_member(n, g):
        c = g.coeffs.copy()
        c[g.cap] = 0.0
        return not np.any(c)

    pi_op = _mean_projector(cap)
    return ActionProblem(
        f, qi, m_member, t_member,
        j_norms=PositiveSequence.geometric(2.0).scaled(1.0 / (4.0 * C)),
        exponents=LocalityExponents(alpha=0, beta=0, gamma=0, nu=0, xi=0),
        projector=lambda n: pi_op,
        pi_norms=PositiveSequence.constant(1.0),
        name="circle")


def circle(omega: float = GOLDEN_MEAN, eps: float = 1e-3, steps: int = 8, *,
           strip: float = 0.5, strip_end: float = 0.2,
           C: float | None = None, nu: float = 1.0,
           f: TruncatedSeries | None = None, cap: int = 64) -> DemoReport:
    """Conjugate the rotation by 2 pi omega perturbed by f (default
    2 eps cos x) across strips shrinking geometrically from `strip`
    to `strip_end`.

    f must have zero mean: its mean is not a perturbation but a shift
    of the rotation number, and the run measures that shift itself as
    the accumulated frequency correction.  The one-step envelope in the
    details is 2 (|f|_strip / sigma)^2 with sigma = sqrt(2 pi omega)/e,
    sharp for a single-mode perturbation.
    """
    if C is None:
        C = GOLDEN_C if omega == GOLDEN_MEAN else 0.2
    if f is None:
        f = (TruncatedSeries.fourier_mode(1, eps, cap=cap, strip=strip)
             + TruncatedSeries.fourier_mode(-1, eps, cap=cap, strip=strip))
    elif f.basis != "fourier":
        raise LieError("the perturbation must be a fourier series")
    if abs(f.coefficient(0)) > 0.0:
        raise LieError(
            "the perturbation must have zero mean; a mean is a rotation "
            "number shift, fold it into omega")
    divisor_log: list = []
    problem = circle_problem(omega, C=C, nu=nu, cap=cap,
                             divisor_log=divisor_log)
    radii = RadiusSchedule.geometric(0.5, strip, strip_end)
    trace, conjugacy = run_lie(problem, radii, f, steps)
    gx = trace.metadata["conjugacy_coeff_defect"]
    tau_mean = 2.0 * math.pi * omega
    f_norm = f.majorant_norm(min(strip, f.ref_radius)).value
    sigma = math.sqrt(2.0 * math.pi * omega) / math.e
    details = {
        "omega": omega,
        "C": C,
        "nu": nu,
        "lambda_correction": _lambda_correction(conjugacy, problem.f, f,
                                                tau_mean, strip),
        "divisor_log": divisor_log,
        "one_step_envelope": 2.0 * (f_norm / sigma) ** 2,
        "conjugacy_defect": gx,
    }
    return DemoReport("circle", trace, trace.metadata["versality_defect"],
                      details)


def _lambda_correction(conjugacy, tau0: TruncatedSeries, r0: TruncatedSeries,
                       base_mean: float, strip: float) -> float:
    """Frequency correction: the mean of the conjugated element minus
    the unperturbed 2 pi omega."""
    x0 = tau0.restrict(strip) + r0.restrict(strip)
    gx, _ = conjugacy.apply(x0)
    return float((gx.coefficient(0) - base_mean).real)
