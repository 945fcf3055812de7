"""Certified conjugation of perturbed elements under a group action.

The engine normalizes x_0 = f + r_0 by alternating two moves: project
the current remainder onto a transversal (the delta update) and push
the rest into the group direction through e^(-u) (the r update).  Radii
fall along a certified schedule; each step spends the decrement
s_n - s_{n+1} in quarters so that the field application, the projector
and the three Borel series all fit inside the step's window.

`rho_schedule` tunes the contraction sequence rho so the five smallness
conditions backing the quadratic convergence proof hold on a finite
window; `certify` replays a finished trace against those inequalities
and returns verdicts, never exceptions.  `involutive_quasi_inverse`
builds the step map j from a single linear section L and validates its
defining algebraic identity on randomized inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .iterate import RadiusSchedule
from .local_ops import (EXP_NEG, PHI, PSI, LocalOperator, OperatorError,
                        borel_apply, product_of_exponentials)
from .sequences import (PositiveSequence, SequenceDomainError, bruno_check,
                        lemma_rho, strictness_check)
from .series import SeriesError, TruncatedSeries
from .trace import IterationTrace, StepRecord

_LOG2 = math.log(2.0)
_LOG4E = math.log(4.0) + 1.0


class LieError(ValueError):
    """Raised when the conjugation engine leaves its certified domain."""


# ---- small series helpers ----

def _norm_at(g: TruncatedSeries, s: float) -> float:
    return g.majorant_norm(min(s, g.ref_radius)).value


def _aligned(a: TruncatedSeries, b: TruncatedSeries):
    r = min(a.ref_radius, b.ref_radius)
    a = a if a.ref_radius == r else a.restrict(r)
    b = b if b.ref_radius == r else b.restrict(r)
    if a.cap != b.cap:
        if a.cap < b.cap and a.tail == 0.0:
            a = a.with_cap(b.cap)
        elif b.cap < a.cap and b.tail == 0.0:
            b = b.with_cap(a.cap)
        else:
            c = min(a.cap, b.cap)
            a, b = a.with_cap(c), b.with_cap(c)
    return a, b


def _add(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    a, b = _aligned(a, b)
    return a + b


def _sub(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    a, b = _aligned(a, b)
    return a - b


def _max_coeff_diff(a: TruncatedSeries, b: TruncatedSeries) -> float:
    a, b = _aligned(a, b)
    return float(np.max(np.abs(a.coeffs - b.coeffs)))


def _negated(u: LocalOperator) -> LocalOperator:
    def action(g: TruncatedSeries, t: float, s: float) -> TruncatedSeries:
        return u.action(g, t, s).scale(-1.0)

    return LocalOperator(action, u.weight, u.grade, u.norm_bound, u.kind,
                         f"-{u.name}", u.order_raise, u.cert_radius,
                         dict(u.params))


# ---- problem description ----

@dataclass(frozen=True)
class LocalityExponents:
    """Total weight degrees declared for pi, j and kappa.

    alpha belongs to the projector, beta and gamma to the two slots of
    the quasi-inverse (its dependence on tau and its action on r), nu
    and xi to the cutoff part.  The quadratic branch of the master
    estimate then carries k = 2 (alpha + beta + gamma + 1) weight
    factors and the linear branch l = nu + xi + 1; the extra +1 in each
    is the derivation weight of the step field itself.
    """

    alpha: int = 0
    beta: int = 0
    gamma: int = 0
    nu: int = 0
    xi: int = 0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "nu", "xi"):
            if getattr(self, name) < 0:
                raise LieError(f"{name} must be nonnegative")

    @property
    def k(self) -> int:
        return 2 * (self.alpha + self.beta + self.gamma + 1)

    @property
    def l(self) -> int:
        return self.nu + self.xi + 1

    def to_json_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
                "nu": self.nu, "xi": self.xi, "k": self.k, "l": self.l}


@dataclass
class ActionProblem:
    """One conjugation problem: base point, step operators, norms.

    quasi_inverse(n, tau, r) returns the step field u_n = j(tau_n)(r_n)
    as a certified derivation valid at the current radius.  projector
    None means the transversal is {0}, so every delta vanishes and the
    whole remainder goes through the cutoff branch.  m_member and
    t_member are exact membership predicates (order or coefficient
    support); they gate the engine, while the declared norm sequences
    |pi|, |j|, |kappa| feed the scheduler and the certificates.
    """

    f: TruncatedSeries
    quasi_inverse: Callable[[int, TruncatedSeries, TruncatedSeries],
                            LocalOperator]
    m_member: Callable[[int, TruncatedSeries], bool]
    t_member: Callable[[int, TruncatedSeries], bool]
    j_norms: PositiveSequence
    exponents: LocalityExponents
    projector: Callable[[int], LocalOperator] | None = None
    pi_norms: PositiveSequence | None = None
    kappa_norms: PositiveSequence | None = None
    sampler: Callable[[np.random.Generator, int], TruncatedSeries] | None = None
    name: str = "action"

    def __post_init__(self):
        if self.projector is not None and self.pi_norms is None:
            raise LieError("a projector needs declared pi norms")
        if self.sampler is not None:
            self.validate()

    def validate(self, samples: int = 3, seed: int = 0) -> None:
        """Sampled invariants: the projector acts as iota on its own
        image, and sampled step fields are tangent to M at f and at the
        sampled perturbation itself."""
        if self.sampler is None:
            raise LieError("validation needs a sampler")
        rng = np.random.default_rng(seed)
        t = self.f.ref_radius
        for i in range(samples):
            m = self.sampler(rng, 0)
            if not (m.is_zero or self.m_member(0, m)):
                raise LieError(f"sampler left M (sample {i})")
            if self.projector is not None:
                pi = self.projector(0)
                a = pi(m, t, 0.75 * t)
                b = pi(a, 0.75 * t, 0.5 * t)
                scale = 1.0 + _norm_at(a, 0.75 * t)
                if _max_coeff_diff(b, a.restrict(0.5 * t)) > 1e-12 * scale:
                    raise LieError(
                        f"projector is not iota on its own image (sample {i})")
            u = self.quasi_inverse(0, self.f, m)
            for g, label in ((self.f, "f"), (m, "m")):
                out = u(g, t, 0.5 * t)
                if not (out.is_zero or self.m_member(0, out)):
                    raise LieError(
                        f"u({label}) left M for a sampled field (sample {i})")


@dataclass
class LieState:
    """State after n steps: radius, split x_n = tau_n + r_n, and the
    last increment delta_n and field u_{n-1} that produced it.

    slack is the truncation ledger: the summed norm of everything the
    Borel applications could not represent below the cap.  It is kept
    outside the series (flat, never rescaled, so always an upper bound)
    so the iterated series stay tail-free and coefficient operations at
    collapsed radii cannot inflate rounding dust.  Per-step norms
    describe the computed series exactly; the ledger is reported per
    row and enters the final defect.
    """

    n: int
    s: float
    tau: TruncatedSeries
    r: TruncatedSeries
    delta: TruncatedSeries | None = None
    u: LocalOperator | None = None
    slack: float = 0.0

    @property
    def x(self) -> TruncatedSeries:
        return _add(self.tau, self.r)

    @property
    def r_norm(self) -> float:
        return _norm_at(self.r, self.s)

    @property
    def tau_norm(self) -> float:
        return _norm_at(self.tau, self.s)

    @property
    def delta_norm(self) -> float:
        return 0.0 if self.delta is None else _norm_at(self.delta, self.s)

    @property
    def u_norm(self) -> float:
        return 0.0 if self.u is None else self.u.norm_bound


# ---- one step ----

def lie_step(state: LieState, problem: ActionProblem,
             radii: RadiusSchedule) -> tuple[LieState, dict]:
    """One conjugation step from radius s_n to s_{n+1}.

    u_n = j(tau_n)(r_n) is built at s_n; its application to tau_n spends
    the first quarter of the decrement and the projector the second, so
    delta_{n+1} = pi(r_n - u_n(tau_n)) sits at the midpoint.  The new
    remainder r_{n+1} = phi(u_n) tau_n + psi(u_n) delta_{n+1}
    + e^(-u_n) kappa_n lands at s_{n+1}, where kappa_n is the
    complementary part (iota - pi)(r_n - u_n(tau_n)) and
    phi(z) = e^(-z)(1 + z) - 1, psi(z) = e^(-z) - 1.  Uncomputed Borel
    remainders are folded into the tail of r_{n+1} so its recorded norm
    stays an upper bound.  Any domain violation raises LieError naming
    the failing sub-expression.
    """
    n, s = state.n, state.s
    s1 = radii.radius(n + 1)
    if not (0.0 < s1 < s):
        raise LieError(f"step {n}: radii must fall, got {s:g} -> {s1:g}")
    dec = s - s1
    p1 = s - 0.25 * dec
    p2 = s - 0.5 * dec
    tau, r = state.tau, state.r

    def guard(label, fn, *args):
        try:
            return fn(*args)
        except (OperatorError, SeriesError, SequenceDomainError) as exc:
            raise LieError(f"step {n}, {label}: {exc}") from None

    u_op = guard("j(tau_n) r_n", problem.quasi_inverse, n, tau, r)
    w_u = guard("u_n(tau_n)", u_op, tau, s, p1)
    w = guard("r_n - u_n(tau_n)", _sub, r.restrict(p1), w_u)
    if problem.projector is not None:
        pi_op = problem.projector(n)
        delta_raw = guard("pi(r_n - u_n(tau_n))", pi_op, w, p1, p2)
    else:
        delta_raw = TruncatedSeries(w.dim, w.cap, p2, w.basis)
    kappa_val = guard("(iota - pi)(r_n - u_n(tau_n))",
                      _sub, w.restrict(p2), delta_raw)

    phi_app = guard("phi(u_n) tau_n", borel_apply, PHI, u_op, s, s1, tau)
    psi_app = None
    if problem.projector is not None:
        psi_app = guard("psi(u_n) delta_{n+1}",
                        borel_apply, PSI, u_op, p2, s1, delta_raw)
    kap_app = guard("exp(-u_n) kappa_n", borel_apply, EXP_NEG, u_op, p2, s1,
                    kappa_val)

    r_next = phi_app.series
    slack = state.slack
    slack += 0.0 if phi_app.folded else phi_app.remainder
    for app in (psi_app, kap_app):
        if app is None:
            continue
        r_next = guard("r_{n+1} assembly", _add, r_next, app.series)
        slack += 0.0 if app.folded else app.remainder
    # Move whatever landed in the tail (folded remainders, cap overflow)
    # into the flat ledger: a tail at a collapsed radius would otherwise
    # blow up every later coefficient operation that divides by it.
    if r_next.tail > 0.0:
        r_next = r_next.copy()
        slack += r_next.tail
        r_next.tail = 0.0
    delta = delta_raw.restrict(s1)
    tau_next = guard("tau_{n+1}", _add, tau.restrict(s1), delta)

    # x_{n+1} = e^(-u_n) x_n must hold coefficientwise; measure it
    direct = guard("exp(-u_n) x_n", borel_apply, EXP_NEG, u_op, s, s1,
                   _add(tau, r))
    defect = _max_coeff_diff(_add(tau_next, r_next), direct.series)

    if not (r_next.is_zero or problem.m_member(n + 1, r_next)):
        raise LieError(f"step {n}: r_{{n+1}} left M")
    if problem.projector is not None and not (
            delta.is_zero or problem.t_member(n + 1, delta)):
        raise LieError(f"step {n}: delta_{{n+1}} left T")

    nxt = LieState(n + 1, s1, tau_next, r_next, delta, u_op, slack)
    diag = {
        "consistency_defect": defect,
        "s_quarter": p1,
        "s_half": p2,
        "phi_terms": phi_app.terms,
        "exp_terms": kap_app.terms,
        "truncation_slack": slack,
    }
    if r_next.basis == "taylor":
        # vanishing order, measured above relative rounding dust
        mx = float(np.max(np.abs(r_next.coeffs)))
        diag["r_order"] = r_next.order(1e-13 * mx)
    return nxt, diag


# ---- the contraction schedule ----

@dataclass(frozen=True)
class LieScheduleReport:
    """Outcome of the K search: per-condition verdicts on the window and
    the entry threshold epsilon * t^m implied by the tuned constants."""

    window: int
    K: float
    halvings: int
    alpha: float
    conditions: dict
    binding: str | None
    epsilon: float
    m: int
    threshold: float
    tau0_norm: float
    k: int
    l: int

    @property
    def passed(self) -> bool:
        return all(all(v) for v in self.conditions.values())


class LieSchedule(NamedTuple):
    rho: PositiveSequence
    sigma: PositiveSequence
    radii: RadiusSchedule
    b: PositiveSequence
    report: LieScheduleReport


def _derived_logs(problem: ActionProblem, tau0: float, count: int) -> dict:
    """Log values of the four derived constant sequences on the window:

        a'_n   = |pi_n| (1 + |j_n|) (2 + |tau_0|) (1 + |tau_0|)
        a''_n  = 4 e^2 (1 + |tau_0|)^2 |j_n|^2
        a'''_n = 4 e (1 + |tau_0|) |j_n| a'_n
        a''''_n = 4 |kappa_n|

    Absent operators contribute -inf (their products vanish).
    """
    neg_inf = np.full(count, -math.inf)
    log_j = np.asarray(problem.j_norms.log_values(count),
                       dtype=float)[:count]
    log_pi = (neg_inf if problem.pi_norms is None
              else np.asarray(problem.pi_norms.log_values(count),
                              dtype=float)[:count])
    log_kap = (neg_inf if problem.kappa_norms is None
               else np.asarray(problem.kappa_norms.log_values(count),
                               dtype=float)[:count])
    log_ap = (log_pi + np.logaddexp(0.0, log_j)
              + math.log(2.0 + tau0) + math.log1p(tau0))
    log_app = math.log(4.0) + 2.0 + 2.0 * math.log1p(tau0) + 2.0 * log_j
    log_appp = math.log(4.0) + 1.0 + math.log1p(tau0) + log_j + log_ap
    log_a4 = math.log(4.0) + log_kap
    return {"j": log_j, "ap": log_ap, "app": log_app, "appp": log_appp,
            "a4": log_a4}


def rho_schedule(problem: ActionProblem, b: PositiveSequence, t: float, *,
                 alpha: float = 1.5, window: int = 40,
                 max_halvings: int = 64) -> LieSchedule:
    """Tune rho_n = K b_n c_n e^(-alpha^n) until the five smallness
    conditions hold on the window, then emit the radius schedule
    s_{n+1} = rho_n^(1/2^n) s_n from s_0 = t.

    Condition 1 is the tame model pair (2 (a'' + a''') sigma^-k,
    2 rho a'''' sigma^-l); condition 2 controls the linear branch
    (a'''' sigma^-l rho_n <= rho_{n+1}^(1/2)); condition 3 the
    exponentials (4 e |j_n| sigma_n^-1 rho_n^(1/2) <= rho_{n+1}^(1/4));
    condition 4 the transversal increments (a'_n sigma_n^(-k/2)
    rho_n^(1/2) <= rho_{n+1}^(1/4)); condition 5 keeps
    rho_n^(1/4) < 1/2^n.  K is halved (at most max_halvings times)
    until all pass; absent kappa makes conditions 1 and 2 vacuous in
    their kappa factor and an absent projector makes condition 4
    vacuous.  The report carries the entry threshold as epsilon * t^m
    with m = k + l.
    """
    if not (t > 0.0):
        raise LieError("the starting radius t must be positive")
    if problem.f.ref_radius < t:
        raise LieError("f is not certified at the starting radius")
    for label, seq in (("pi", problem.pi_norms), ("j", problem.j_norms),
                       ("kappa", problem.kappa_norms)):
        if seq is None:
            continue
        try:
            cert = bruno_check(seq, depth=window + 1)
        except SequenceDomainError as exc:
            raise LieError(f"|{label}| norm sequence: {exc}") from None
        if cert.verdict == "not_bruno":
            raise LieError(
                f"|{label}| is certified non-summable; no schedule exists")
    if not strictness_check(b, window + 2):
        raise LieError("b must be strict (b <= 1, b_n^2 <= b_{n+1})")

    exps = problem.exponents
    k, l = exps.k, exps.l
    count = window + 2
    tau0 = _norm_at(problem.f.restrict(t), t)
    logs = _derived_logs(problem, tau0, count)
    # lemma_rho needs closed-form inputs for its tail certificates, so
    # dominate 2 (a'' + a''') by a scaled power of |j|: the pair check
    # only gets harder and the taming epsilon only smaller.
    ratio = np.exp(logs["appp"] - logs["app"])
    rmax = 0.0 if problem.pi_norms is None else float(np.max(ratio))
    a_lem = (problem.j_norms ** 2.0).scaled(
        log_factor=math.log(2.0 * (1.0 + rmax)) + math.log(4.0) + 2.0
        + 2.0 * math.log1p(tau0))
    if problem.kappa_norms is not None:
        ap_lem = problem.kappa_norms.scaled(factor=8.0)
    else:
        ap_lem = PositiveSequence.constant(1.0)

    chosen = None
    binding = "rho outside (0, 1)"
    K_try = 0.5
    halvings = 0
    for halvings in range(max_halvings):
        try:
            rho, sigma, rep = lemma_rho(a_lem, ap_lem, b, k, l, K=K_try,
                                        alpha=alpha, window=window,
                                        depth=window)
        except SequenceDomainError:
            binding = "rho outside (0, 1)"
            K_try *= 0.5
            continue
        lr = np.array([rho.log(n) for n in range(window + 1)])
        x = lr / np.power(2.0, np.arange(window + 1))
        ls = np.where(x < -_LOG2,
                      np.log1p(-np.exp(x)),
                      np.log(np.maximum(-np.expm1(x), 1e-300)))
        la4, lap, lj = logs["a4"], logs["ap"], logs["j"]
        c2, c3, c4, c5 = [], [], [], []
        for n in range(window):
            c2.append(bool(la4[n] - l * ls[n] + lr[n] <= 0.5 * lr[n + 1]))
            c3.append(bool(_LOG4E + lj[n] - ls[n] + 0.5 * lr[n]
                           <= 0.25 * lr[n + 1]))
            c4.append(bool(lap[n] - 0.5 * k * ls[n] + 0.5 * lr[n]
                           <= 0.25 * lr[n + 1]))
            c5.append(bool(0.25 * lr[n] < -n * _LOG2))
        conditions = {
            "model-pair": rep.pair_star,
            "model-below-b": rep.below_b,
            "linear-branch": tuple(c2),
            "exp-smallness": tuple(c3),
            "transversal-increment": tuple(c4),
            "n-range": tuple(c5),
        }
        if all(all(v) for v in conditions.values()):
            chosen = (rho, sigma, conditions, K_try)
            break
        for name, flags in conditions.items():
            if not all(flags):
                binding = name
                break
        K_try *= 0.5
    if chosen is None:
        raise LieError(f"no radius schedule within {max_halvings} halvings; "
                       f"binding condition: {binding}")

    rho, sigma, conditions, K = chosen
    radii = RadiusSchedule.rho_driven(rho, t)
    sig0 = sigma.value(0)
    gates = [sig0 / (4.0 * math.e * math.exp(logs["j"][0])), b.value(0)]
    if problem.projector is not None:
        # N1 seed: |delta_1| <= a'_0 |r_0| must start below 1/4
        gates.append(0.25 * math.exp(-logs["ap"][0]))
    threshold = min(gates)
    m = k + l
    report = LieScheduleReport(window, K, halvings, alpha, conditions, None,
                               threshold / t ** m, m, threshold, tau0, k, l)
    return LieSchedule(rho, sigma, radii, b, report)


# ---- full run and post-hoc certificate ----

def run_lie(problem: ActionProblem, schedule: LieSchedule | RadiusSchedule,
            r0: TruncatedSeries, steps: int) -> tuple[IterationTrace,
                                                      "object"]:
    """Iterate lie_step and assemble the conjugacy.

    Returns the trace (row n carries |r_n|, |delta_n|, |u_{n-1}|, the
    envelope b_n and sigma_n when a full schedule is given) and the
    certified product g = e^(-u_{N-1}) ... e^(-u_0).  The run checks the
    versality identity g(tau_0 + r_0) = tau_0 + sum delta_i + r_N
    coefficientwise at the final radius; the reported defect is |r_N|
    plus the truncation ledger accumulated by the Borel applications.
    """
    if isinstance(schedule, LieSchedule):
        radii = schedule.radii
        b, sigma = schedule.b, schedule.sigma
    else:
        radii, b, sigma = schedule, None, None

    def b_at(n):
        if b is None:
            return None
        try:
            return b.value(n)
        except SequenceDomainError:
            return None

    def sigma_at(n):
        if sigma is None:
            return None
        try:
            return sigma.value(n)
        except SequenceDomainError:
            return None

    t = radii.radius(0)
    if problem.f.ref_radius < t or r0.ref_radius < t:
        raise LieError("f and r_0 must be certified at the starting radius")
    tau = problem.f if problem.f.ref_radius == t else problem.f.restrict(t)
    r = r0 if r0.ref_radius == t else r0.restrict(t)
    slack0 = 0.0
    if r.tail > 0.0:
        r = r.copy()
        slack0, r.tail = r.tail, 0.0
    if not (r.is_zero or problem.m_member(0, r)):
        raise LieError("r_0 is not in M")

    trace = IterationTrace("lie", metadata={
        "problem": problem.name,
        "exponents": problem.exponents.to_json_dict(),
        "schedule": radii.to_json_dict(),
        "steps": steps,
        "tau0_norm": _norm_at(tau, t),
        "r0_norm": _norm_at(r, t) + slack0,
    })
    state = LieState(0, t, tau, r, slack=slack0)
    trace.add(StepRecord(0, radius=t, value_norm=state.r_norm,
                         increment_norm=0.0, aux_norm=0.0, bound=b_at(0),
                         sigma=sigma_at(0), checks_passed=True))
    fields = []
    worst_defect = 0.0
    for i in range(steps):
        state, diag = lie_step(state, problem, radii)
        fields.append(state.u)
        worst_defect = max(worst_defect, diag["consistency_defect"])
        trace.add(StepRecord(state.n, radius=state.s,
                             value_norm=state.r_norm,
                             increment_norm=state.delta_norm,
                             aux_norm=state.u_norm, bound=b_at(state.n),
                             sigma=sigma_at(state.n), checks_passed=True,
                             extra=diag))

    rs = [radii.radius(i) for i in range(steps + 1)]
    try:
        conjugacy = product_of_exponentials([_negated(u) for u in fields], rs)
        gx, g_rem = conjugacy.apply(_add(tau, r))
    except (OperatorError, SeriesError) as exc:
        raise LieError(f"conjugacy assembly: {exc}") from None
    versality = _max_coeff_diff(gx, _add(state.tau, state.r))

    x0_norm = _norm_at(_add(tau, r), t)
    trace.metadata.update({
        "versality_defect": state.r_norm + state.slack,
        "conjugacy_coeff_defect": versality,
        "conjugacy_sigma": conjugacy.sigma,
        "conjugacy_remainder": g_rem,
        "consistency_worst": worst_defect,
        "limit_radius": radii.limit,
    })
    if state.r_norm + state.slack <= 1e-10 * (1.0 + x0_norm):
        trace.status = "converged"
    return trace, conjugacy


@dataclass(frozen=True)
class LieCertificate:
    """Post-hoc verdicts: every tuple is indexed by the trace row."""

    n1: tuple
    n2: tuple
    master: tuple
    value_below: tuple
    increment_below: tuple
    verdict: str
    first_failure: tuple | None
    details: dict


def certify(trace: IterationTrace, problem: ActionProblem,
            rho: PositiveSequence, sigma: PositiveSequence,
            b: PositiveSequence) -> LieCertificate:
    """Replay a finished trace against the convergence inequalities.

    Checked per row: N1 |delta_j| <= 1/2^(j+1); N2 |r_n| <=
    sigma_n / (4 e |j_n|); the master inequality |r_{n+1}| <=
    (a''_n + a'''_n) sigma_n^-k |r_n|^2 + rho_n a''''_n sigma_n^-l |r_n|;
    and the conclusions |r_n| <= b_n, |delta_n| <= b_n.  Failures are
    verdicts, not exceptions.
    """
    rows = trace.steps
    if not rows:
        raise LieError("empty trace")
    count = len(rows)
    for n in range(count):
        try:
            sigma.value(n)
            rho.value(n)
            problem.j_norms.value(n)
        except SequenceDomainError:
            count = n
            break
    grace = 1.0 + 1e-9
    k, l = problem.exponents.k, problem.exponents.l
    tau0 = _norm_at(problem.f, rows[0].radius)
    logs = _derived_logs(problem, tau0, count + 1)
    quad = np.exp(logs["app"]) + np.exp(logs["appp"])
    a4 = np.exp(logs["a4"])
    jn = np.exp(logs["j"])
    r = [rows[n].value_norm for n in range(count)]
    d = [rows[n].increment_norm for n in range(count)]
    sig = [sigma.value(n) for n in range(count)]
    rh = [rho.value(n) for n in range(count)]
    bv = [b.value(n) for n in range(count)]

    n1, n2, master, below_r, below_d = [], [], [], [], []
    for n in range(count):
        n1.append(n == 0 or d[n] <= 0.5 ** (n + 1) * grace)
        n2.append(r[n] <= sig[n] / (4.0 * math.e * jn[n]) * grace)
        if n == 0:
            master.append(True)
        else:
            rhs = (quad[n - 1] * sig[n - 1] ** (-k) * r[n - 1] ** 2
                   + rh[n - 1] * a4[n - 1] * sig[n - 1] ** (-l) * r[n - 1])
            master.append(r[n] <= rhs * grace + 1e-300)
        below_r.append(r[n] <= bv[n] * grace)
        below_d.append(n == 0 or d[n] <= bv[n] * grace)

    first = None
    for n in range(count):
        for name, flags in (("N2", n2), ("master", master), ("N1", n1),
                            ("value<=b", below_r),
                            ("increment<=b", below_d)):
            if not flags[n]:
                first = (name, n)
                break
        if first:
            break
    ok = first is None and count == len(rows)
    return LieCertificate(tuple(n1), tuple(n2), tuple(master),
                          tuple(below_r), tuple(below_d),
                          "certified" if ok else "uncertified", first,
                          {"checked_steps": count, "rows": len(rows),
                           "k": k, "l": l})


# ---- quasi-inverse from a linear section ----

@dataclass
class InvolutiveQuasiInverse:
    """j(delta)(r) = L(r - L(r) delta) with its cutoff complement
    kappa0(m) = (iota - pi)(m - L(m)(x)), plus the worst sampled defect
    of the defining identity."""

    j: Callable
    kappa0: Callable
    defect: float
    samples: int


def _random_poly(rng: np.random.Generator, like: TruncatedSeries,
                 degree: int) -> TruncatedSeries:
    coeffs = np.zeros(like.cap + 1, dtype=complex)
    coeffs[:degree + 1] = rng.uniform(-1.0, 1.0, degree + 1)
    return TruncatedSeries(1, like.cap, like.ref_radius, "taylor", coeffs)


def involutive_quasi_inverse(L: Callable[[TruncatedSeries], LocalOperator],
                             pi: LocalOperator | None, x: TruncatedSeries, *,
                             samples: int = 8, max_degree: int = 8,
                             seed: int = 0,
                             tol: float = 1e-12) -> InvolutiveQuasiInverse:
    """Build the step map j from one linear section L: M -> fields.

    With the action defect D(m) = m - L(m)(x) and kappa0 = (iota - pi) D,
    the returned map satisfies, for delta in the transversal,

        j(delta)(r)(x + delta)
            = r - kappa0(r - L(r) delta) - L(L(r) delta)(delta)  (mod T),

    which is validated on randomized polynomial inputs of degree <=
    max_degree, together with the hypothesis that the fields L(m) map
    the transversal into itself.  A failed sample makes the constructor
    refuse with a witness.  All validation applications stay at the
    reference radius of x, so L and pi must accept equal input and
    output radii on polynomial data.
    """
    t = x.ref_radius

    def apply_pi(w: TruncatedSeries) -> TruncatedSeries:
        if pi is None:
            return TruncatedSeries(w.dim, w.cap, w.ref_radius, w.basis)
        return pi(w, w.ref_radius, w.ref_radius)

    def kappa0(m: TruncatedSeries) -> TruncatedSeries:
        dm = _sub(m, L(m)(x, t, t))
        return _sub(dm, apply_pi(dm))

    def j(delta: TruncatedSeries):
        def step(r: TruncatedSeries) -> LocalOperator:
            return L(_sub(r, L(r)(delta, delta.ref_radius,
                                  delta.ref_radius)))
        return step

    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(samples):
        r = _random_poly(rng, x, max_degree)
        delta = apply_pi(_random_poly(rng, x, max_degree))
        tangent = L(_random_poly(rng, x, max_degree))(delta, t, t)
        scale = 1.0 + _norm_at(tangent, t)
        if _max_coeff_diff(apply_pi(tangent), tangent) > tol * scale:
            raise LieError(
                f"fields do not preserve the transversal (sample {i})")
        m2 = L(r)(delta, t, t)
        lhs = j(delta)(r)(_add(x, delta), t, t)
        rhs = _sub(_sub(r, kappa0(_sub(r, m2))), L(m2)(delta, t, t))
        diff = _sub(lhs, rhs)
        moded = _sub(diff, apply_pi(diff))
        scale = 1.0 + _norm_at(r, t) + _norm_at(lhs, t)
        defect = _max_coeff_diff(moded,
                                 TruncatedSeries(moded.dim, moded.cap,
                                                 moded.ref_radius,
                                                 moded.basis))
        if defect > tol * scale:
            raise LieError(f"quasi-inverse identity fails on sample {i}: "
                           f"defect {defect:g}")
        worst = max(worst, defect)
    return InvolutiveQuasiInverse(j, kappa0, worst, samples)
