"""Tests for radius schedules and the iteration engines."""

import math

import numpy as np
import pytest

from banachscale.iterate import (
    IterationError,
    RadiusSchedule,
    majorized_iteration,
    nash_moser,
    newton,
    quadratic_model,
    relative_contraction,
)
from banachscale.local_ops import multiplication_operator
from banachscale.sequences import PositiveSequence
from banachscale.series import TruncatedSeries


def poly(coeffs, *, cap=32, ref=1.0, tail=0.0):
    s = TruncatedSeries(1, cap, ref, "taylor", tail=tail)
    for i, c in enumerate(coeffs):
        s.coeffs[i] = c
    return s


def norm_at_own_ref(f):
    return f.majorant_norm(f.ref_radius).value


# ---- radius schedules ----

def test_geometric_schedule_basics():
    sched = RadiusSchedule.geometric(0.5, 1.5, 0.5)
    assert sched.radius(0) == 1.5
    assert sched.limit == 0.5
    radii = [sched.radius(n) for n in range(41)]
    assert all(a > b for a, b in zip(radii, radii[1:]))
    assert all(r > 0.5 for r in radii)


def test_geometric_decrement_is_exact_power():
    # with s0 - s_inf = q/(1-q) the decrements are exactly q^(n+1) and
    # the midpoint sits q^(n+1)/2 below s_n, both exact in binary floats
    sched = RadiusSchedule.proof_normalized(0.5, 1.5)
    assert sched.params["s_inf"] == 0.5
    for n in range(30):
        assert sched.decrement(n) == 0.5 ** (n + 1)
        assert sched.radius(n) - sched.midpoint(n) == 0.5 ** (n + 2)


def test_proof_normalization_requires_room():
    with pytest.raises(IterationError, match="positive limit"):
        RadiusSchedule.proof_normalized(0.5, 1.0)


def test_geometric_schedule_rejects_bad_params():
    with pytest.raises(IterationError):
        RadiusSchedule.geometric(1.0, 1.0, 0.5)
    with pytest.raises(IterationError):
        RadiusSchedule.geometric(0.5, 1.0, 1.0)
    with pytest.raises(IterationError):
        RadiusSchedule.geometric(0.5, 1.0, -0.1)


def test_rho_driven_schedule_matches_product():
    sched = RadiusSchedule.rho_driven(PositiveSequence.constant(0.25), 1.0)
    # s_{n+1} = rho^(1/2^n) s_n
    assert sched.radius(1) == pytest.approx(0.25, rel=1e-15)
    assert sched.radius(2) == pytest.approx(0.125, rel=1e-15)
    assert sched.radius(3) == pytest.approx(0.125 * 0.25 ** 0.25, rel=1e-15)
    # limit = s0 * 0.25^(sum 2^-n) = 1/16, certified via the tail bound
    assert sched.limit == pytest.approx(1.0 / 16.0, rel=1e-9)
    radii = [sched.radius(n) for n in range(20)]
    assert all(a > b for a, b in zip(radii, radii[1:]))


def test_rho_driven_rejects_non_summable_and_rho_above_one():
    bad = PositiveSequence.exp_power(-1, 2.5)
    with pytest.raises(IterationError, match="non-summable"):
        RadiusSchedule.rho_driven(bad, 1.0)
    table = PositiveSequence.tabulated([1.5] + [0.5] * 40)
    with pytest.raises(IterationError, match="rho_0 >= 1"):
        RadiusSchedule.rho_driven(table, 1.0)


def test_schedule_json_round_trip_fields():
    sched = RadiusSchedule.geometric(0.5, 1.0, 0.4)
    d = sched.to_json_dict()
    assert d == {"kind": "geometric", "q": 0.5, "s0": 1.0, "s_inf": 0.4}
    rd = RadiusSchedule.rho_driven(PositiveSequence.constant(0.3), 2.0)
    d2 = rd.to_json_dict()
    assert d2["kind"] == "rho_driven" and d2["s0"] == 2.0


# ---- relative contraction ----

def test_contraction_halving():
    x0 = poly([0.0, 1.0, 0.5], cap=16)
    trace = relative_contraction(lambda n, x: x.scale(0.5),
                                 PositiveSequence.constant(0.5), x0, steps=20)
    assert trace.certified
    assert trace.status == "converged"
    d1 = trace.steps[0].increment_norm
    assert d1 == pytest.approx(0.75, rel=1e-15)     # |x0|/2 = 1.5/2
    for rec in trace.steps[1:]:
        assert rec.increment_norm == pytest.approx(d1 * 0.5 ** rec.n,
                                                   rel=1e-12)
        assert rec.checks_passed


def test_contraction_unit_lambda_gives_no_cauchy_certificate():
    x0 = poly([0.5, 0.25], cap=8)
    trace = relative_contraction(lambda n, x: x.scale(1j),
                                 PositiveSequence.constant(1.0), x0, steps=12)
    # increments all equal d1, so every stepwise check passes with lam = 1,
    # but the product never vanishes: no Cauchy conclusion
    assert trace.all_checks_passed
    assert not trace.certified
    assert trace.status == "bounded"
    assert trace.metadata["product_vanishes"] is False


def test_contraction_ratio_family_certifies_despite_lambda_to_one():
    steps = 40
    lam = PositiveSequence.tabulated(
        [1.0] + [k / (k + 1.0) for k in range(1, steps)])
    x0 = poly([1.0], cap=4)
    trace = relative_contraction(lambda n, x: x.scale((n + 1.0) / (n + 2.0)),
                                 lam, x0, steps=steps)
    assert trace.certified
    assert trace.status == "converged"
    # product bound at row n is d1 / (n+1); measured d is |x0|/((n+1)(n+2))
    d1 = trace.steps[0].increment_norm
    rec = trace.steps[5]
    assert rec.bound == pytest.approx(d1 / 6.0, rel=1e-12)
    assert rec.increment_norm == pytest.approx(1.0 / 42.0, rel=1e-12)
    assert trace.metadata["product_final"] == pytest.approx(1.0 / steps,
                                                            rel=1e-12)


def test_contraction_refuses_lambda_above_one():
    lam = PositiveSequence.tabulated([1.0, 0.9, 1.2, 0.9, 0.9])
    x0 = poly([1.0], cap=4)
    trace = relative_contraction(lambda n, x: x.scale(0.5), lam, x0, steps=5)
    assert not trace.certified
    assert any("exceeds 1" in msg for msg in trace.failures)
    assert len(trace.steps) == 5          # the run itself still happens


def test_contraction_refuses_non_restriction_equivariant_map():
    def T(n, x):
        bump = TruncatedSeries.monomial(0, x.ref_radius, cap=x.cap,
                                        ref_radius=x.ref_radius)
        return x.scale(0.5) + bump

    x0 = poly([0.0, 1.0], cap=8)
    trace = relative_contraction(T, PositiveSequence.constant(0.5), x0,
                                 steps=5)
    assert not trace.certified
    assert any("commute" in msg for msg in trace.failures)


# ---- majorized iteration ----

def test_majorized_square_iteration_converges():
    x0 = poly([0.0, 0.5, 0.4], cap=16)
    trace = majorized_iteration(lambda x: x.multiply(x).scale(0.5),
                                lambda y: 0.5 * y * y, x0, 0.95, steps=12)
    assert trace.certified
    assert trace.status == "converged"
    for rec in trace.steps:
        assert rec.value_norm <= rec.bound * (1 + 1e-12)


def test_majorized_zero_start_stays_zero():
    x0 = TruncatedSeries.zero(1, 8, 1.0)
    trace = majorized_iteration(lambda x: x.multiply(x).scale(0.5),
                                lambda y: 0.5 * y * y, x0, 0.0, steps=6)
    assert trace.certified
    assert all(rec.value_norm == 0.0 for rec in trace.steps)


def test_majorized_fixed_point_gives_bounded_only():
    x0 = poly([0.0, 1.0], cap=16)
    trace = majorized_iteration(
        lambda x: (x.multiply(x) + x).scale(0.5),
        lambda y: 0.5 * (y * y + y), x0, 1.0, steps=10)
    assert trace.status == "bounded-only"
    assert trace.certified            # majorization held; only the limit claim is withheld
    assert trace.steps[-1].bound == pytest.approx(1.0)


def test_majorized_violation_reports_index():
    x0 = poly([0.9], cap=4)
    trace = majorized_iteration(lambda x: x.scale(1.2),
                                lambda y: 0.5 * y, x0, 1.0, steps=6)
    assert not trace.certified
    assert any("violated at n=" in msg for msg in trace.failures)


# ---- classical Newton ----

def test_newton_square_root_of_two():
    trace = newton(lambda x: x * x, lambda x: 1.0 / (2.0 * x), 1.5, 2.0,
                   m=1.0 / 2.6, M=2.0, steps=10)
    assert trace.certified
    assert trace.status == "converged"
    # classical double-precision orbit from 1.5
    assert trace.steps[1].value_norm == pytest.approx(1.4142156862745099,
                                                      abs=5e-16)
    assert trace.steps[2].value_norm == pytest.approx(1.4142135623746899,
                                                      abs=5e-16)
    assert len(trace.steps) <= 5
    assert abs(trace.metadata["final"] - math.sqrt(2.0)) < 1e-12
    C = trace.metadata["C"]
    for rec in trace.steps:
        if rec.extra.get("ratio") is not None:
            assert rec.extra["ratio"] <= C + 1e-9


def test_newton_linear_is_one_step():
    trace = newton(lambda x: x, lambda x: 1.0, 0.0, 0.3, m=1.0, M=1.0,
                   steps=5)
    assert trace.metadata["final"] == 0.3
    assert trace.status == "converged"
    assert len(trace.steps) == 2          # the second step measures delta = 0


def test_newton_singular_inverse_raises_with_step():
    with pytest.raises(IterationError, match="step 0"):
        newton(lambda x: x * x, lambda x: 1.0 / (2.0 * x), 0.0, 1.0,
               m=1.0, M=2.0, steps=3)


def test_newton_quadratic_map_ratios():
    m = 1.0 / (1.0 - 2.0 * 0.25)
    trace = newton(lambda x: x + x * x, lambda x: 1.0 / (1.0 + 2.0 * x),
                   0.0, 0.1, m=m, M=2.0, steps=10)
    assert trace.certified
    C = 0.5 * m * 2.0
    for rec in trace.steps:
        if rec.extra.get("ratio") is not None:
            assert rec.extra["ratio"] <= C + 1e-9
    root = trace.metadata["final"]
    assert root + root * root == pytest.approx(0.1, abs=1e-14)


def test_newton_randomized_cubics_respect_ratio_bound():
    rng = np.random.default_rng(7)
    r = 0.2
    for _ in range(30):
        c2, c3 = rng.uniform(-0.4, 0.4, size=2)
        target = rng.uniform(-0.05, 0.05)

        def f(x, c2=c2, c3=c3):
            return x + c2 * x * x + c3 * x ** 3

        def dfinv(x, c2=c2, c3=c3):
            return 1.0 / (1.0 + 2.0 * c2 * x + 3.0 * c3 * x * x)

        # rigorous bounds on |x| <= r
        m = 1.0 / (1.0 - 2.0 * abs(c2) * r - 3.0 * abs(c3) * r * r)
        M = 2.0 * abs(c2) + 6.0 * abs(c3) * r
        if M == 0.0:
            M = 1e-6
        trace = newton(f, dfinv, 0.0, f(target), m=m, M=M, steps=12)
        C = 0.5 * m * M
        for rec in trace.steps:
            assert rec.value_norm <= r
            if rec.extra.get("ratio") is not None:
                assert rec.extra["ratio"] <= C + 1e-9


# ---- Nash-Moser on falling radii ----

def nm_problem(cap=64):
    def f(u):
        return u + u.multiply(u)

    def j(u):
        one = TruncatedSeries.monomial(0, 1.0, cap=u.cap,
                                       ref_radius=u.ref_radius)
        return multiplication_operator((one + u.scale(2.0)).reciprocal())

    return f, j


def nm_oracle(y, iters=100):
    """Fixed point of u = y - u^2 by direct iteration."""
    u = TruncatedSeries.zero(1, y.cap, y.ref_radius)
    for _ in range(iters):
        u = y - u.multiply(u)
    return u


def test_quadratic_model_constants():
    sched = RadiusSchedule.proof_normalized(0.5, 1.5)
    M, alpha, model = quadratic_model((1, 0, 1, 0), sched, 1.0, 1.0)
    assert alpha == 2
    # D = 1/2, so (2/D)^2 = 16 and the s_inf prefactor is 1/0.5
    assert M == pytest.approx(4.0 * 16.0 / 0.5, rel=1e-12)
    assert model.value(0) == pytest.approx(M, rel=1e-12)
    assert model.value(1) == pytest.approx(M * 4.0, rel=1e-12)
    M0, alpha0, model0 = quadratic_model((0, 0, 0, 0), sched, 2.0, 1.0)
    assert alpha0 == 0 and M0 == pytest.approx(8.0)
    assert model0.value(7) == pytest.approx(8.0)


def test_nash_moser_demo_certified_run():
    f, j = nm_problem()
    sched = RadiusSchedule.geometric(0.5, 1.0, 0.5)
    y = poly([0.0, 0.01], cap=64)
    x0 = TruncatedSeries.zero(1, 64, 1.0)
    trace = nash_moser(f, j, (0, 0, 0, 0), sched, x0, y, steps=8,
                       j_const=2.0, d2f_const=1.0)
    assert trace.certified
    assert trace.status == "converged"
    assert trace.metadata["steps_used"] <= 6
    assert trace.metadata["residual_at_limit"] <= 1e-10
    assert trace.metadata["alpha"] == 0
    assert 0.124 < trace.metadata["bruno_gate"] <= 0.125

    # independent oracle: the fixed point of u = y - u^2
    oracle = nm_oracle(y)
    x = TruncatedSeries.from_json_dict(trace.metadata["x_final"])
    assert np.max(np.abs(x.coeffs - oracle.coeffs)) < 1e-12


def test_nash_moser_trace_satisfies_quadratic_model():
    f, j = nm_problem()
    sched = RadiusSchedule.geometric(0.5, 1.0, 0.5)
    y = poly([0.0, 0.01], cap=64)
    x0 = TruncatedSeries.zero(1, 64, 1.0)
    trace = nash_moser(f, j, (0, 0, 0, 0), sched, x0, y, steps=8,
                       j_const=2.0, d2f_const=1.0)
    deltas = [rec.increment_norm for rec in trace.steps]
    consts = [rec.sigma for rec in trace.steps]
    # stepwise quadratic estimate, recomputed from the trace
    for i in range(1, len(deltas)):
        assert deltas[i] <= consts[i] * deltas[i - 1] ** 2 * (1 + 1e-9)
    # closed-form envelope (prod a_k^(1/2^k) * d1)^(2^n)
    log_env = math.log(deltas[0])
    for i in range(1, len(deltas)):
        log_env += math.log(consts[i]) / 2.0 ** i
        env = math.exp(2.0 ** i * log_env)
        assert deltas[i] <= env * (1 + 1e-9)
        assert trace.steps[i].extra["envelope"] == pytest.approx(env,
                                                                 rel=1e-12)


def test_nash_moser_zero_target_stays_zero():
    f, j = nm_problem(cap=16)
    sched = RadiusSchedule.geometric(0.5, 1.0, 0.5)
    y = TruncatedSeries.zero(1, 16, 1.0)
    x0 = TruncatedSeries.zero(1, 16, 1.0)
    trace = nash_moser(f, j, (0, 0, 0, 0), sched, x0, y, steps=8,
                       j_const=2.0, d2f_const=1.0)
    assert trace.certified
    assert trace.status == "converged"
    assert trace.metadata["residual_at_limit"] == 0.0
    x = TruncatedSeries.from_json_dict(trace.metadata["x_final"])
    assert x.is_zero


def test_nash_moser_oversized_data_is_uncertified():
    f, j = nm_problem()
    sched = RadiusSchedule.geometric(0.5, 1.0, 0.5)
    y = poly([0.0, 0.2], cap=64)
    x0 = TruncatedSeries.zero(1, 64, 1.0)
    trace = nash_moser(f, j, (0, 0, 0, 0), sched, x0, y, steps=8,
                       j_const=2.0, d2f_const=1.0)
    assert not trace.certified
    assert trace.status == "uncertified"
    assert any("Bruno gate" in msg for msg in trace.failures)
    assert len(trace.steps) > 1           # the run itself continues


def test_nash_moser_requires_geometric_schedule():
    f, j = nm_problem(cap=16)
    sched = RadiusSchedule.rho_driven(PositiveSequence.constant(0.25), 1.0)
    y = TruncatedSeries.zero(1, 16, 1.0)
    with pytest.raises(IterationError, match="geometric"):
        nash_moser(f, j, (0, 0, 0, 0), sched, y, y, steps=4,
                   j_const=2.0, d2f_const=1.0)


def test_nash_moser_rejects_undersized_radius():
    f, j = nm_problem(cap=16)
    sched = RadiusSchedule.geometric(0.5, 1.0, 0.5)
    x0 = TruncatedSeries.zero(1, 16, 0.8)
    y = TruncatedSeries.zero(1, 16, 1.0)
    with pytest.raises(IterationError, match="radius"):
        nash_moser(f, j, (0, 0, 0, 0), sched, x0, y, steps=4,
                   j_const=2.0, d2f_const=1.0)


def test_nash_moser_locality_violation_names_step():
    f, _ = nm_problem()

    def j_bad(u):
        h = TruncatedSeries.monomial(0, 1.0, cap=u.cap, ref_radius=0.3)
        return multiplication_operator(h)

    sched = RadiusSchedule.geometric(0.5, 1.0, 0.5)
    y = poly([0.0, 0.01], cap=64)
    x0 = TruncatedSeries.zero(1, 64, 1.0)
    with pytest.raises(IterationError, match="step 0"):
        nash_moser(f, j_bad, (0, 0, 0, 0), sched, x0, y, steps=4,
                   j_const=2.0, d2f_const=1.0)


def test_nash_moser_trace_is_deterministic():
    f, j = nm_problem()
    sched = RadiusSchedule.geometric(0.5, 1.0, 0.5)
    y = poly([0.0, 0.01], cap=64)
    x0 = TruncatedSeries.zero(1, 64, 1.0)
    run = lambda: nash_moser(f, j, (0, 0, 0, 0), sched, x0, y, steps=8,
                             j_const=2.0, d2f_const=1.0).to_json()
    assert run() == run()
