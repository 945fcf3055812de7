"""Tests for the worked problems: quadratic, finitely determined, circle."""

import math

import numpy as np
import pytest

from banachscale.demos import (GOLDEN_C, GOLDEN_MEAN, circle, circle_problem,
                               mather, mather_problem, morse, morse_problem)
from banachscale.lie import LieError, lie_step, LieState, rho_schedule
from banachscale.sequences import PositiveSequence
from banachscale.series import TruncatedSeries

STRICT_B = PositiveSequence.exp_power(-1, 1.5)


def monomial(deg, coeff, ref=1.0):
    return TruncatedSeries.monomial(deg, coeff, cap=64, ref_radius=ref)


# ---- quadratic base point ----

def test_morse_default_run_is_certified():
    rep = morse()
    assert rep.converged
    assert rep.residual <= 1e-8
    assert rep.certificate.verdict == "certified"
    assert rep.certificate.first_failure is None
    assert rep.details["conjugacy_defect"] <= 1e-8


def test_morse_orders_double():
    rep = morse()
    orders = rep.details["orders"]
    assert len(orders) >= 5
    # Ord(r_n) >= 2 + 2^n, reached with equality for a cubic seed
    for n, o in enumerate(orders[:5]):
        assert o >= 2 + 2 ** n
    for a, b in zip(orders, orders[1:]):
        assert b == 2 * (a - 1)


def test_morse_zero_perturbation_is_identity():
    rep = morse(eps=0.0)
    assert rep.converged
    assert rep.residual == 0.0
    assert rep.details["conjugacy_defect"] == 0.0
    assert all(rec.value_norm == 0.0 for rec in rep.trace.steps)


def test_morse_mixed_seed_same_guarantees():
    r0 = monomial(3, 1e-3) + monomial(4, 1e-3)
    rep = morse(r0=r0)
    assert rep.converged
    assert rep.residual <= 1e-8
    assert rep.certificate.verdict == "certified"
    for n, o in enumerate(rep.details["orders"][:5]):
        assert o >= 2 + 2 ** n


def test_morse_refuses_oversized_seed():
    with pytest.raises(LieError, match="threshold"):
        morse(eps=1.0)


def test_morse_seed_must_cover_radius():
    with pytest.raises(LieError, match="radius"):
        morse(r0=monomial(3, 1e-3, ref=0.5), t=1.0)


# ---- finitely determined base point ----

def test_mather_default_run_is_certified():
    rep = mather()
    assert rep.converged
    assert rep.residual <= 1e-8
    assert rep.certificate.verdict == "certified"
    assert rep.details["membership_thresholds"] == [5, 7, 11, 19, 35]


def test_mather_membership_is_exact():
    """Coefficients below each stage's threshold stay at the noise
    floor of the seed scale, checked on the raw step states."""
    f = monomial(3, 1.0)
    r0 = monomial(7, 1e-4, ref=0.8)
    problem = mather_problem(f)
    schedule = rho_schedule(problem, STRICT_B, 0.8)
    state = LieState(0, 0.8, f.restrict(0.8), r0)
    floor = 1e-12 * np.max(np.abs(r0.coeffs))
    for n in range(3):
        state, _ = lie_step(state, problem, schedule.radii)
        threshold = min(3 + 2 ** (state.n + 1), 65)
        low = np.abs(state.r.coeffs[:threshold])
        assert np.all(low <= floor)


def test_mather_zero_perturbation_is_identity():
    rep = mather(r0=TruncatedSeries(1, 64, 1.0, "taylor"))
    assert rep.converged
    assert rep.residual == 0.0


def test_mather_dense_base_point():
    f = monomial(3, 1.0) + monomial(5, 1.0)
    rep = mather(f=f, r0=monomial(9, 1e-4))
    assert rep.converged
    assert rep.residual <= 1e-8
    assert rep.certificate.verdict == "certified"


def test_mather_rejects_vanishing_derivative():
    flat = TruncatedSeries(1, 64, 1.0, "taylor")
    flat.coeffs[0] = 2.0
    with pytest.raises(LieError):
        mather(f=flat)
    with pytest.raises(LieError):
        mather_problem(monomial(1, 1.0))


def test_mather_rejects_shallow_seed():
    with pytest.raises(LieError, match="not in M"):
        mather(r0=monomial(3, 1e-4))


# ---- circle rotations ----

def test_circle_default_run():
    rep = circle()
    assert rep.converged
    assert rep.residual <= 1e-8
    radii = [rec.radius for rec in rep.trace.steps]
    assert radii[0] == 0.5 and radii[-1] > 0.2
    norms = [rec.value_norm for rec in rep.trace.steps]
    for a, b in zip(norms, norms[1:]):
        if a > 0.0:
            assert b <= 0.5 * a
    assert all(rec.checks_passed for rec in rep.trace.steps)


def test_circle_zero_perturbation_is_identity():
    rep = circle(f=TruncatedSeries(1, 64, 0.5, "fourier"))
    assert rep.converged
    assert rep.residual == 0.0
    assert rep.details["lambda_correction"] == 0.0


def test_circle_single_mode_one_step():
    eps = 1e-3
    f = TruncatedSeries.fourier_mode(1, eps, cap=64, strip=0.5)
    rep = circle(f=f, steps=1)
    sigma = math.sqrt(2.0 * math.pi * GOLDEN_MEAN) / math.e
    envelope = 2.0 * (eps * math.exp(0.5) / sigma) ** 2
    assert rep.trace.steps[1].value_norm <= envelope
    assert rep.details["one_step_envelope"] == pytest.approx(envelope)
    # the homological solve is v_1 = eps / (i omega)
    v1 = rep.details["divisor_log"][0]["divisor_field_coeff"]
    assert v1 == pytest.approx(eps / GOLDEN_MEAN, rel=1e-12)


def test_circle_lambda_correction_is_second_order():
    """The frequency shift for eps * 2 cos x is -eps^2/(2 pi omega) to
    leading order: the mean of -m^2 tau / 2 with m = r / (2 pi omega)."""
    eps = 1e-3
    rep = circle(eps=eps)
    predicted = -eps ** 2 / (2.0 * math.pi * GOLDEN_MEAN)
    assert rep.details["lambda_correction"] == pytest.approx(predicted,
                                                             rel=1e-4)


def test_circle_rational_frequency_names_offending_mode():
    with pytest.raises(LieError, match="k = 4"):
        circle(omega=0.75)


def test_circle_rejects_nonzero_mean():
    f = TruncatedSeries.fourier_mode(0, 1e-3, cap=64, strip=0.5)
    with pytest.raises(LieError, match="zero mean"):
        circle(f=f)


def test_circle_golden_constants_hold_on_window():
    """dist(k omega, Z) >= C / k for the golden mean across every mode
    the 8-step run can touch, with equality only at k = 1."""
    for k in range(1, 257):
        dist = abs(k * GOLDEN_MEAN - round(k * GOLDEN_MEAN))
        assert dist * k >= GOLDEN_C * (1.0 - 1e-9)


def test_circle_problem_declares_divisor_envelope():
    problem = circle_problem()
    # |j_n| = 2^n / (4 C): one doubling per stage
    assert problem.j_norms.value(0) == pytest.approx(1.0 / (4.0 * GOLDEN_C))
    assert problem.j_norms.value(3) == pytest.approx(8.0 / (4.0 * GOLDEN_C))
