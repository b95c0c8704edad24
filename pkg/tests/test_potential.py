import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from effwell.errors import ConstructionError, PotentialEvaluationError
from effwell.potential import (Bump, Combination, Gaussian, LambdaProfile, Mode, SechWell, TwoScalePotential,
                               Zero, builtin, check_hypotheses, cosine_modes, eval_total, integral_lambda_eff,
                               lambda_eff, mode_sum, profile_from_dict, sigma_eff_as_potential)

import oracles


def test_zero_potential_evaluates_to_zero():
    P = builtin("zero")
    x = np.linspace(-3, 3, 11)
    assert np.all(eval_total(P, 0.1, x) == 0)
    assert np.all(lambda_eff(P, x) == 0)
    assert integral_lambda_eff(P) == 0.0


def test_bump_cosine_values():
    P = builtin("bump_cosine", A=10)
    assert eval_total(P, 0.1, 0.0) == pytest.approx(10.0, abs=1e-12)
    x = 0.1 / 4
    assert abs(eval_total(P, 0.1, x)) <= 1e-3
    ref = 10 * oracles.bump(np.array([0.5]))[0] * math.cos(2 * math.pi * 0.5 / 0.05)
    assert eval_total(P, 0.05, 0.5) == pytest.approx(ref, abs=1e-12)
    assert P.realize(0.05)(0.5) == pytest.approx(ref, abs=1e-12)


def test_lambda_eff_single_cosine_pair():
    P = builtin("bump_cosine")
    x = np.linspace(-1.2, 1.2, 49)
    assert np.allclose(lambda_eff(P, x), oracles.bump_cosine_lambda(x), rtol=1e-13, atol=1e-16)


def test_lambda_eff_two_incommensurate_cosines():
    Q1, Q2 = Bump(2.0), Gaussian(3.0, 0.0, 0.7)
    modes = cosine_modes(Q1, 1.0, 1) + cosine_modes(Q2, math.sqrt(2), 2)
    P = TwoScalePotential.build(Zero(), modes)
    x = np.linspace(-0.9, 0.9, 13)
    ref = (Q1(x) ** 2 + Q2(x) ** 2 / 2) / (8 * math.pi ** 2)
    assert np.allclose(lambda_eff(P, x), ref, rtol=1e-13)


def test_integral_lambda_matches_simpson_fixture():
    assert integral_lambda_eff(builtin("bump_cosine")) == pytest.approx(oracles.INTEGRAL_LAMBDA_BUMP, abs=1e-9)
    assert oracles.adaptive_simpson(oracles.bump_cosine_lambda, -1, 1, 1e-12) == pytest.approx(
        oracles.INTEGRAL_LAMBDA_BUMP, abs=1e-12)


def test_double_bump_shares_integral():
    a = integral_lambda_eff(builtin("bump_cosine"))
    b = integral_lambda_eff(builtin("double_bump"))
    assert b == pytest.approx(a, rel=1e-9)


def test_sigma_eff_potential():
    P = builtin("bump_cosine")
    S = sigma_eff_as_potential(P, 0.1)
    x = np.linspace(-1, 1, 21)
    assert np.allclose(S.q_av(x), -0.01 * oracles.bump_cosine_lambda(x), atol=1e-15)
    assert not S.modes
    Z = sigma_eff_as_potential(builtin("zero"), 0.1)
    assert np.all(Z.q_av(x) == 0)


def test_sigma_eff_soliton_plus_microstructure():
    P = builtin("soliton", rho=1.0, micro="bump_cosine")
    S = sigma_eff_as_potential(P, 0.1)
    x = np.linspace(-2, 2, 17)
    ref = -2 / np.cosh(x) ** 2 - 0.01 * oracles.bump_cosine_lambda(x)
    assert np.allclose(S.q_av(x), ref, atol=1e-14)


def test_builtin_soliton_and_errors():
    P = builtin("soliton", rho=1.0, x0=0.0)
    assert P.q_av(0.0) == pytest.approx(-2.0)
    with pytest.raises(ConstructionError):
        builtin("nope")
    with pytest.raises(ConstructionError):
        builtin("bump_cosine", bogus=1)


def test_sech_support_radius():
    s = SechWell(1.0, 0.0)
    R = s.support_radius
    assert 15 < R < 20
    assert abs(s(R)) <= 1e-13


def test_hypotheses_report():
    z = check_hypotheses(builtin("zero"))
    assert z.exp_norm == 0 and z.alg_norm == 0 and z.theta_ok and z.reality_ok
    b = check_hypotheses(builtin("bump_cosine"))
    assert math.isfinite(b.exp_norm) and b.exp_norm > 0 and b.reality_ok
    bad = TwoScalePotential.build(Zero(), (Mode(1, 1.0, 1.0 + 0j, Bump(1.0)), Mode(-1, -1.0, 2.0 + 0j, Bump(1.0))))
    assert not check_hypotheses(bad).reality_ok


def test_unpaired_modes_raise_on_evaluation():
    bad = TwoScalePotential.build(Zero(), (Mode(1, 1.0, 1.0 + 0j, Bump(1.0)),))
    with pytest.raises(PotentialEvaluationError):
        eval_total(bad, 0.1, 0.33)


def test_round_trip_dict():
    for P in (builtin("bump_cosine"), builtin("soliton", micro="double_bump"), builtin("square_well")):
        Q = TwoScalePotential.from_dict(P.to_dict())
        x = np.linspace(-2, 2, 41)
        assert np.allclose(Q.realize(0.1)(x), P.realize(0.1)(x), atol=0)


def test_profile_from_dict_unknown():
    with pytest.raises(ConstructionError):
        profile_from_dict({"name": "teapot"})


@settings(max_examples=40, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(0.01, 0.5))
def test_reality_of_mode_sum(x, eps):
    P = builtin("bump_cosine")
    z = complex(mode_sum(P, x, x / eps))
    bound = 1e-12 * (1 + sum(abs(complex(m.q(x))) for m in P.modes))
    assert abs(z.imag) <= bound


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.95, 0.95))
def test_mean_zero_over_fast_period(x):
    P = builtin("bump_cosine")
    y = np.arange(256) / 256
    assert abs(np.mean(mode_sum(P, x, y))) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(0.1, 5.0))
def test_lambda_phase_invariance_and_scaling(phase, c):
    base = cosine_modes(Bump(3.0), 1.0)
    x = np.linspace(-0.9, 0.9, 20)
    lam = LambdaProfile(base)(x)
    u = complex(math.cos(phase), math.sin(phase))
    rot = tuple(Mode(m.j, m.lam, m.coeff * (u if m.j > 0 else u.conjugate()), m.profile) for m in base)
    assert np.max(np.abs(LambdaProfile(rot)(x) - lam)) <= 1e-14 * max(1.0, lam.max())
    scaled = tuple(Mode(m.j, m.lam, m.coeff * c, m.profile) for m in base)
    assert np.allclose(LambdaProfile(scaled)(x), c * c * lam, rtol=1e-12)
    assert np.all(lam >= 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.02, 0.5))
def test_sigma_eff_is_a_well(x, eps):
    P = builtin("bump_cosine")
    S = sigma_eff_as_potential(P, eps)
    assert S.q_av(x) <= 0
