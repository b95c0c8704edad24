import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from effwell.errors import DomainError
from effwell.jost import (SolverConfig, WaveNumber, batch_eval_m, dump_binary, eval_f, eval_m, load_binary,
                          solve_jost, solve_jost_batch, solve_jost_pair, wronskian)
from effwell.potential import builtin

import oracles

SOLITON = builtin("soliton").realize(1.0)
SQUARE = builtin("square_well").realize(1.0)
BUMP = builtin("bump_cosine").realize(0.1)
ZERO = builtin("zero").realize(1.0)


def test_free_solution_is_plane_wave():
    J = solve_jost(ZERO, 2.0)
    assert np.allclose(J.m_values, 1.0)
    f, df = eval_f(J, 0.25)
    assert f == pytest.approx(np.exp(0.5j), abs=1e-14)
    assert df == pytest.approx(2j * np.exp(0.5j), abs=1e-14)


def test_boundary_condition_at_L():
    for side in ("plus", "minus"):
        J = solve_jost(BUMP, 0.7 + 0.1j, side)
        i = -1 if side == "plus" else 0
        assert J.m_values[i] == 1 and J.m_derivs[i] == 0
    J = solve_jost(BUMP, 1.3)
    L = J.L
    f, df = eval_f(J, L)
    assert f == pytest.approx(np.exp(1.3j * L), abs=1e-15)
    assert df == pytest.approx(1.3j * np.exp(1.3j * L), abs=1e-14)


def test_soliton_closed_form():
    fp, fm = solve_jost_pair(SOLITON, 1.0, SolverConfig(L=20))
    x = np.linspace(-6, 6, 25)
    assert np.max(np.abs(eval_f(fp, x)[0] - oracles.soliton_f_plus(x, 1.0))) <= 1e-9
    f0 = eval_f(fp, 0.0)[0]
    assert f0 == pytest.approx(1 - 1j / (1 + 1j), abs=1e-9)
    assert wronskian(fp, fm) == pytest.approx(-2.0, abs=1e-9)


def test_square_well_transfer_matrix():
    J = solve_jost(SQUARE, 1.0)
    x = np.linspace(-2.5, 2.5, 41)
    assert np.max(np.abs(eval_f(J, x)[0] - oracles.square_well_f_plus(x, 1.0))) <= 1e-8


def test_free_wronskian():
    for k in (0.3, 2.0, 1 + 0.5j):
        fp, fm = solve_jost_pair(ZERO, k)
        assert wronskian(fp, fm) == pytest.approx(-2j * k, abs=1e-12)


def test_wronskian_real_on_imaginary_axis():
    for V in (SOLITON, SQUARE, BUMP):
        for s in (0.05, 0.4, 0.9):
            fp, fm = solve_jost_pair(V, 1j * s)
            W = wronskian(fp, fm)
            assert abs(W.imag) <= 1e-9 * abs(W)


def test_strip_and_h_max_checks():
    with pytest.raises(DomainError):
        solve_jost(SOLITON, -1.5j)
    with pytest.raises(DomainError):
        WaveNumber(3j, strip_bound=1.0)
    with pytest.raises(ValueError):
        solve_jost(BUMP, 1.0, cfg=SolverConfig(h_max=0.1))
    with pytest.raises(DomainError):
        solve_jost(BUMP, 1.0, cfg=SolverConfig(L=0.5))


def test_binary_round_trip(tmp_path):
    J = solve_jost(BUMP, 0.4 + 0.2j, "minus")
    p = tmp_path / "j.bin"
    dump_binary(J, p)
    d = load_binary(p)
    assert d["side"] == "minus" and d["k"] == J.k.value
    assert np.array_equal(d["grid"], J.grid)
    assert np.array_equal(d["m"], J.m_values) and np.array_equal(d["m_derivs"], J.m_derivs)


def test_batch_eval_matches_single_eval():
    ks = [0.3, 1.1, 2.5]
    batch = solve_jost_batch(BUMP, ks)
    x = np.linspace(-1.5, 1.5, 301)
    for side in ("plus", "minus"):
        M, P = batch_eval_m(batch, side, x, extend=True)
        for i in range(len(ks)):
            J = (batch.plus if side == "plus" else batch.minus)[i]
            m, p = eval_m(J, x)
            assert np.max(np.abs(M[i] - m)) <= 1e-8
            assert np.max(np.abs(P[i] - p)) <= 1e-7 * (1 + ks[i])


def test_eval_outside_grid():
    J = solve_jost(SOLITON, 1.0)
    with pytest.raises(DomainError):
        eval_m(J, J.L + 1)
    K = solve_jost(SQUARE, 1.0)
    f, _ = eval_f(K, K.L + 3.0, extend=True)
    assert f == pytest.approx(np.exp(1j * (K.L + 3.0)), abs=1e-13)


def test_wronskian_drift_recorded():
    fp, fm = solve_jost_pair(BUMP, 0.8)
    wronskian(fp, fm)
    assert fp.diagnostics.wronskian_drift <= 100 * fp.diagnostics.rtol * (1 + 0.8)


def test_ode_residual_on_smooth_subinterval():
    J = solve_jost(SOLITON, 1.5 + 0.2j)
    h = 1e-3
    x = np.linspace(-3, 3, 13)
    f = lambda z: eval_f(J, z)[0]
    d2 = (f(x + h) - 2 * f(x) + f(x - h)) / h ** 2
    rhs = (SOLITON(x) - J.k.value ** 2) * f(x)
    assert np.max(np.abs(d2 - rhs) / np.abs(rhs)) <= 1e-5


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 4.0), st.floats(-0.4, 1.0), st.floats(-2.0, 2.0), st.sampled_from(["soliton", "square", "bump"]))
def test_reality_symmetry(kr, ki, x, name):
    V = {"soliton": SOLITON, "square": SQUARE, "bump": BUMP}[name]
    k = complex(kr, ki)
    a = solve_jost(V, k)
    b = solve_jost(V, -k.conjugate())
    fa, fb = eval_f(a, x)[0], eval_f(b, x)[0]
    assert abs(fb - fa.conjugate()) <= 1e-8 * max(1.0, abs(fa))


def test_growth_bound():
    alpha = 0.5
    ks = [complex(kr, ki) for kr in (0.2, 1.0, 3.0) for ki in (-0.45, 0.0, 0.45)]
    x = np.linspace(-8, 8, 161)
    vals = []
    for k in ks:
        J = solve_jost(SOLITON, k)
        m, _ = eval_m(J, x)
        vals.append(np.abs(m) / ((1 + np.abs(x)) * np.exp(alpha * np.abs(x))))
    vals = np.array(vals)
    C = np.median(vals.max(axis=1))
    assert vals.max() <= 2 * C
