import json
import math

import numpy as np
import pytest

from effwell.errors import AmbiguityError, BracketError, PreconditionError
from effwell.potential import builtin, integral_lambda_eff
from effwell.potential import LambdaProfile
from effwell.spectrum import (fd_eigenvalues, fd_spectrum, find_pole, find_pole_near, predicted_eigenvalue,
                              predicted_pole, report_json, soliton_predicted_eigenvalue, tanh2_weight,
                              universal_limit_params)

import oracles

SOLITON_P = builtin("soliton")
SOLITON = SOLITON_P.realize(1.0)
SQUARE = builtin("square_well").realize(1.0)
BUMP_P = builtin("bump_cosine")


def test_soliton_pole():
    p = find_pole(SOLITON, (0.3, 3.0))
    assert p.s == pytest.approx(1.0, abs=1e-10)
    assert p.energy == pytest.approx(-1.0, abs=1e-9)
    assert find_pole_near(SOLITON, 0.6).s == pytest.approx(1.0, abs=1e-10)


def test_square_well_eigenvalue():
    p = find_pole(SQUARE, (0.2, 0.99))
    assert p.energy == pytest.approx(oracles.square_well_even_energy(), abs=1e-10)
    assert p.imag_ratio <= 1e-8


def test_no_pole_and_ambiguity():
    with pytest.raises(BracketError):
        find_pole(builtin("zero").realize(1.0), (0.1, 2.0))
    deep = builtin("square_well", depth=30.0).realize(1.0)
    with pytest.raises(AmbiguityError) as info:
        find_pole(deep, (0.1, 5.4), n_scan=60)
    assert len(info.value.sub_brackets) >= 2
    with pytest.raises(ValueError):
        find_pole(SOLITON, (1.0, 0.5))


def test_fd_soliton():
    E = fd_eigenvalues(SOLITON, 20.0, 8000)
    assert len(E) == 1 and E[0] == pytest.approx(-1.0, abs=1e-6)


def test_fd_square_well():
    sp = fd_spectrum(SQUARE, 15.0, 6000)
    assert sp.resolved
    # the Richardson step does not help across the jump; the raw error is O(h)
    assert sp.eigenvalues[0] == pytest.approx(oracles.square_well_even_energy(), abs=2e-3)


def test_fd_preconditions():
    with pytest.raises(PreconditionError):
        fd_eigenvalues(SOLITON, 20.0, 500)
    with pytest.raises(PreconditionError):
        fd_eigenvalues(BUMP_P.realize(0.05), 20.0, 4000)


def test_predictions():
    I = integral_lambda_eff(BUMP_P)
    p = predicted_pole(BUMP_P, 0.1)
    assert p.pole_s == pytest.approx(0.005 * I)
    assert predicted_eigenvalue(BUMP_P, 0.1).energy == pytest.approx(-(1e-4 / 4) * I ** 2)
    z = predicted_pole(builtin("zero"), 0.1)
    assert z.empty and z.energy == 0.0


def test_tanh2_weight():
    P = builtin("soliton", micro="bump_cosine")
    lam = LambdaProfile(P.modes)
    w = oracles.adaptive_simpson(lambda y: np.tanh(y) ** 2 * lam(y), -1.0, 1.0, 1e-12)
    assert tanh2_weight(P, 1.0, 0.0) == pytest.approx(w, rel=1e-8)
    assert soliton_predicted_eigenvalue(P, 0.1).energy == pytest.approx(-(0.01 * w / 2) ** 2, rel=1e-8)


def test_universal_limit_params():
    lam = LambdaProfile(BUMP_P.modes)
    I = integral_lambda_eff(BUMP_P)
    kz = universal_limit_params(builtin("zero"), lam)
    assert kz == pytest.approx(0.5j * I, rel=1e-6)
    ks = universal_limit_params(SOLITON_P, lam)
    assert abs(ks.real) <= 1e-6 and ks.imag == pytest.approx(0.0612, abs=5e-4)
    with pytest.raises(PreconditionError):
        universal_limit_params(builtin("square_well"), lam)


def test_report_json(tmp_path):
    p = find_pole(SOLITON, (0.3, 3.0))
    path = tmp_path / "r.json"
    report_json(path, [{"pole": p, "prediction": predicted_pole(BUMP_P, 0.1), "x": np.float64(2.0)}])
    d = json.load(open(path))
    assert d["schema_version"] == 1
    assert d["entries"][0]["pole"]["s"] == pytest.approx(1.0)
    assert d["entries"][0]["x"] == 2.0
