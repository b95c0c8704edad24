"""Acceptance suite: nine criteria at their stated tolerances.

Each test appends one "criterion N: PASS|FAIL ..." line to the session log
(printed in the terminal summary) and then asserts the criterion, so a
failing criterion shows up both as a failed test and in the summary.
"""
import math
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from effwell.cli import convergence_gap, fit_slope
from effwell.jost import SolverConfig
from effwell.potential import builtin, integral_lambda_eff, sigma_eff_as_potential
from effwell.scattering import scaled_transmission, transmission_sweep
from effwell.spectrum import (fd_spectrum, find_pole, find_pole_near, predicted_eigenvalue,
                              soliton_predicted_eigenvalue)
from effwell.timedecay import (CNConfig, decay_metrics, evolve_crank_nicolson, evolve_distorted, fit_crossover,
                               gaussian, prepare_state, run_length)

import oracles

pytestmark = pytest.mark.acceptance


def report(log, n, ok, detail, t0):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}  [{time.perf_counter() - t0:.1f} s]"
    log.append(line)
    print(line)
    assert ok, line


def test_criterion_1_reflectionless_soliton(acceptance_log):
    t0 = time.perf_counter()
    V = builtin("soliton").realize(1.0)
    ks = np.linspace(0.1, 5.0, 50)
    rows = transmission_sweep(V, ks, SolverConfig(L=20, rtol=1e-10), reflection=False)
    err = max(abs(c.t - oracles.soliton_t(c.k)) for c in rows)
    dt = time.perf_counter() - t0
    report(acceptance_log, 1, err <= 1e-6 and dt <= 10,
           f"max |t - (k+i)/(k-i)| = {err:.2e} (<= 1e-6), runtime {dt:.1f} s (<= 10)", t0)


def test_criterion_2_unitarity(acceptance_log):
    t0 = time.perf_counter()
    V = builtin("bump_cosine").realize(0.1)
    rows = transmission_sweep(V, np.linspace(0.05, 5.0, 30))
    defect = max(abs(abs(c.t) ** 2 + abs(c.r_plus) ** 2 - 1) for c in rows)
    dt = time.perf_counter() - t0
    report(acceptance_log, 2, defect <= 1e-7 and dt <= 30,
           f"max ||t|^2 + |r+|^2 - 1| = {defect:.2e} (<= 1e-7), runtime {dt:.1f} s (<= 30)", t0)


def test_criterion_3_order_in_epsilon(acceptance_log):
    t0 = time.perf_counter()
    P = builtin("bump_cosine")
    eps = [0.1, 0.05, 0.025, 0.0125]
    ks = np.linspace(0.0, 1.0, 21)
    gaps = [convergence_gap(P, e, ks) for e in eps]
    slope = fit_slope(eps, gaps)
    dt = time.perf_counter() - t0
    ok = slope is not None and slope >= 2.5 and dt <= 600
    report(acceptance_log, 3, ok,
           f"sup gaps {', '.join(f'{g:.2e}' for g in gaps)}; slope {slope:.2f} (>= 2.5), runtime {dt:.0f} s", t0)


def test_criterion_4_scaled_universal_limit(acceptance_log):
    t0 = time.perf_counter()
    kap = np.linspace(0.1, 2.0, 20)
    single, ts = {}, {}
    for fam in ("bump_cosine", "double_bump"):
        P = builtin(fam)
        I = integral_lambda_eff(P)
        ref = kap / (kap - 0.5j * I)
        for e in (0.1, 0.05, 0.025):
            if fam == "double_bump" and e != 0.025:
                continue
            ts[fam, e] = scaled_transmission(P, e, kap, integral=I)
            single[fam, e] = float(np.max(np.abs(ts[fam, e] - ref)))
    ratio = single["bump_cosine", 0.05] / single["bump_cosine", 0.1]
    halves = 0.5 * 0.7 <= ratio <= 0.5 * 1.3
    cross = float(np.max(np.abs(ts["bump_cosine", 0.025] - ts["double_bump", 0.025])))
    same = cross <= 2 * single["bump_cosine", 0.025]
    report(acceptance_log, 4, halves and same,
           f"gap ratio eps 0.05/0.1 = {ratio:.3f} (0.35..0.65); cross-family gap {cross:.2e} vs "
           f"2 x single-family {2 * single['bump_cosine', 0.025]:.2e} at eps 0.025", t0)


def test_criterion_5_edge_eigenvalue(acceptance_log):
    t0 = time.perf_counter()
    P = builtin("bump_cosine")
    errs, fd_ok, parts = [], True, []
    for e in (0.2, 0.141, 0.1):
        pred = predicted_eigenvalue(P, e)
        pole = find_pole_near(P.realize(e), pred.pole_s)
        errs.append(abs(pole.energy / pred.energy - 1))
        L = max(20.0, 10.0 / pole.s)
        fd = fd_spectrum(P.realize(e), L, int(math.ceil(2 * L / (e / 40))))
        j = int(np.argmin(np.abs(np.asarray(fd.eigenvalues) - pole.energy))) if fd.eigenvalues else None
        match = j is not None and abs(fd.eigenvalues[j] - pole.energy) <= max(1e-6, 2 * fd.grid_error[j])
        fd_ok &= match
        parts.append(f"eps {e:g}: E {pole.energy:.4e} rel {errs[-1]:.3f} fd {'ok' if match else 'no'}")
    dt = time.perf_counter() - t0
    ok = all(b < a for a, b in zip(errs, errs[1:])) and errs[-1] <= 0.5 and fd_ok and dt <= 900
    report(acceptance_log, 5, ok, "; ".join(parts) + f"; runtime {dt:.0f} s", t0)


def test_criterion_6_soliton_bifurcation(acceptance_log):
    t0 = time.perf_counter()
    eps = 0.1
    P = builtin("soliton", micro="bump_cosine")
    V = P.realize(eps)
    deep = find_pole(V, (0.5, 1.5))
    pred = soliton_predicted_eigenvalue(P, eps)
    edge = find_pole_near(V, pred.pole_s)
    rel = abs(edge.energy / pred.energy - 1)
    fd = fd_spectrum(V, 6000.0, int(math.ceil(12000.0 / (eps / 20))))
    two = len(fd.eigenvalues) == 2 and edge.s < 0.5 * deep.s
    ok = two and abs(deep.energy + 1) <= 10 * eps ** 2 and rel <= 0.5
    report(acceptance_log, 6, ok,
           f"fd negative eigenvalues {['%.4e' % E for E in fd.eigenvalues]}; deep E {deep.energy:.4f} "
           f"(|E+1| <= {10 * eps ** 2:g}); edge E {edge.energy:.4e} vs prediction {pred.energy:.4e}, "
           f"rel {rel:.3f} (<= 0.5)", t0)


def test_criterion_7_large_k_bound(acceptance_log):
    t0 = time.perf_counter()
    eps = 0.1
    P = builtin("bump_cosine")
    ks = np.linspace(1.0, 20.0, 40)
    tq = np.array([c.t for c in transmission_sweep(P.realize(eps), ks, reflection=False)])
    ts = np.array([c.t for c in transmission_sweep(sigma_eff_as_potential(P, eps).realize(eps), ks,
                                                   reflection=False)])
    prod = np.abs(tq - ts) * ks / eps ** 2
    rho = float(spearmanr(ks, prod)[0])
    report(acceptance_log, 7, rho <= 0.3,
           f"|dt| k / eps^2 in [{prod.min():.3e}, {prod.max():.3e}]; Spearman {rho:.3f} (<= 0.3)", t0)


def test_criterion_8_decay_crossover(acceptance_log):
    t0 = time.perf_counter()
    eps = 0.4
    P = builtin("bump_cosine")
    V = P.realize(eps)
    I = integral_lambda_eff(P)

    # main run
    L = run_length(300.0, L_potential=V.support_radius)
    state = prepare_state(V, gaussian(0.5), L, eps / 20)
    times = np.concatenate([[0.0], np.geomspace(1.0, 300.0, 61)])
    f = evolve_crank_nicolson(V, state, times)
    c, a = fit_crossover(decay_metrics(f), eps, I)
    ratio = c / (eps ** 4 * I ** 2)
    exp_ok = abs(a + 0.5) <= 0.05
    c_ok = 1 / 3 <= ratio <= 3

    # cross-check on a finer CN run
    cfg = CNConfig(dt_max=0.001, dt0=0.001)
    fine = prepare_state(V, gaussian(0.5), run_length(10.0, cfg), 0.01)
    tc = [1.0, 5.0, 10.0]
    cn = evolve_crank_nicolson(V, fine, tc, cfg)
    ft = evolve_distorted(V, fine, tc, tol=1e-4)
    rel = np.abs(ft.weighted_sup / cn.weighted_sup - 1)
    cross_ok = bool(np.all(rel <= 1e-3))
    dt = time.perf_counter() - t0
    report(acceptance_log, 8, exp_ok and c_ok and cross_ok and dt <= 1800,
           f"early exponent {a:.4f} (-0.5 +- 0.05); c {c:.4e}, ratio {ratio:.3f} (1/3..3); "
           f"CN/distorted rel {', '.join(f'{r:.1e}' for r in rel)} (<= 1e-3); runtime {dt:.0f} s", t0)


def test_criterion_9_genericity_flip(acceptance_log):
    t0 = time.perf_counter()
    tb = abs(transmission_sweep(builtin("bump_cosine").realize(0.05), [1e-3], reflection=False)[0].t)
    tz = abs(transmission_sweep(builtin("zero").realize(0.05), [1e-3], reflection=False)[0].t)
    report(acceptance_log, 9, tb <= 0.1 and tz >= 0.999,
           f"|t(1e-3)| bump eps 0.05 = {tb:.4f} (<= 0.1); zero = {tz:.6f} (>= 0.999)", t0)
