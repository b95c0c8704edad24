"""Transmission and reflection coefficients, I-integrals and comparisons.

Conventions (checked on V = 0, where f_+- = exp(+-ikx)):

    W[f_+, f_-] = -2ik / t(k),      k/t = -W/(2i),      W = -2ik + I^V(k),
    I^V(k) = int V(y) m_+(y; k) dy      (m_+ = f_+ e^{-iky}),

and for real k the reflection coefficients come from the -k solutions,

    r_+ = t W[f_+(k), f_-(-k)] / (2ik),     r_- = t W[f_-(k), f_+(-k)] / (-2ik).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import PoleProximityError, PreconditionError
from .jost import SolverConfig, cross_wronskian, eval_m, solve_jost_batch, wronskian
from .potential import TwoScalePotential, integral_lambda_eff
from .quadrature import adaptive_panels, fixed_panels, split_edges

K_ZERO = (1e-3, 5e-4)
POLE_TOL = 1e-12


@dataclass(frozen=True)
class ScatteringCoefficients:
    k: complex
    t: complex
    r_plus: complex | None
    r_minus: complex | None
    wronskian: complex
    k_over_t: complex
    drift: float = 0.0


@dataclass(frozen=True)
class ComparisonResult:
    k: complex
    i_vw: complex
    delta_k_over_t: complex
    mismatch: float


@dataclass(frozen=True)
class Genericity:
    i0: complex
    abs_t: float
    generic: bool

    def __iter__(self):
        return iter((self.i0, self.abs_t))


def _is_real(k: complex) -> bool:
    return k.imag == 0.0


def transmission_sweep(V, ks: Sequence, cfg: SolverConfig | None = None, reflection: bool = True,
                       check: bool = True) -> list[ScatteringCoefficients]:
    """Scattering data for many k from one batched solve on a shared grid."""
    cfg = cfg or SolverConfig()
    ks = [complex(k) for k in np.atleast_1d(ks)]
    need = set()
    for k in ks:
        base = [k] if k != 0 else [complex(z) for z in K_ZERO]
        need.update(base)
        if k == 0:
            need.add(0j)
        if reflection and _is_real(k):
            need.update(-z for z in base)
    order = sorted(need, key=lambda z: (z.real, z.imag))
    batch = solve_jost_batch(V, order, cfg)
    pos = {z: i for i, z in enumerate(order)}

    def pair(z):
        i = pos[z]
        return batch.plus[i], batch.minus[i]

    cache = {}

    def coeffs(z):
        if z in cache:
            return cache[z]
        fp, fm = pair(z)
        W = wronskian(fp, fm, check)
        drift = fp.diagnostics.wronskian_drift
        if abs(W) <= POLE_TOL * (1 + abs(z)):
            raise PoleProximityError(f"|W| = {abs(W):.3e} at k = {z}: pole of t", abs_w=abs(W))
        t = -2j * z / W
        rp = rm = None
        if reflection and _is_real(z) and z != 0:
            gp, gm = pair(-z)
            rp = t * cross_wronskian(fp, gm, check) / (2j * z)
            rm = t * cross_wronskian(fm, gp, check) / (-2j * z)
        cache[z] = (t, rp, rm, W, drift)
        return cache[z]

    out = []
    for k in ks:
        if k != 0:
            t, rp, rm, W, drift = coeffs(k)
        else:
            fp, fm = pair(0j)
            W = wronskian(fp, fm, check)
            drift = fp.diagnostics.wronskian_drift
            (t1, rp1, rm1, *_), (t2, rp2, rm2, *_) = coeffs(complex(K_ZERO[0])), coeffs(complex(K_ZERO[1]))
            t = 2 * t2 - t1
            rp = None if rp1 is None else 2 * rp2 - rp1
            rm = None if rm1 is None else 2 * rm2 - rm1
        out.append(ScatteringCoefficients(k, t, rp, rm, W, -W / 2j, drift))
    return out


def transmission(V, k, cfg: SolverConfig | None = None) -> ScatteringCoefficients:
    """t = -2ik/W[f_+, f_-]; r_+- only for real k; t(0) by Richardson from k = 1e-3, 5e-4."""
    return transmission_sweep(V, [k], cfg)[0]


def k_over_t(V, ks, cfg: SolverConfig | None = None, check: bool = True) -> np.ndarray:
    """-W/(2i) for every k; finite at k = 0 and never divides by W."""
    ks = np.atleast_1d(np.asarray(ks, dtype=complex))
    batch = solve_jost_batch(V, ks, cfg)
    W = np.array([wronskian(a, b, check) for a, b in zip(batch.plus, batch.minus)])
    return -W / 2j


# ---------------------------------------------------------------------------
# I-integrals
# ---------------------------------------------------------------------------

def _integration_edges(Vs, L):
    compact = all(V.compact for V in Vs)
    R = max(V.support_radius for V in Vs) if compact else L
    R = min(R, L)
    pts = [-R, R] + [b for V in Vs for b in V.breakpoints if -R < b < R]
    return np.unique(pts), max(V.eps_hint for V in Vs)


def _integrate(f, breaks, eps, tol):
    if eps > 0:
        edges = split_edges(breaks, min(eps / 4, 0.1))
        return fixed_panels(f, edges)
    edges = split_edges(breaks, 0.5)
    return adaptive_panels(f, edges, tol)[0]


def i_integral(V, k, cfg: SolverConfig | None = None, tol: float = 1e-12, return_details: bool = False):
    """I^V(k) = int V(y) e^{-iky} f_+(y; k) dy on Gauss-Legendre panels.

    The identity W = -2ik + I is checked; with ``return_details`` the
    residual |I - W - 2ik|/2 (the error in k/t) is returned as well.
    """
    k = complex(k)
    batch = solve_jost_batch(V, [k], cfg)
    fp, fm = batch.plus[0], batch.minus[0]
    breaks, eps = _integration_edges([V], fp.L)
    if breaks[-1] <= breaks[0]:
        val = 0j
    else:
        val = _integrate(lambda x: V(x) * eval_m(fp, x)[0], breaks, eps, tol)
    W = wronskian(fp, fm, check=False)
    residual = abs(val - W - 2j * k) / 2
    if return_details:
        return val, residual
    return val


def comparison_integral(V, W, k, cfg: SolverConfig | None = None, tol: float = 1e-12) -> ComparisonResult:
    """I^{[V,W]}(k) = int f^W_-(V - W) f^V_+ dy against k/t^V - k/t^W."""
    k = complex(k)
    bv = solve_jost_batch(V, [k], cfg)
    bw = solve_jost_batch(W, [k], cfg)
    fpv, fmv = bv.plus[0], bv.minus[0]
    fpw, fmw = bw.plus[0], bw.minus[0]
    L = min(fpv.L, fmw.L)
    breaks, eps = _integration_edges([V, W], L)
    if breaks[-1] <= breaks[0]:
        ivw = 0j
    else:
        ivw = _integrate(lambda x: eval_m(fmw, x)[0] * (V(x) - W(x)) * eval_m(fpv, x)[0], breaks, eps, tol)
    delta = -(wronskian(fpv, fmv) - wronskian(fpw, fmw)) / 2j
    return ComparisonResult(k, ivw, delta, abs(delta + ivw / 2j))


# ---------------------------------------------------------------------------
# scaled limit, Dirac reference, genericity
# ---------------------------------------------------------------------------

def dirac_transmission(kappa, mass: float):
    """Transmission of -mass * delta(x) at wave number kappa: kappa/(kappa - i mass/2)."""
    kappa = np.asarray(kappa, dtype=complex)
    den = kappa - 0.5j * mass
    if np.any(den == 0):
        raise PoleProximityError("kappa sits on the delta-well pole i*mass/2", abs_w=0.0)
    out = kappa / den
    return complex(out) if out.ndim == 0 else out


def dirac_reflection(kappa, mass: float):
    kappa = np.asarray(kappa, dtype=complex)
    den = kappa - 0.5j * mass
    if np.any(den == 0):
        raise PoleProximityError("kappa sits on the delta-well pole i*mass/2", abs_w=0.0)
    out = 0.5j * mass / den
    return complex(out) if out.ndim == 0 else out


def scaled_transmission(P: TwoScalePotential, epsilon: float, kappa, cfg: SolverConfig | None = None,
                        guard: float = 1e-3, integral: float | None = None):
    """t^{q_eps}(eps^2 kappa) for scalar or array kappa."""
    kap = np.atleast_1d(np.asarray(kappa, dtype=complex))
    I = integral_lambda_eff(P) if integral is None else integral
    near = np.abs(kap - 0.5j * I) < guard
    if np.any(near):
        raise PoleProximityError(f"kappa = {kap[near][0]} inside the guard disc around i*{I / 2:.6g}",
                                 abs_w=float(np.abs(kap[near] - 0.5j * I).min()))
    ks = epsilon ** 2 * kap
    kt = k_over_t(P.realize(epsilon), ks, cfg)
    t = ks / kt
    return complex(t[0]) if np.ndim(kappa) == 0 else t


def genericity_indicator(V, cfg: SolverConfig | None = None) -> Genericity:
    """(I^V(0), |t(1e-3)|); generic when |I^V(0)| > 1e-6 (1 + |||V|||).

    |||V||| is the exponentially weighted sup of the realised potential
    V_eps; the two-scale norm with three derivatives of every q_j is far
    too large to act as a numerical-zero threshold.
    """
    i0 = i_integral(V, 0.0, cfg)
    abs_t = abs(transmission_sweep(V, [K_ZERO[0]], cfg, reflection=False)[0].t)
    norm = V.weighted_sup() if hasattr(V, "weighted_sup") else 0.0
    return Genericity(i0, abs_t, bool(abs(i0) > 1e-6 * (1 + norm)))


def require_non_generic(V, cfg=None):
    g = genericity_indicator(V, cfg)
    if g.generic:
        raise PreconditionError(f"potential is generic (|I(0)| = {abs(g.i0):.3e})")
    return g


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("k_re", "k_im", "t_re", "t_im", "abs_t", "r_re", "r_im", "abs_r", "w_re", "w_im")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path, coeffs: Sequence[ScatteringCoefficients]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for c in coeffs:
            r = c.r_plus
            rr = (r.real, r.imag, abs(r)) if r is not None else (math.nan,) * 3
            w.writerow([_fmt(v) for v in (c.k.real, c.k.imag, c.t.real, c.t.imag, abs(c.t), *rr,
                                          c.wronskian.real, c.wronskian.imag)])
