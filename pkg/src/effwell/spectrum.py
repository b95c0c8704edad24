"""Poles of t on the positive imaginary axis, bound-state energies and the
leading-order predictions for the edge eigenvalue.

Poles are roots of the real function g(s) = Re W[f_+, f_-](is); the matrix
oracle is a second-order finite-difference Hamiltonian with Dirichlet ends,
refined once (n -> 2n+1) for a grid-error estimate and Richardson value.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize
from scipy.linalg import eigh_tridiagonal

from .errors import AmbiguityError, BracketError, PreconditionError
from .jost import SolverConfig, eval_m, solve_jost_batch, wronskian
from .potential import (LambdaProfile, TwoScalePotential, integral_lambda_eff, integrate_profile)
from .scattering import K_ZERO, genericity_indicator

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PoleResult:
    s: float
    energy: float
    residual: float
    bracket: tuple
    newton_iters: int
    imag_ratio: float = 0.0      # max |Im W|/|W| seen along the scan


@dataclass(frozen=True)
class Prediction:
    pole_s: float
    energy: float
    order_remainder: float
    predicted: bool = True

    @property
    def empty(self) -> bool:
        return not self.predicted


def _w_on_axis(V, s_values, cfg):
    ks = 1j * np.asarray(s_values, dtype=float)
    batch = solve_jost_batch(V, ks, cfg)
    return np.array([wronskian(a, b) for a, b in zip(batch.plus, batch.minus)])


def scan_axis(V, s_values, cfg: SolverConfig | None = None):
    """W(is) on a set of points; returns (W real parts, max |Im W|/|W|)."""
    W = _w_on_axis(V, s_values, cfg)
    ratio = float(np.max(np.abs(W.imag) / np.maximum(np.abs(W), 1e-300)))
    return W.real, ratio


def find_pole(V, s_bracket, cfg: SolverConfig | None = None, n_scan: int = 9,
              xtol: float = 1e-14) -> PoleResult:
    """Brent root of g(s) = Re W(is) inside ``s_bracket``."""
    lo, hi = map(float, s_bracket)
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < lo < hi")
    s = np.geomspace(lo, hi, n_scan)
    g, ratio = scan_axis(V, s, cfg)
    flips = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)
    # a scan node sitting on the root at round-off level has no stable sign
    zeros = np.flatnonzero(np.abs(g) <= 1e-12 * (1 + s))
    if zeros.size == 1:
        z = float(s[zeros[0]])
        return PoleResult(z, -z * z, float(abs(g[zeros[0]])), (lo, hi), 0, ratio)
    if flips.size == 0:
        raise BracketError(f"Re W(is) has no sign change on [{lo:.6g}, {hi:.6g}]")
    if flips.size > 1:
        subs = [(float(s[i]), float(s[i + 1])) for i in flips]
        raise AmbiguityError(f"{flips.size} sign changes on the bracket", sub_brackets=subs)
    a, b = float(s[flips[0]]), float(s[flips[0] + 1])
    seen = [ratio]

    def gfun(x):
        W = _w_on_axis(V, [x], cfg)[0]
        seen.append(abs(W.imag) / max(abs(W), 1e-300))
        return W.real

    root, info = optimize.brentq(gfun, a, b, xtol=xtol * max(a, 1e-300), rtol=4 * np.finfo(float).eps,
                                 full_output=True)
    res = abs(_w_on_axis(V, [root], cfg)[0])
    return PoleResult(float(root), -float(root) ** 2, float(res), (lo, hi), int(info.iterations), max(seen))


def find_pole_near(V, prediction: float, cfg: SolverConfig | None = None, factor: float = 4.0,
                   max_widen: int = 6, upper: float | None = None) -> PoleResult:
    """Search [p/factor, p*factor], widening geometrically on bracket errors."""
    cap = upper if upper is not None else max(50.0, 2 * factor * prediction)
    lo, hi = prediction / factor, min(prediction * factor, cap * (1 - 1e-9))
    for _ in range(max_widen + 1):
        try:
            return find_pole(V, (lo, hi), cfg)
        except BracketError:
            lo, hi = max(lo / factor, 1e-8), min(hi * factor, cap * (1 - 1e-9))
    raise BracketError(f"no pole found between {lo:.3g} and {hi:.3g}")


# ---------------------------------------------------------------------------
# finite-difference oracle
# ---------------------------------------------------------------------------

@dataclass
class FdSpectrum:
    eigenvalues: list            # Richardson values, filtered
    raw: list                    # fine-grid values
    grid_error: list             # |E_fine - E_coarse| / 3
    resolved: bool
    n: int
    L: float
    x: np.ndarray | None = field(default=None, repr=False)
    vectors: np.ndarray | None = field(default=None, repr=False)


def _fd_negative(V, L, n, vectors=False):
    h = 2 * L / (n + 1)
    x = -L + h * np.arange(1, n + 1)
    v = V(x)
    d = 2.0 / h ** 2 + v
    e = np.full(n - 1, -1.0 / h ** 2)
    lo = float(min(v.min(), 0.0)) - 1.0
    if vectors:
        w, u = eigh_tridiagonal(d, e, select="v", select_range=(lo, 0.0))
        return x, w, u / math.sqrt(h)
    w = eigh_tridiagonal(d, e, eigvals_only=True, select="v", select_range=(lo, 0.0))
    return x, w, None


def fd_spectrum(V, L: float, n: int, vectors: bool = False) -> FdSpectrum:
    """Negative spectrum of -d^2/dx^2 + V on [-L, L] (Dirichlet) with n interior points."""
    if n < 2000:
        raise PreconditionError("fd oracle needs n >= 2000")
    h = 2 * L / (n + 1)
    eps = getattr(V, "eps_hint", 0.0)
    if eps > 0 and h > eps / 20 * (1 + 1e-12):
        raise PreconditionError(f"grid step {h:.3g} exceeds eps/20 = {eps / 20:.3g}")
    x, wc, _ = _fd_negative(V, L, n)
    xf, wf, u = _fd_negative(V, L, 2 * n + 1, vectors)
    m = min(wc.size, wf.size)
    resolved = wc.size == wf.size
    err = np.abs(wf[:m] - wc[:m]) / 3
    extrap = wf[:m] + (wf[:m] - wc[:m]) / 3
    if m and np.any(np.abs(wf[:m] - wc[:m]) > 0.05 * np.abs(wf[:m])):
        resolved = False
    keep = extrap < -10 * err
    return FdSpectrum([float(z) for z in extrap[keep]], [float(z) for z in wf[:m][keep]],
                      [float(z) for z in err[keep]], bool(resolved), n, float(L),
                      xf if vectors else None, u[:, :m][:, keep] if vectors else None)


def fd_eigenvalues(V, L: float, n: int) -> list:
    """Eigenvalues below -10 x (grid-error estimate), Richardson-corrected."""
    return fd_spectrum(V, L, n).eigenvalues


def fd_points_for(V, L: float, energy: float) -> int:
    """n with (grid step)^2 max|V| <= 0.01 |E| (the conservative resolution rule)."""
    vmax = max(V.max_abs(), 1e-300)
    h = math.sqrt(0.01 * abs(energy) / vmax)
    return int(math.ceil(2 * L / h))


# ---------------------------------------------------------------------------
# predictions
# ---------------------------------------------------------------------------

NO_EDGE_STATE = Prediction(0.0, 0.0, math.nan, predicted=False)


def _prediction(weight, epsilon, order):
    if not weight > 0:
        return Prediction(0.0, 0.0, order, predicted=False)
    s = 0.5 * epsilon ** 2 * weight
    return Prediction(s, -s * s, order)


def predicted_pole(P: TwoScalePotential, epsilon: float, integral: float | None = None) -> Prediction:
    I = integral_lambda_eff(P) if integral is None else integral
    return _prediction(I, epsilon, 4)


def predicted_eigenvalue(P: TwoScalePotential, epsilon: float, integral: float | None = None) -> Prediction:
    I = integral_lambda_eff(P) if integral is None else integral
    return _prediction(I, epsilon, 5)


def tanh2_weight(P: TwoScalePotential, rho: float, x0: float, tol: float = 1e-10) -> float:
    """int tanh^2(rho (y - x0)) Lambda_eff(y) dy."""
    lam = LambdaProfile(P.modes)
    if not P.modes:
        return 0.0
    R = lam.support_radius
    edges = np.unique([-R, R, x0] + [b for b in lam.breakpoints if -R < b < R])
    edges = edges[(edges >= -R) & (edges <= R)]
    return integrate_profile(lambda y: np.tanh(rho * (y - x0)) ** 2 * lam(y), edges, tol)


def soliton_predicted_eigenvalue(P: TwoScalePotential, epsilon: float, rho: float = 1.0,
                                 x0: float = 0.0) -> Prediction:
    return _prediction(tanh2_weight(P, rho, x0), epsilon, 5)


def universal_limit_params(q_av, Lambda, cfg: SolverConfig | None = None) -> complex:
    """kappa* = (i/2) t^{q_av}(0) int f_-(y;0) Lambda(y) f_+(y;0) dy.

    ``q_av`` is a potential without fast modes (TwoScalePotential or
    realised); ``Lambda`` a profile.  The product t f_- f_+ is evaluated at
    k = 1e-3 and 5e-4 and Richardson-extrapolated to k = 0.
    """
    V = q_av.realize(1.0) if isinstance(q_av, TwoScalePotential) else q_av
    require = genericity_indicator(V, cfg)
    if require.generic:
        raise PreconditionError(f"q_av is generic (|I(0)| = {abs(require.i0):.3e}); no universal limit")
    R = getattr(Lambda, "support_radius", 0.0)
    if R <= 0:
        return 0j
    batch = solve_jost_batch(V, [complex(k) for k in K_ZERO], cfg)
    edges = np.unique([-R, R] + [b for b in getattr(Lambda, "breakpoints", ()) if -R < b < R])
    from .quadrature import adaptive_panels, split_edges
    G = []
    for k, fp, fm in zip(K_ZERO, batch.plus, batch.minus):
        t = -2j * k / wronskian(fp, fm)
        L = min(fp.L, R)
        e = np.clip(split_edges(edges, 0.25), -L, L)
        val, _ = adaptive_panels(lambda y: eval_m(fm, y)[0] * Lambda(y) * eval_m(fp, y)[0], np.unique(e), 1e-12)
        G.append(t * val)
    return 0.5j * (2 * G[1] - G[0])


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def report_json(path, entries: list) -> None:
    """JSON report: predictions, poles, oracle eigenvalues, ratios, diagnostics."""
    def conv(o):
        if isinstance(o, (PoleResult, Prediction)):
            return asdict(o)
        if isinstance(o, FdSpectrum):
            d = {k: v for k, v in asdict(o).items() if k not in ("x", "vectors")}
            return d
        if isinstance(o, np.generic):
            return o.item()
        raise TypeError(type(o))
    with open(path, "w") as fh:
        json.dump({"schema_version": SCHEMA_VERSION, "entries": entries}, fh, indent=2, sort_keys=True,
                  default=conv)
