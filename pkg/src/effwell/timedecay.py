"""Dispersive decay of exp(-itH) P_c psi_0.

Two independent evolvers:

* ``evolve_distorted`` evaluates the spectral representation

      psi_c(t, x) = (1/2 pi) int_0^inf e^{-ik^2 t} |t(k)|^2 F(x; k) dk,
      F(x; k) = f_+(x;k) <f_+(k), psi_0> + f_-(x;k) <f_-(k), psi_0>,

  on adaptively bisected Gauss-Legendre panels in k (orders 10 and 20 on
  each panel give the self-check);
* ``evolve_crank_nicolson`` propagates the second-order finite-difference
  Hamiltonian on a large Dirichlet box, with the discrete bound states of
  the same matrix projected out of the initial data.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize
from scipy.linalg import lapack

from .errors import DomainTooSmallError, FitError, PreconditionError, RefinementError
from .jost import SolverConfig, batch_eval_m, solve_jost_batch, wronskian
from .quadrature import gauss_legendre
from .spectrum import _fd_negative, find_pole_near

SCHEMA_VERSION = 1


@dataclass
class InitialState:
    psi0: Callable | None
    weight_norm_3: float
    grid: np.ndarray
    values: np.ndarray                 # P_c psi_0 on the grid
    overlaps: tuple = ()               # <u_j, psi_0>
    bound_energies: tuple = ()

    @property
    def dx(self) -> float:
        return float(self.grid[1] - self.grid[0])


@dataclass
class DecayField:
    times: np.ndarray
    values: np.ndarray                 # (nt, nx) on ``x``
    weighted_sup: np.ndarray           # power 3
    method: str
    x: np.ndarray
    weighted_sup_p1: np.ndarray | None = None
    weighted_sup_p2: np.ndarray | None = None
    l2_norm: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class SpectralDensity:
    k_grid: np.ndarray
    t_of_k: np.ndarray
    F_of_xk: np.ndarray


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def gaussian(width: float = 0.5, center: float = 0.0, k0: float = 0.0):
    def psi0(x):
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * ((x - center) / width) ** 2 + 1j * k0 * x)
    return psi0


def _weight_norm_3(x, psi):
    return float(np.trapezoid((1 + np.abs(x) ** 3) * np.abs(psi), x))


def project_continuum(psi0, bound_states: Sequence = (), grid=None) -> InitialState:
    """Subtract sum_j <u_j, psi_0> u_j (discrete inner product on a uniform grid).

    ``bound_states`` holds (energy, u) pairs sampled on ``grid``; each u must
    be normalised, h sum |u|^2 = 1.
    """
    if grid is None:
        raise PreconditionError("a uniform grid is required")
    x = np.asarray(grid, dtype=float)
    h = float(x[1] - x[0])
    vals = np.asarray(psi0(x) if callable(psi0) else psi0, dtype=complex).copy()
    raw = vals.copy()
    us, energies = [], []
    for E, u in bound_states:
        u = np.asarray(u)
        nrm = h * float(np.sum(np.abs(u) ** 2))
        if abs(nrm - 1) > 1e-8:
            raise PreconditionError(f"bound state at E={E} has norm^2 {nrm:.12g}, not 1")
        us.append(u)
        energies.append(float(E))
    overlaps = []
    for u in us:
        c = h * np.vdot(u, raw)
        overlaps.append(complex(c))
        vals -= c * u
    for _ in range(2):           # re-orthogonalise against round-off
        for u in us:
            vals -= h * np.vdot(u, vals) * u
    for u in us:
        r = abs(h * np.vdot(u, vals))
        if r > 1e-10 * max(1.0, math.sqrt(h * np.sum(np.abs(raw) ** 2))):
            raise PreconditionError(f"projection residual {r:.3e} above 1e-10")
    return InitialState(psi0 if callable(psi0) else None, _weight_norm_3(x, raw), x, vals,
                        tuple(overlaps), tuple(energies))


def box_grid(L: float, dx: float):
    """Interior points of the Dirichlet box [-L, L] with spacing close to dx.

    n is odd so x = 0 is a node: the weight (1+|x|)^{-3} has a cusp there
    and missing it by half a step biases the weighted sup by 1.5 dx.
    """
    n = int(round(2 * L / dx)) - 1
    n += 1 - n % 2
    h = 2 * L / (n + 1)
    return -L + h * np.arange(1, n + 1), n


def bound_states(V, L: float, n: int):
    """Negative eigenpairs of the fd Hamiltonian on the box, normalised."""
    x, w, u = _fd_negative(V, L, n, vectors=True)
    return x, [(float(E), u[:, j]) for j, E in enumerate(w)]


def jost_bound_states(V, grid, energies, cfg: SolverConfig | None = None):
    """Eigenfunctions from the Jost solutions at the poles near ``energies``.

    At a pole f_+ and f_- are proportional; f_+ is used on x >= 0 and the
    rescaled f_- on x < 0, so each side decays exactly whatever the
    residual of the root.  Normalised with the trapezoid sum on ``grid``.
    """
    x = np.asarray(grid, dtype=float)
    h = float(x[1] - x[0])
    out = []
    for E in energies:
        pole = find_pole_near(V, math.sqrt(-E), cfg, factor=1.5)
        batch = solve_jost_batch(V, [1j * pole.s], cfg)
        mp, _ = batch_eval_m(batch, "plus", x, extend="truncate")
        mm, _ = batch_eval_m(batch, "minus", x, extend="truncate")
        fp = (mp[0] * np.exp(-pole.s * x)).real
        fm = (mm[0] * np.exp(pole.s * x)).real
        i0 = int(np.argmin(np.abs(x)))
        u = np.where(x >= x[i0], fp, fm * fp[i0] / fm[i0])
        u /= math.sqrt(h * float(np.sum(u * u)))
        out.append((pole.energy, u))
    return out


def prepare_state(V, psi0, L: float, dx: float, bound: str = "fd", cfg: SolverConfig | None = None) -> InitialState:
    """Grid, bound states and continuum projection in one go.

    ``bound="fd"`` projects out the eigenvectors of the finite-difference
    Hamiltonian on the same grid (what Crank-Nicolson conserves);
    ``bound="jost"`` uses the exact eigenfunctions at the poles (what the
    spectral representation is orthogonal to).
    """
    x, n = box_grid(L, dx)
    _, bs = bound_states(V, L, n)
    if bound == "jost":
        bs = jost_bound_states(V, x, [E for E, _ in bs], cfg)
    elif bound != "fd":
        raise ValueError(f"unknown bound-state source {bound!r}")
    return project_continuum(psi0, bs, x)


def spectral_cutoff(state: InitialState, rel: float = 1e-12) -> float:
    """Largest |k| where |hat psi(k)| exceeds rel * max."""
    h = state.dx
    n = state.grid.size
    npad = 1 << int(math.ceil(math.log2(4 * n)))
    spec = np.abs(np.fft.fft(state.values, npad))
    k = np.abs(2 * math.pi * np.fft.fftfreq(npad, d=h))
    big = spec > rel * spec.max()
    return float(k[big].max())


def mass_cutoff(state: InitialState, frac: float = 1e-7) -> float:
    """|k| beyond which the spectral mass fraction is below ``frac``."""
    h = state.dx
    n = state.grid.size
    npad = 1 << int(math.ceil(math.log2(4 * n)))
    p = np.abs(np.fft.fft(state.values, npad)) ** 2
    k = np.abs(2 * math.pi * np.fft.fftfreq(npad, d=h))
    order = np.argsort(k)[::-1]
    tail = np.cumsum(p[order]) / p.sum()
    i = np.searchsorted(tail, frac)
    return float(k[order][min(i, k.size - 1)])


# ---------------------------------------------------------------------------
# distorted Fourier path
# ---------------------------------------------------------------------------

def _weights(x, power=3):
    return (1 + np.abs(x)) ** (-power)


def _panel_values(V, ks_nodes, wts, nodes_per_panel, times, xs, ws_psi, psi, x_out, cfg, budget=4e6):
    """Per-panel integrals (npanel, nt, nx) for nodes grouped by panel.

    ``budget`` caps the number of (k, x) samples held at once.
    """
    nt, nx = len(times), x_out.size
    chunk = int(max(nodes_per_panel, min(1500, budget / (xs.size + nt * nx))))
    # the batched solve holds a few propagators per (k, step); a probe at
    # the largest k gives the step count
    steps = solve_jost_batch(V, [ks_nodes.max()], cfg).grid.size
    chunk = int(max(nodes_per_panel, min(chunk, budget / (2 * steps))))
    npan = ks_nodes.size // nodes_per_panel
    out = np.zeros((npan, nt, nx), dtype=complex)
    tt = np.asarray(times, dtype=float)[:, None]
    for s in range(0, npan, max(1, chunk // nodes_per_panel)):
        e = min(npan, s + max(1, chunk // nodes_per_panel))
        ks = ks_nodes[s * nodes_per_panel:e * nodes_per_panel]
        w = wts[s * nodes_per_panel:e * nodes_per_panel]
        batch = solve_jost_batch(V, ks, cfg)
        W = np.array([wronskian(a, b, check=False) for a, b in zip(batch.plus, batch.minus)])
        t2 = np.abs(2 * ks / W) ** 2
        mp, _ = batch_eval_m(batch, "plus", xs, extend="truncate")
        mm, _ = batch_eval_m(batch, "minus", xs, extend="truncate")
        ph = np.exp(1j * ks[:, None] * xs[None, :])
        ap = (np.conj(mp * ph) * (ws_psi * psi)[None, :]).sum(axis=1)
        am = (np.conj(mm / ph) * (ws_psi * psi)[None, :]).sum(axis=1)
        op, _ = batch_eval_m(batch, "plus", x_out, extend="truncate")
        om, _ = batch_eval_m(batch, "minus", x_out, extend="truncate")
        pho = np.exp(1j * ks[:, None] * x_out[None, :])
        F = op * pho * ap[:, None] + om / pho * am[:, None]
        coef = (w * t2 / (2 * math.pi))[None, :] * np.exp(-1j * tt * (ks ** 2)[None, :])  # (nt, nk)
        G = np.einsum("tk,kx->tkx", coef, F)
        out[s:e] = G.reshape(nt, e - s, nodes_per_panel, nx).sum(axis=2).transpose(1, 0, 2)
    return out


def evolve_distorted(V, state: InitialState, t, k_max: float | None = None, cfg: SolverConfig | None = None,
                     x_out=None, tol: float = 1e-6, max_level: int = 14, panel: float = 0.25) -> DecayField:
    """Spectral representation of exp(-itH) P_c psi_0 at the times ``t``.

    Panels start at width ``panel`` and are bisected until the order-10 and
    order-20 Gauss-Legendre values agree to ``tol`` (relative to the weighted
    sup of the initial data, shared out by panel length).
    """
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    norm_v = V.weighted_sup() if hasattr(V, "weighted_sup") else 0.0
    k0 = 1 + norm_v
    if k_max is None:
        k_max = 2 * k0
    elif k_max < 2 * k0:
        raise PreconditionError(f"k_max = {k_max} below 2 k0 = {2 * k0}")
    if x_out is None:
        g = state.grid
        c = int(np.argmin(np.abs(g)))
        step = max(1, int(np.sum(np.abs(g) <= 20.0)) // 801)
        idx = np.arange(c % step, g.size, step)
        x_out = g[idx[np.abs(g[idx]) <= 20.0]]
    x_out = np.asarray(x_out, dtype=float)
    keep = np.abs(state.values) > 1e-14 * np.abs(state.values).max()
    lo, hi = np.flatnonzero(keep)[[0, -1]]
    # conj(f) psi is band-limited to k_max + k_psi, so the trapezoid rule
    # stays exact to the cutoff level on any grid with 2 pi / dx above that
    stride = max(1, int(2 * math.pi / (1.25 * (k_max + spectral_cutoff(state, 1e-8))) / state.dx))
    xs = state.grid[lo:hi + 1:stride]
    psi = state.values[lo:hi + 1:stride]
    ws_psi = np.full(xs.size, state.dx * stride)

    scale = float(np.max(_weights(state.grid) * np.abs(state.values)))
    tol_abs = tol * scale
    edges = np.linspace(0.0, k_max, int(math.ceil(k_max / panel)) + 1)
    pending = np.stack([edges[:-1], edges[1:]], axis=1)
    total = np.zeros((times.size, x_out.size), dtype=complex)
    wx = _weights(x_out)
    trace = []
    n_nodes = 0
    for level in range(max_level + 1):
        if not pending.size:
            break
        vals = {}
        for order in (10, 20):
            tg, wg = gauss_legendre(order)
            a, b = pending[:, :1], pending[:, 1:]
            half = 0.5 * (b - a)
            ks = ((a + b) * 0.5 + half * tg[None, :]).ravel()
            w = (half * wg[None, :]).ravel()
            n_nodes += ks.size
            vals[order] = _panel_values(V, ks, w, order, times, xs, ws_psi, psi, x_out, cfg)
        diff = np.max(np.abs(vals[20] - vals[10]) * wx[None, None, :], axis=(1, 2))
        width = pending[:, 1] - pending[:, 0]
        ok = diff <= tol_abs * width / k_max
        total += vals[20][ok].sum(axis=0)
        trace.append((pending.shape[0], int((~ok).sum()), float(diff.max())))
        bad = pending[~ok]
        if not bad.size:
            pending = bad
            break
        mid = 0.5 * (bad[:, 0] + bad[:, 1])
        pending = np.concatenate([np.stack([bad[:, 0], mid], 1), np.stack([mid, bad[:, 1]], 1)])
    if pending.size:
        raise RefinementError(f"k-integral under-resolved after {max_level} bisections; trace {trace}")
    ws = {p: np.max(_weights(x_out, p)[None, :] * np.abs(total), axis=1) for p in (1, 2, 3)}
    return DecayField(times, total, ws[3], "distorted_ft", x_out, ws[1], ws[2], None,
                      {"k_max": k_max, "trace": trace, "nodes": n_nodes})


# ---------------------------------------------------------------------------
# Crank-Nicolson
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CNConfig:
    dt_max: float = 0.05
    dt0: float = 0.005            # dt(t) = min(dt_max, dt0 (1 + t))
    store_window: float = 50.0
    monitor_frac: float = 0.1
    monitor_tol: float = 1e-6


def _cn_factor(h, v, dt):
    n = v.size
    a = 0.5j * dt
    d = 1 + a * (2 / h ** 2 + v)
    off = np.full(n - 1, -a / h ** 2, dtype=complex)
    dl, dd, du, du2, ipiv, info = lapack.zgttrf(off, d.astype(complex), off)
    if info != 0:
        raise RuntimeError(f"zgttrf failed with info={info}")
    return dl, dd, du, du2, ipiv


def _apply_h(psi, h, v):
    out = (2 / h ** 2 + v) * psi
    out[1:] -= psi[:-1] / h ** 2
    out[:-1] -= psi[1:] / h ** 2
    return out


def evolve_crank_nicolson(V, state: InitialState, times, cfg: CNConfig | None = None) -> DecayField:
    """Crank-Nicolson on the Dirichlet box carried by ``state.grid``."""
    cfg = cfg or CNConfig()
    times = np.asarray(sorted(set(float(t) for t in np.atleast_1d(times))))
    if times[0] < 0:
        raise ValueError("times must be nonnegative")
    x = state.grid
    h = state.dx
    v = np.asarray(V(x), dtype=float)
    n = x.size
    psi = state.values.astype(complex).copy()
    mass0 = h * float(np.sum(np.abs(psi) ** 2))
    edge = int(math.ceil(0.5 * cfg.monitor_frac * n))   # |x| > (1 - frac) L on each side
    win = np.abs(x) <= cfg.store_window
    w = {p: _weights(x, p) for p in (1, 2, 3)}
    factors = {}
    stored, ws, l2 = [], {1: [], 2: [], 3: []}, []
    t_now, nsteps, worst_step = 0.0, 0, 0.0
    mass_prev = mass0

    def record():
        stored.append(psi[win].copy())
        a = np.abs(psi)
        for p in (1, 2, 3):
            ws[p].append(float(np.max(w[p] * a)))
        l2.append(math.sqrt(h * float(np.sum(a * a))))

    for t_target in times:
        span = t_target - t_now
        if span > 0:
            nstep = int(math.ceil(span / min(cfg.dt_max, cfg.dt0 * (1 + t_now)) - 1e-9))
            dt = span / nstep
            key = round(dt, 15)
            if key not in factors:
                factors = {key: _cn_factor(h, v, dt)} if len(factors) > 8 else {**factors, key: _cn_factor(h, v, dt)}
            dl, dd, du, du2, ipiv = factors[key]
            for _ in range(nstep):
                rhs = psi - 0.5j * dt * _apply_h(psi, h, v)
                sol, info = lapack.zgttrs(dl, dd, du, du2, ipiv, rhs[:, None])
                psi = sol[:, 0]
            nsteps += nstep
            t_now = t_target
            mass = h * float(np.sum(np.abs(psi) ** 2))
            worst_step = max(worst_step, abs(mass - mass_prev) / max(mass0, 1e-300) / nstep)
            mass_prev = mass
            outer = h * float(np.sum(np.abs(psi[:edge]) ** 2) + np.sum(np.abs(psi[-edge:]) ** 2))
            if outer > cfg.monitor_tol * max(mass0, 1e-300):
                raise DomainTooSmallError(
                    f"mass fraction {outer / mass0:.2e} in the outer {cfg.monitor_frac:.0%} of the box at t={t_now}")
        record()
    diag = {"steps": nsteps, "max_step_mass_drift": worst_step,
            "total_mass_drift": abs(l2[-1] ** 2 - mass0) / max(mass0, 1e-300), "L": float(-x[0] + h), "dx": h}
    return DecayField(times, np.array(stored), np.array(ws[3]), "crank_nicolson", x[win],
                      np.array(ws[1]), np.array(ws[2]), np.array(l2), diag)


def cn_max_speed(dt: float) -> float:
    """Largest group velocity Crank-Nicolson can carry at step dt.

    The per-step phase for energy k^2 is 2 atan(k^2 dt / 2), so the discrete
    group velocity is 2k / (1 + (k^2 dt/2)^2); its maximum over k sits at
    k^2 dt / 2 = 3^{-1/2} and equals 1.5 * 3^{-1/4} * sqrt(2/dt).
    """
    return 1.5 * 3 ** -0.25 * math.sqrt(2.0 / dt)


def run_length(t_max: float, cfg: CNConfig | None = None, L_potential: float = 0.0, margin: float = 10.0) -> float:
    """Box half-length that keeps every CN wave away from the outer 10%.

    The front is bounded by integrating ``cn_max_speed`` over the step
    schedule, which holds for any initial data (the spectrum of P_c psi_0
    need not be known).
    """
    cfg = cfg or CNConfig()
    ts = np.linspace(0.0, t_max, 4001)
    dts = np.minimum(cfg.dt_max, cfg.dt0 * (1 + ts))
    front = margin + float(np.trapezoid([cn_max_speed(d) for d in dts], ts))
    return max(4 * math.sqrt(t_max), L_potential, front / (1 - cfg.monitor_frac - 0.05))


# ---------------------------------------------------------------------------
# metrics and fits
# ---------------------------------------------------------------------------

def decay_metrics(field_: DecayField) -> list:
    """(t, sup_x (1+|x|)^{-3} |psi(t, x)|) for every stored time."""
    if len(field_.times) == 0:
        raise ValueError("empty field")
    vals = np.asarray(field_.values)
    sup = np.max(_weights(field_.x)[None, :] * np.abs(vals), axis=1)
    return [(float(t), float(s)) for t, s in zip(field_.times, sup)]


def fit_crossover(metrics, epsilon: float, integral_lambda: float, return_details: bool = False):
    """Two-regime fit log y = -(1/2) log t - log(1 + c t) + b; return (c, a).

    c comes from the whole series, with samples weighted by their spacing in
    log t so a dense tail does not dominate.  The early exponent a is the
    least-squares slope of log(y (1 + c t)) over t <= eps^{-4}/10, i.e. the
    decay left once the fitted crossover factor is divided out.  c is
    bounded to [1e-12, 1e6]: a pure t^{-3/2} series drives it to the upper
    bound (c and b are then not separable) and still yields a = -1/2.
    """
    m = np.asarray([(t, y) for t, y in metrics if t > 0 and y > 0], dtype=float)
    if m.shape[0] < 5:
        raise FitError("need at least five positive samples")
    t, y = m[:, 0], m[:, 1]
    T = 1.0 / (epsilon ** 4 * integral_lambda ** 2) if integral_lambda > 0 else math.inf
    if t.max() / t.min() < 100 or not (t.min() < T < t.max()):
        raise FitError(f"t range [{t.min():.3g}, {t.max():.3g}] must span two decades around {T:.3g}")
    lt = np.log(t)
    wt = np.sqrt(np.gradient(lt))
    ly = np.log(y)

    def resid(p):
        lc, b = p
        return wt * (-0.5 * lt - np.log1p(np.exp(lc) * t) + b - ly)

    best = None
    for c0 in (1.0 / T, 10.0 / T, 0.1 / T):
        r = optimize.least_squares(resid, [math.log(c0), ly[0] + 0.5 * lt[0]],
                                   bounds=([math.log(1e-12), -np.inf], [math.log(1e6), np.inf]),
                                   xtol=1e-14, ftol=1e-14, gtol=1e-14)
        if best is None or r.cost < best.cost:
            best = r
    c = float(math.exp(best.x[0]))
    early = t <= epsilon ** -4 / 10
    if early.sum() < 3:
        raise FitError(f"fewer than three samples below t = {epsilon ** -4 / 10:.3g}")
    a = float(np.polyfit(lt[early], ly[early] + np.log1p(c * t[early]), 1)[0])
    if return_details:
        return c, a, {"crossover_time": T, "c_reference": 1.0 / T, "early_window": (float(t[early].min()),
                                                                                   float(t[early].max())),
                      "rms_log_residual": float(math.sqrt(2 * best.cost / wt.dot(wt)))}
    return c, a


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

DECAY_COLUMNS = ("t", "weighted_sup_p1", "weighted_sup_p2", "weighted_sup_p3", "l2_norm", "method")


def write_decay_csv(path, f: DecayField) -> None:
    l2 = f.l2_norm if f.l2_norm is not None else np.full(len(f.times), math.nan)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DECAY_COLUMNS)
        for i, t in enumerate(f.times):
            w.writerow([repr(float(t)), repr(float(f.weighted_sup_p1[i])), repr(float(f.weighted_sup_p2[i])),
                        repr(float(f.weighted_sup[i])), repr(float(l2[i])), f.method])


def write_fit_json(path, c_fit, exponent, epsilon, integral_lambda, extra=None) -> None:
    ref = epsilon ** 4 * integral_lambda ** 2
    rep = {"schema_version": SCHEMA_VERSION, "c_fit": c_fit, "early_exponent": exponent,
           "c_reference": ref, "ratio": c_fit / ref if ref > 0 else None}
    if extra:
        rep.update(extra)
    with open(path, "w") as fh:
        json.dump(rep, fh, indent=2, sort_keys=True)
