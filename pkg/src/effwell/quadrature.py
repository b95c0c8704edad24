"""Composite Gauss-Legendre panels, fixed or adaptive."""
from __future__ import annotations

import numpy as np

from .errors import QuadratureError

_GL = {}


def gauss_legendre(n: int):
    if n not in _GL:
        _GL[n] = np.polynomial.legendre.leggauss(n)
    return _GL[n]


def panel_nodes(edges, order: int = 10):
    """Nodes and weights of an order-``order`` rule on every panel."""
    edges = np.asarray(edges, dtype=float)
    t, w = gauss_legendre(order)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    x = (a + b) * 0.5 + half * t[None, :]
    return x.ravel(), (half * w[None, :]).ravel()


def split_edges(breaks, width: float):
    """Refine sorted breakpoints so no panel exceeds ``width``."""
    breaks = np.unique(np.asarray(breaks, dtype=float))
    out = [breaks[:1]]
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        n = max(1, int(np.ceil((hi - lo) / width - 1e-9)))
        out.append(np.linspace(lo, hi, n + 1)[1:])
    return np.concatenate(out)


def fixed_panels(f, edges, order: int = 10):
    x, w = panel_nodes(edges, order)
    return complex(np.sum(w * f(x)))


def adaptive_panels(f, edges, tol: float, order: int = 10, max_level: int = 30):
    """Bisect panels until an order-n and order-2n rule agree.

    ``f`` must accept an array of nodes.  Returns (value, error estimate).
    Raises QuadratureError with the refinement trace on failure.
    """
    pending = [(float(a), float(b), 0) for a, b in zip(edges[:-1], edges[1:])]
    total_len = float(edges[-1] - edges[0]) or 1.0
    value = 0j
    err = 0.0
    trace = []
    while pending:
        a = np.array([p[0] for p in pending])
        b = np.array([p[1] for p in pending])
        lev = np.array([p[2] for p in pending])
        e = np.stack([a, b], axis=1)
        lo = _panel_sums(f, e, order)
        hi = _panel_sums(f, e, 2 * order)
        diff = np.abs(hi - lo)
        ok = diff <= tol * (b - a) / total_len
        value += hi[ok].sum()
        err += diff[ok].sum()
        trace.append((len(pending), int((~ok).sum())))
        if np.any(~ok & (lev >= max_level)):
            raise QuadratureError("panel refinement exhausted", estimate=float(diff[~ok].max()), trace=trace)
        mid = 0.5 * (a + b)
        pending = [(a[i], mid[i], lev[i] + 1) for i in np.flatnonzero(~ok)]
        pending += [(mid[i], b[i], lev[i] + 1) for i in np.flatnonzero(~ok)]
    return complex(value), err


def _panel_sums(f, e, order):
    t, w = gauss_legendre(order)
    a, b = e[:, :1], e[:, 1:]
    half = 0.5 * (b - a)
    x = (a + b) * 0.5 + half * t[None, :]
    vals = np.asarray(f(x.ravel())).reshape(x.shape)
    return np.sum(vals * half * w[None, :], axis=1)
