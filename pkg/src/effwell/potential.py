"""Two-scale potentials V(x, x/eps) and the effective well built from them.

A potential is a slowly varying background ``q_av`` plus finitely many fast
Fourier modes ``q_j(x) exp(2 pi i lambda_j x / eps)``.  Every coefficient is a
*profile*: a small immutable object that evaluates a real envelope on numpy
arrays and knows its support, decay rate and jump locations.  Profiles are
plain frozen dataclasses, so potentials pickle cleanly into worker processes
and serialise to config dictionaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import ConstructionError, PotentialEvaluationError, QuadratureError

FOUR_PI2 = 4.0 * math.pi ** 2
TRUNC_TOL = 1e-14
DIFF_STEP = 1e-4


# ---------------------------------------------------------------------------
# slow profiles
# ---------------------------------------------------------------------------

class Profile:
    """Real envelope g(x).  Subclasses implement ``_eval``."""

    name = "abstract"
    compact = True

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self._eval(x)

    def _eval(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    @property
    def support_radius(self) -> float:
        return 0.0

    @property
    def breakpoints(self) -> tuple:
        return ()

    @property
    def decay(self) -> float:
        """Exponential decay rate (inf for compact or super-exponential)."""
        return math.inf

    def derivative(self, x, order: int = 1):
        """Central differences at step 1e-4; subclasses may override."""
        x = np.asarray(x, dtype=float)
        h = DIFF_STEP
        if order == 0:
            return self(x)
        if order == 1:
            return (self(x + h) - self(x - h)) / (2 * h)
        if order == 2:
            return (self(x + h) - 2 * self(x) + self(x - h)) / h ** 2
        if order == 3:
            return (self(x + 2 * h) - 2 * self(x + h) + 2 * self(x - h) - self(x - 2 * h)) / (2 * h ** 3)
        raise ValueError("derivative order must be 0..3")

    def to_dict(self) -> dict:
        d = {"name": self.name}
        d.update({k: getattr(self, k) for k in self.__dataclass_fields__})  # type: ignore[attr-defined]
        return d


@dataclass(frozen=True)
class Zero(Profile):
    name = "zero"

    def _eval(self, x):
        return np.zeros_like(x)

    def derivative(self, x, order=1):
        return np.zeros_like(np.asarray(x, dtype=float))


def _bump(u):
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(-ui * ui / (1.0 - ui * ui))
    return out


@dataclass(frozen=True)
class Bump(Profile):
    """A * exp(-u^2/(1-u^2)) for |u| < 1, u = (x - center)/width."""

    A: float = 1.0
    center: float = 0.0
    width: float = 1.0
    name = "bump"

    def __post_init__(self):
        if not (self.width > 0 and math.isfinite(self.A) and math.isfinite(self.center)):
            raise ConstructionError(f"bad bump parameters {self}")

    def _eval(self, x):
        return self.A * _bump((x - self.center) / self.width)

    @property
    def support_radius(self):
        return abs(self.center) + self.width

    @property
    def breakpoints(self):
        return (self.center - self.width, self.center + self.width)


@dataclass(frozen=True)
class DoubleBump(Profile):
    """Two half-width bumps filling [-1, 0] and [0, 1], scaled by A."""

    A: float = 1.0
    name = "double_bump"

    def __post_init__(self):
        if not math.isfinite(self.A):
            raise ConstructionError("double bump amplitude must be finite")

    def _eval(self, x):
        return self.A * (_bump(2 * x + 1) + _bump(2 * x - 1))

    @property
    def support_radius(self):
        return 1.0

    @property
    def breakpoints(self):
        return (-1.0, 0.0, 1.0)


def _sech(u):
    a = np.exp(-np.abs(u))
    return 2 * a / (1 + a * a)


@dataclass(frozen=True)
class SechWell(Profile):
    """One-soliton well -2 rho^2 sech^2(rho (x - x0))."""

    rho: float = 1.0
    x0: float = 0.0
    name = "sech_well"
    compact = False

    def __post_init__(self):
        if not (self.rho > 0 and math.isfinite(self.x0)):
            raise ConstructionError("soliton needs rho > 0 and finite x0")

    def _eval(self, x):
        s = _sech(self.rho * (x - self.x0))
        return -2 * self.rho ** 2 * s * s

    def derivative(self, x, order=1):
        x = np.asarray(x, dtype=float)
        r = self.rho
        u = r * (x - self.x0)
        s = _sech(u) ** 2
        T = np.tanh(u)
        if order == 0:
            return -2 * r ** 2 * s
        if order == 1:
            return 4 * r ** 3 * s * T
        if order == 2:
            return 4 * r ** 4 * (s * s - 2 * s * T * T)
        if order == 3:
            return 16 * r ** 5 * (s * T ** 3 - 2 * s * s * T)
        raise ValueError("derivative order must be 0..3")

    @property
    def support_radius(self):
        # 8 rho^2 exp(-2 rho R) <= TRUNC_TOL
        return abs(self.x0) + math.log(8 * self.rho ** 2 / TRUNC_TOL) / (2 * self.rho)

    @property
    def decay(self):
        return 2 * self.rho


@dataclass(frozen=True)
class SquareWell(Profile):
    """-depth on |x - center| <= width/2."""

    depth: float = 1.0
    width: float = 2.0
    center: float = 0.0
    name = "square_well"

    def __post_init__(self):
        if not (self.width > 0 and math.isfinite(self.depth) and math.isfinite(self.center)):
            raise ConstructionError("square well needs width > 0 and finite depth")

    def _eval(self, x):
        return np.where(np.abs(x - self.center) <= 0.5 * self.width, -self.depth, 0.0)

    @property
    def support_radius(self):
        return abs(self.center) + 0.5 * self.width

    @property
    def breakpoints(self):
        return (self.center - 0.5 * self.width, self.center + 0.5 * self.width)


@dataclass(frozen=True)
class Gaussian(Profile):
    A: float = 1.0
    center: float = 0.0
    width: float = 1.0
    name = "gaussian"
    compact = False

    def __post_init__(self):
        if not (self.width > 0 and math.isfinite(self.A)):
            raise ConstructionError("gaussian needs width > 0")

    def _eval(self, x):
        return self.A * np.exp(-0.5 * ((x - self.center) / self.width) ** 2)

    @property
    def support_radius(self):
        if self.A == 0:
            return 0.0
        return abs(self.center) + self.width * math.sqrt(2 * max(math.log(abs(self.A) / TRUNC_TOL), 0.0))


@dataclass(frozen=True)
class Combination(Profile):
    """Linear combination sum_i c_i g_i(x) of other profiles."""

    terms: tuple = ()
    name = "combination"

    def _eval(self, x):
        out = np.zeros_like(x)
        for c, g in self.terms:
            out = out + c * g(x)
        return out

    def derivative(self, x, order=1):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for c, g in self.terms:
            out = out + c * g.derivative(x, order)
        return out

    @property
    def compact(self):
        return all(g.compact for _, g in self.terms)

    @property
    def support_radius(self):
        return max((g.support_radius for _, g in self.terms), default=0.0)

    @property
    def breakpoints(self):
        return tuple(sorted({b for _, g in self.terms for b in g.breakpoints}))

    @property
    def decay(self):
        return min((g.decay for _, g in self.terms), default=math.inf)

    def to_dict(self):
        return {"name": self.name, "terms": [[c, g.to_dict()] for c, g in self.terms]}


@dataclass(frozen=True)
class LambdaProfile(Profile):
    """Lambda_eff(x) = (1/4 pi^2) sum_j |q_j(x)|^2 / lambda_j^2."""

    modes: tuple = ()
    name = "lambda_eff"

    def _eval(self, x):
        out = np.zeros_like(x)
        for m in self.modes:
            g = m.profile(x)
            out = out + (abs(m.coeff) ** 2 / m.lam ** 2) * g * g
        return out / FOUR_PI2

    @property
    def compact(self):
        return all(m.profile.compact for m in self.modes)

    @property
    def support_radius(self):
        return max((m.profile.support_radius for m in self.modes), default=0.0)

    @property
    def breakpoints(self):
        return tuple(sorted({b for m in self.modes for b in m.profile.breakpoints}))

    @property
    def decay(self):
        return 2 * min((m.profile.decay for m in self.modes), default=math.inf)

    def to_dict(self):
        return {"name": self.name, "modes": [m.to_dict() for m in self.modes]}


PROFILE_TYPES = {
    cls.name: cls for cls in (Zero, Bump, DoubleBump, SechWell, SquareWell, Gaussian)
}


def profile_from_dict(d: dict) -> Profile:
    d = dict(d)
    try:
        name = d.pop("name")
    except KeyError:
        raise ConstructionError("profile entry needs a 'name'") from None
    if name == "combination":
        return Combination(tuple((float(c), profile_from_dict(g)) for c, g in d["terms"]))
    if name == "lambda_eff":
        return LambdaProfile(tuple(Mode.from_dict(m) for m in d["modes"]))
    cls = PROFILE_TYPES.get(name)
    if cls is None:
        raise ConstructionError(f"unknown amplitude function '{name}'")
    try:
        return cls(**{k: float(v) for k, v in d.items()})
    except TypeError as exc:
        raise ConstructionError(f"bad parameters for '{name}': {exc}") from None


# ---------------------------------------------------------------------------
# modes and potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mode:
    """Fast mode q_j(x) exp(2 pi i lam y) with q_j = coeff * profile."""

    j: int
    lam: float
    coeff: complex
    profile: Profile

    def __post_init__(self):
        if self.j == 0 or self.lam == 0:
            raise ConstructionError("mode label and frequency must be nonzero")

    def q(self, x):
        return self.coeff * self.profile(x)

    def to_dict(self):
        c = complex(self.coeff)
        return {"j": int(self.j), "lambda": float(self.lam), "coeff": [c.real, c.imag],
                "profile": self.profile.to_dict()}

    @classmethod
    def from_dict(cls, d):
        c = d.get("coeff", 1.0)
        if isinstance(c, (list, tuple)):
            c = complex(float(c[0]), float(c[1]))
        return cls(int(d["j"]), float(d["lambda"]), complex(c), profile_from_dict(d["profile"]))


def _separation(modes) -> float:
    lams = [m.lam for m in modes]
    if not lams:
        return math.inf
    gaps = [abs(l) for l in lams]
    gaps += [abs(a - b) for i, a in enumerate(lams) for b in lams[i + 1:]]
    return min(gaps)


@dataclass(frozen=True)
class TwoScalePotential:
    """V(x, y) = q_av(x) + sum_j q_j(x) exp(2 pi i lambda_j y)."""

    q_av: Profile
    modes: tuple = ()
    theta: float = math.inf
    beta: float = math.inf
    support_radius: float = 0.0

    @classmethod
    def build(cls, q_av: Profile, modes: Sequence[Mode] = (), theta: float | None = None):
        modes = tuple(modes)
        profiles = [q_av] + [m.profile for m in modes]
        sep = _separation(modes)
        if theta is None:
            theta = sep if math.isfinite(sep) else 1.0
        beta = min(p.decay for p in profiles)
        radius = max(p.support_radius for p in profiles)
        return cls(q_av, modes, float(theta), float(beta), float(radius))

    @property
    def compact(self) -> bool:
        return self.q_av.compact and all(m.profile.compact for m in self.modes)

    @property
    def breakpoints(self) -> tuple:
        pts = set(self.q_av.breakpoints)
        for m in self.modes:
            pts.update(m.profile.breakpoints)
        return tuple(sorted(pts))

    @property
    def paired(self) -> bool:
        return _pairing_ok(self.modes)

    def realize(self, epsilon: float) -> "RealizedPotential":
        return RealizedPotential(self, float(epsilon))

    def to_dict(self) -> dict:
        return {"q_av": self.q_av.to_dict(), "modes": [m.to_dict() for m in self.modes],
                "theta": self.theta}

    @classmethod
    def from_dict(cls, d: dict) -> "TwoScalePotential":
        q_av = profile_from_dict(d.get("q_av", {"name": "zero"}))
        modes = [Mode.from_dict(m) for m in d.get("modes", [])]
        return cls.build(q_av, modes, d.get("theta"))


def _pairing_ok(modes) -> bool:
    for m in modes:
        partner = [p for p in modes if p.j == -m.j]
        if len(partner) != 1:
            return False
        p = partner[0]
        if p.lam != -m.lam or p.profile != m.profile or complex(p.coeff) != complex(m.coeff).conjugate():
            return False
    return len({m.j for m in modes}) == len(modes)


class RealizedPotential:
    """V_eps(x) = V(x, x/eps) as a fast real callable for the solvers."""

    def __init__(self, P: TwoScalePotential, epsilon: float):
        if P.modes and not epsilon > 0:
            raise ConstructionError("epsilon must be positive")
        self.P = P
        self.epsilon = epsilon
        self.support_radius = P.support_radius
        self.compact = P.compact
        self.breakpoints = P.breakpoints
        self.beta = P.beta
        self.eps_hint = epsilon if P.modes else 0.0
        self._paired = P.paired
        self._pos = [m for m in P.modes if m.j > 0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if not self._paired:
            return eval_total(self.P, self.epsilon, x)
        v = self.P.q_av(x)
        for m in self._pos:
            ph = (2 * math.pi * m.lam / self.epsilon) * x
            c = complex(m.coeff)
            v = v + 2 * m.profile(x) * (c.real * np.cos(ph) - c.imag * np.sin(ph))
        return v

    def _samples(self):
        R = max(self.support_radius, 1.0)
        h = min(self.epsilon / 40, 1e-3) if self.eps_hint > 0 else 1e-3
        return np.linspace(-R, R, int(2 * R / h) + 1)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self(self._samples()))))

    def weighted_sup(self) -> float:
        """sup e^{beta|x|} |V(x)| (beta = 1 for compact potentials)."""
        beta = self.beta if math.isfinite(self.beta) else 1.0
        xs = self._samples()
        return float(np.max(np.exp(beta * np.abs(xs)) * np.abs(self(xs))))

    def __repr__(self):
        return f"RealizedPotential(eps={self.epsilon}, modes={len(self.P.modes)})"


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def mode_sum(P: TwoScalePotential, x, y):
    """Complex two-scale mode sum q(x, y) with x and y independent."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape, dtype=complex)
    for m in P.modes:
        out = out + m.q(x) * np.exp(2j * math.pi * m.lam * y)
    return out


def eval_total(P: TwoScalePotential, epsilon: float, x):
    """q_av(x) + sum_j q_j(x) exp(2 pi i lambda_j x / eps), real."""
    if not epsilon > 0:
        raise ConstructionError("epsilon must be positive")
    xa = np.asarray(x, dtype=float)
    avg = P.q_av(xa)
    s = np.zeros(xa.shape, dtype=complex)
    scale = np.zeros(xa.shape)
    for m in P.modes:
        q = m.q(xa)
        s = s + q * np.exp(2j * math.pi * m.lam * xa / epsilon)
        scale = scale + np.abs(q)
    bad = ~(np.isfinite(avg) & np.isfinite(s))
    if np.any(bad):
        where = xa[bad].ravel()[0] if xa.ndim else float(xa)
        raise PotentialEvaluationError(f"non-finite coefficient at x={where}", x=float(where))
    excess = np.abs(s.imag) > 1e-12 * (1 + scale)
    if np.any(excess):
        where = xa[excess].ravel()[0] if xa.ndim else float(xa)
        raise PotentialEvaluationError(f"mode sum not real at x={where}", x=float(where))
    out = avg + s.real
    return float(out) if np.ndim(out) == 0 else out


def lambda_eff(P: TwoScalePotential, x):
    out = LambdaProfile(P.modes)(x)
    return float(out) if np.ndim(out) == 0 else out


def _quad_edges(prof: Profile, radius: float):
    pts = [-radius, radius] + [b for b in prof.breakpoints if -radius < b < radius]
    if prof.support_radius > 0 and not prof.compact:
        pts += list(np.linspace(-radius, radius, 9))
    return np.unique(pts)


def integrate_profile(g: Callable, edges, tol: float = 1e-10, limit: int = 400) -> float:
    """Adaptive (QUADPACK) integral of g over consecutive edge intervals."""
    total, err = 0.0, 0.0
    n = max(len(edges) - 1, 1)
    for a, b in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(lambda t: float(g(np.array(t))), a, b,
                                epsabs=tol / n, epsrel=0.0, limit=limit)
        total += val
        err += e
    if err > tol:
        raise QuadratureError(f"quadrature error estimate {err:.3e} above tol {tol:.1e}", estimate=err)
    return total


def integral_lambda_eff(P: TwoScalePotential, tol: float = 1e-10) -> float:
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not P.modes:
        return 0.0
    lam = LambdaProfile(P.modes)
    R = lam.support_radius
    return integrate_profile(lam, _quad_edges(lam, R), tol)


@dataclass(frozen=True)
class EffectivePotential:
    lambda_eff: LambdaProfile
    epsilon: float
    integral_lambda: float

    def sigma(self, x):
        return -self.epsilon ** 2 * self.lambda_eff(x)


def effective_potential(P: TwoScalePotential, epsilon: float, tol: float = 1e-10) -> EffectivePotential:
    return EffectivePotential(LambdaProfile(P.modes), float(epsilon), integral_lambda_eff(P, tol))


def sigma_eff_as_potential(P: TwoScalePotential, epsilon: float) -> TwoScalePotential:
    """Homogenised background q_av - eps^2 Lambda_eff, no fast modes."""
    if not epsilon > 0:
        raise ConstructionError("epsilon must be positive")
    if not P.modes:
        return TwoScalePotential.build(P.q_av)
    q = Combination(((1.0, P.q_av), (-float(epsilon) ** 2, LambdaProfile(P.modes))))
    return TwoScalePotential.build(q)


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

def cosine_modes(profile: Profile, lam: float = 1.0, j: int = 1) -> tuple:
    """Modes of profile(x) * cos(2 pi lam y)."""
    return (Mode(j, lam, 0.5 + 0j, profile), Mode(-j, -lam, 0.5 + 0j, profile))


def _micro(kind, A, center=0.0, lam=1.0):
    if kind in (None, "none"):
        return ()
    if kind == "bump_cosine":
        return cosine_modes(Bump(A, center, 1.0), lam)
    if kind == "double_bump":
        return cosine_modes(DoubleBump(A), lam)
    raise ConstructionError(f"unknown microstructure '{kind}'")


FAMILIES = ("zero", "bump_cosine", "double_bump", "soliton", "square_well")


def builtin(family: str, **params) -> TwoScalePotential:
    """Named potential families.

    zero          V = 0
    bump_cosine   A exp(-x^2/(1-x^2)) cos(2 pi lam y) on [-1, 1]   (A=10, lam=1, center=0)
    double_bump   two half-bumps on [-1,0], [0,1] times cos(2 pi lam y)   (A=10, lam=1)
    soliton       -2 rho^2 sech^2(rho (x-x0)), optional micro=bump_cosine|double_bump, A
    square_well   -depth on a window of given width, optional micro as above
    """
    p = dict(params)
    try:
        if family == "zero":
            P = TwoScalePotential.build(Zero())
        elif family == "bump_cosine":
            A = float(p.pop("A", 10.0))
            lam = float(p.pop("lam", 1.0))
            center = float(p.pop("center", 0.0))
            P = TwoScalePotential.build(Zero(), cosine_modes(Bump(A, center, 1.0), lam))
        elif family == "double_bump":
            A = float(p.pop("A", 10.0))
            lam = float(p.pop("lam", 1.0))
            P = TwoScalePotential.build(Zero(), cosine_modes(DoubleBump(A), lam))
        elif family == "soliton":
            rho = float(p.pop("rho", 1.0))
            x0 = float(p.pop("x0", 0.0))
            micro = p.pop("micro", None)
            A = float(p.pop("A", 10.0))
            mc = float(p.pop("micro_center", x0))
            P = TwoScalePotential.build(SechWell(rho, x0), _micro(micro, A, mc))
        elif family == "square_well":
            depth = float(p.pop("depth", 1.0))
            width = float(p.pop("width", 2.0))
            micro = p.pop("micro", None)
            A = float(p.pop("A", 10.0))
            P = TwoScalePotential.build(SquareWell(depth, width), _micro(micro, A))
        else:
            raise ConstructionError(f"unknown family '{family}'; expected one of {FAMILIES}")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConstructionError):
            raise
        raise ConstructionError(f"bad parameters for {family}: {exc}") from None
    if p:
        raise ConstructionError(f"unused parameters for {family}: {sorted(p)}")
    return P


# ---------------------------------------------------------------------------
# hypothesis checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisReport:
    exp_norm: float
    alg_norm: float
    theta_ok: bool
    reality_ok: bool
    notes: tuple = field(default_factory=tuple)


def _weighted_norms(g: Profile, xs, orders, beta_w, gamma):
    wexp = np.exp(beta_w * np.abs(xs))
    walg = (1 + np.abs(xs)) ** gamma
    sup, l1 = 0.0, 0.0
    for o in orders:
        d = np.abs(g.derivative(xs, o)) if o else np.abs(g(xs))
        sup += float(np.max(wexp * d))
        l1 += float(np.trapezoid(walg * d, xs))
    return sup, l1


def check_hypotheses(P: TwoScalePotential, n_samples: int = 40001) -> HypothesisReport:
    """Norm estimates by sampling coefficients and their first derivatives.

    The exponential weight uses beta from P when finite and 1 otherwise
    (compact coefficients decay at every rate).
    """
    notes = []
    beta_w = P.beta if math.isfinite(P.beta) else 1.0
    R = max(P.support_radius, 1e-3)
    xs = np.linspace(-R, R, n_samples)
    e0, a0 = _weighted_norms(P.q_av, xs, (0, 1), beta_w, 2)
    exp_norm, alg_norm = e0, a0
    for m in P.modes:
        e, a = _weighted_norms(m.profile, xs, (0, 1, 2, 3), beta_w, 3)
        exp_norm += abs(m.coeff) * e
        alg_norm += abs(m.coeff) * a
    labels = [m.j for m in P.modes]
    sep = _separation(P.modes)
    theta_ok = len(set(labels)) == len(labels) and sep >= P.theta * (1 - 1e-12)
    reality_ok = _pairing_ok(P.modes)
    if not reality_ok:
        notes.append("conjugate pairing violated: V(x, y) is not real")
    if not (math.isfinite(exp_norm) and math.isfinite(alg_norm)):
        notes.append("non-finite norm estimate")
    return HypothesisReport(exp_norm, alg_norm, theta_ok, reality_ok, tuple(notes))
