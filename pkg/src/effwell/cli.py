"""Command-line experiments.

    effwell sweep        |t(k)| for V_eps and sigma_eff on a k grid, per epsilon
    effwell scaled       |t(eps^2 kappa)| against the delta-well reference
    effwell convergence  sup_k |k/t^{q_eps} - k/t^{sigma_eff}| ladder and its slope
    effwell pole         edge-pole / fd-eigenvalue table against the prediction
    effwell decay        Crank-Nicolson decay run and two-regime fit
    effwell check        hypotheses and genericity of the configured potential

Every run writes its files plus ``manifest.json`` (config hash, checksums,
wall clock per stage) into ``--out``.  Exit status: 0 pass, 2 verdict
failure, 1 execution error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, EffwellError
from .jost import SolverConfig
from .potential import (TwoScalePotential, builtin, check_hypotheses, integral_lambda_eff,
                        sigma_eff_as_potential)

SCHEMA_VERSION = 1
KINDS = ("sweep", "figure1", "figure2", "convergence", "pole_study", "decay")
COMMAND_KINDS = {"sweep": ("sweep", "figure1"), "scaled": ("figure1", "figure2", "sweep"),
                 "convergence": ("convergence",), "pole": ("pole_study",), "decay": ("decay",)}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    kind: str
    potential: dict
    epsilons: list
    k_grid: dict = field(default_factory=lambda: {"kind": "real", "start": 0.0, "stop": 1.0, "count": 21})
    solver: dict = field(default_factory=dict)
    output: str = "out"
    compare: list = field(default_factory=list)         # extra potentials (universality runs)
    guard_discs: list = field(default_factory=list)     # [{center: [re, im], radius: r}]
    decay: dict = field(default_factory=dict)
    pole: dict = field(default_factory=dict)

    FIELDS = ("kind", "potential", "epsilons", "k_grid", "solver", "output", "compare", "guard_discs",
              "decay", "pole")

    def to_dict(self) -> dict:
        return {f: copy.deepcopy(getattr(self, f)) for f in self.FIELDS}

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def solver_config(self, tol: float | None = None) -> SolverConfig:
        s = dict(self.solver)
        if tol is not None:
            s["rtol"] = tol
        return SolverConfig(**{k: s[k] for k in ("L", "h_max", "rtol", "atol") if k in s})


def _lines(node, path=()):
    """Map key paths of a composed YAML document to 1-based line numbers."""
    out = {path: node.start_mark.line + 1}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            out.update(_lines(v, path + (k.value,)))
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            out.update(_lines(v, path + (i,)))
    return out


def _potential_from(spec, field_name, line):
    if not isinstance(spec, dict):
        raise ConfigError(f"{field_name} must be a mapping", field=field_name, line=line)
    try:
        if "family" in spec:
            return builtin(spec["family"], **dict(spec.get("params") or {}))
        return TwoScalePotential.from_dict(spec)
    except EffwellError as exc:
        raise ConfigError(f"{field_name}: {exc}", field=field_name, line=line) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{field_name}: malformed potential ({exc})", field=field_name, line=line) from None


def k_grid_points(spec: dict) -> np.ndarray:
    kind = spec.get("kind", "real")
    if kind == "real":
        return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["count"])).astype(complex)
    if kind == "complex":
        re = np.linspace(*map(float, spec["re"][:2]), int(spec["re"][2]))
        im = np.linspace(*map(float, spec["im"][:2]), int(spec["im"][2]))
        return (re[None, :] + 1j * im[:, None]).ravel()
    raise ValueError(f"unknown k grid kind {kind!r}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; errors carry the offending field and line."""
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {exc}", field=None,
                          line=mark.line + 1 if mark else None) from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", field=None, line=1)
    lines = _lines(root)

    def line(*path):
        while path and path not in lines:
            path = path[:-1]
        return lines.get(path)

    unknown = set(data) - set(ExperimentConfig.FIELDS)
    if unknown:
        f = sorted(unknown)[0]
        raise ConfigError(f"unknown field '{f}'", field=f, line=line(f))
    for req in ("kind", "potential", "epsilons"):
        if req not in data:
            raise ConfigError(f"missing required field '{req}'", field=req, line=None)
    if data["kind"] not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}", field="kind", line=line("kind"))
    eps = data["epsilons"]
    if not isinstance(eps, list) or not eps:
        raise ConfigError("epsilons must be a nonempty list", field="epsilons", line=line("epsilons"))
    for i, e in enumerate(eps):
        if isinstance(e, bool) or not isinstance(e, (int, float)) or not 0 < e <= 0.5:
            raise ConfigError(f"epsilon {e!r} outside (0, 0.5]", field=f"epsilons[{i}]", line=line("epsilons", i))
    _potential_from(data["potential"], "potential", line("potential"))
    for i, c in enumerate(data.get("compare") or []):
        _potential_from(c, f"compare[{i}]", line("compare", i))
    if "k_grid" in data:
        try:
            k_grid_points(data["k_grid"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"k_grid: {exc}", field="k_grid", line=line("k_grid")) from None
    for i, g in enumerate(data.get("guard_discs") or []):
        try:
            complex(*g["center"]), float(g["radius"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError("guard disc needs center [re, im] and radius", field=f"guard_discs[{i}]",
                              line=line("guard_discs", i)) from None
    solver = data.get("solver") or {}
    bad = set(solver) - {"L", "h_max", "rtol", "atol"}
    if bad:
        f = sorted(bad)[0]
        raise ConfigError(f"unknown solver field '{f}'", field=f"solver.{f}", line=line("solver", f))
    kw = {k: data[k] for k in ExperimentConfig.FIELDS if k in data and data[k] is not None}
    kw["epsilons"] = [float(e) for e in eps]
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str = __version__
    checksums: dict = field(default_factory=dict)
    wall_clock: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)
    verdict: str = "pass"
    notes: dict = field(default_factory=dict)

    def add(self, path) -> None:
        self.checksums[Path(path).name] = sha256_file(path)

    def write(self, out_dir) -> Path:
        p = Path(out_dir) / "manifest.json"
        body = {"schema_version": SCHEMA_VERSION, **self.__dict__}
        p.write_text(json.dumps(body, indent=2, sort_keys=True, default=str) + "\n")
        return p


class _Stage:
    def __init__(self, manifest, name):
        self.m, self.name = manifest, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.m.wall_clock[self.name] = self.m.wall_clock.get(self.name, 0.0) + time.perf_counter() - self.t0


def _map(fn, args, workers):
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, args))
    return [fn(a) for a in args]


def _guarded(points, discs, scale=1.0):
    keep, skipped = [], []
    for z in points:
        hit = [d for d in discs if abs(z * scale - complex(*d["center"])) < float(d["radius"])]
        (skipped if hit else keep).append(z)
    return np.array(keep, dtype=complex), skipped


def _fmt(x) -> str:
    return repr(float(x))


def _eps_tag(e) -> str:
    return f"{e:g}".replace(".", "p")


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _sweep_task(a):
    from .scattering import transmission_sweep
    pot, eps, ks, solver = a
    P = _potential_from(pot, "potential", None)
    cfg = SolverConfig(**solver)
    real = bool(np.all(ks.imag == 0))
    res = {}
    for name, V in (("V", P.realize(eps)), ("sigma", sigma_eff_as_potential(P, eps).realize(eps))):
        res[name] = transmission_sweep(V, ks, cfg, reflection=real)
    return res


def cmd_sweep(config: ExperimentConfig, out: Path, workers=1, tol=None, manifest=None):
    from .scattering import write_csv
    cfg = config.solver_config(tol)
    ks, skipped = _guarded(k_grid_points(config.k_grid), config.guard_discs)
    manifest.skipped += [[z.real, z.imag] for z in skipped]
    solver = {k: getattr(cfg, k) for k in ("L", "h_max", "rtol", "atol")}
    with _Stage(manifest, "solve"):
        results = _map(_sweep_task, [(config.potential, e, ks, solver) for e in config.epsilons], workers)
    worst = 0.0
    with _Stage(manifest, "write"):
        for e, res in zip(config.epsilons, results):
            for name, rows in res.items():
                p = out / f"sweep_{name}_eps{_eps_tag(e)}.csv"
                write_csv(p, rows)
                manifest.add(p)
                for c in rows:
                    if c.r_plus is not None and c.k != 0:
                        worst = max(worst, abs(abs(c.t) ** 2 + abs(c.r_plus) ** 2 - 1))
    manifest.notes["max_unitarity_defect"] = worst
    return worst <= 1e-7


# ---------------------------------------------------------------------------
# scaled limit
# ---------------------------------------------------------------------------

def _scaled_task(a):
    from .scattering import scaled_transmission
    pot, eps, kap, solver = a
    P = _potential_from(pot, "potential", None)
    return np.abs(scaled_transmission(P, eps, kap, SolverConfig(**solver), guard=0.0))


def cmd_scaled(config: ExperimentConfig, out: Path, workers=1, tol=None, manifest=None):
    from .scattering import dirac_transmission
    cfg = config.solver_config(tol)
    solver = {k: getattr(cfg, k) for k in ("L", "h_max", "rtol", "atol")}
    P = _potential_from(config.potential, "potential", None)
    I = integral_lambda_eff(P) if P.modes else 0.0
    discs = list(config.guard_discs) + ([{"center": [0.0, I / 2], "radius": 1e-3}] if I > 0 else [])
    kap, skipped = _guarded(k_grid_points(config.k_grid), discs)
    if np.any(kap.real <= 0) or np.any(np.abs(kap) > 2):
        raise ConfigError("scaled runs need kappa in (0, 2]", field="k_grid", line=None)
    manifest.skipped += [[z.real, z.imag] for z in skipped]
    ref = np.abs(dirac_transmission(kap, I)) if I > 0 else np.ones(kap.size)
    pots = [config.potential] + list(config.compare)
    tasks = [(p, e, kap, solver) for p in pots for e in config.epsilons]
    with _Stage(manifest, "solve"):
        cols = _map(_scaled_task, tasks, workers)
    gaps = {}
    with _Stage(manifest, "write"):
        for ip, pot in enumerate(pots):
            block = cols[ip * len(config.epsilons):(ip + 1) * len(config.epsilons)]
            p = out / f"scaled_{ip}.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["kappa_re", "kappa_im"] + [f"abs_t_eps{e:g}" for e in config.epsilons] + ["abs_t_dirac"])
                for i, z in enumerate(kap):
                    w.writerow([_fmt(z.real), _fmt(z.imag)] + [_fmt(c[i]) for c in block] + [_fmt(ref[i])])
            manifest.add(p)
            gaps[ip] = [float(np.max(np.abs(c - ref))) if c.size else 0.0 for c in block]
    manifest.notes["sup_gap_to_reference"] = gaps
    manifest.notes["integral_lambda"] = I
    order = np.argsort(config.epsilons)[::-1]
    ok = all(all(np.diff(np.asarray(g)[order]) <= 1e-12) for g in gaps.values())
    return ok


# ---------------------------------------------------------------------------
# convergence ladder
# ---------------------------------------------------------------------------

def convergence_gap(P: TwoScalePotential, eps: float, ks, cfg: SolverConfig | None = None) -> float:
    """sup_k |k/t^{q_eps}(k) - k/t^{sigma_eff}(k)| on the given grid."""
    from .scattering import k_over_t
    a = k_over_t(P.realize(eps), ks, cfg)
    b = k_over_t(sigma_eff_as_potential(P, eps).realize(eps), ks, cfg)
    return float(np.max(np.abs(a - b)))


def _conv_task(a):
    pot, eps, ks, solver = a
    return convergence_gap(_potential_from(pot, "potential", None), eps, ks, SolverConfig(**solver))


def fit_slope(eps, gaps):
    """Least-squares slope of log gap against log eps; None when degenerate."""
    e, g = np.asarray(eps, float), np.asarray(gaps, float)
    if np.all(g == 0):
        return None
    if np.any(g <= 0):
        raise ValueError("zero gap mixed with nonzero gaps")
    return float(np.polyfit(np.log(e), np.log(g), 1)[0])


def cmd_convergence(config: ExperimentConfig, out: Path, workers=1, tol=None, manifest=None):
    eps = sorted(config.epsilons, reverse=True)
    ratios = np.asarray(eps[:-1]) / np.asarray(eps[1:])
    if len(eps) < 4 or np.ptp(ratios) > 1e-6 * ratios.mean():
        raise ConfigError("convergence needs >= 4 epsilons in geometric progression", field="epsilons", line=None)
    cfg = config.solver_config(tol)
    solver = {k: getattr(cfg, k) for k in ("L", "h_max", "rtol", "atol")}
    ks, skipped = _guarded(k_grid_points(config.k_grid), config.guard_discs)
    manifest.skipped += [[z.real, z.imag] for z in skipped]
    with _Stage(manifest, "solve"):
        gaps = _map(_conv_task, [(config.potential, e, ks, solver) for e in eps], workers)
    report = {"schema_version": SCHEMA_VERSION, "epsilons": eps, "sup_gap": gaps}
    try:
        slope = fit_slope(eps, gaps)
        report["slope"] = slope
        report["status"] = "exact_match" if slope is None else ("pass" if slope >= 2.5 else "fail")
    except ValueError as exc:
        report["slope"] = None
        report["status"] = "fail"
        report["cause"] = str(exc)
    p = out / "convergence.json"
    p.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    manifest.add(p)
    return report["status"] in ("pass", "exact_match")


# ---------------------------------------------------------------------------
# pole study
# ---------------------------------------------------------------------------

def _pole_task(a):
    from .spectrum import (fd_spectrum, find_pole_near, predicted_eigenvalue, soliton_predicted_eigenvalue)
    pot, eps, opts, solver = a
    P = _potential_from(pot, "potential", None)
    cfg = SolverConfig(**solver)
    V = P.realize(eps)
    if opts.get("prediction") == "soliton":
        pred = soliton_predicted_eigenvalue(P, eps, float(opts.get("rho", 1.0)), float(opts.get("x0", 0.0)))
    else:
        pred = predicted_eigenvalue(P, eps)
    row = {"epsilon": eps, "E_pred": pred.energy if pred.predicted else None}
    target = opts.get("target_s") or (pred.pole_s if pred.predicted else None)
    if target is None:
        row["status"] = "no_prediction"
        return row
    pole = find_pole_near(V, target, cfg)
    row.update(s=pole.s, E=pole.energy, residual=pole.residual)
    if pred.predicted:
        row["rel_error"] = abs(pole.energy / pred.energy - 1)
    if opts.get("fd", True):
        L = max(20.0, 10.0 / pole.s)
        n = max(2000, int(math.ceil(2 * L / (eps / 40))))
        fd = fd_spectrum(V, L, n)
        if fd.eigenvalues:
            j = int(np.argmin(np.abs(np.asarray(fd.eigenvalues) - pole.energy)))
            row.update(E_fd=fd.eigenvalues[j], fd_grid_error=fd.grid_error[j],
                       fd_match=abs(fd.eigenvalues[j] - pole.energy) <= max(1e-6, 2 * fd.grid_error[j]))
        else:
            row.update(E_fd=None, fd_match=False)
    return row


def cmd_pole(config: ExperimentConfig, out: Path, workers=1, tol=None, manifest=None):
    cfg = config.solver_config(tol)
    solver = {k: getattr(cfg, k) for k in ("L", "h_max", "rtol", "atol")}
    eps = sorted(config.epsilons, reverse=True)
    with _Stage(manifest, "solve"):
        rows = _map(_pole_task, [(config.potential, e, dict(config.pole), solver) for e in eps], workers)
    errs = [r.get("rel_error") for r in rows if r.get("rel_error") is not None]
    ok = bool(errs) and all(b <= a for a, b in zip(errs, errs[1:])) and errs[-1] <= 0.5
    ok = ok and all(r.get("fd_match", True) for r in rows)
    if config.pole.get("expect_s") is not None:
        ok = all(abs(r["s"] - float(config.pole["expect_s"])) <= 1e-6 for r in rows if "s" in r)
    p = out / "pole_study.json"
    p.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "rows": rows, "pass": ok}, indent=2,
                            sort_keys=True, default=float) + "\n")
    manifest.add(p)
    return ok


# ---------------------------------------------------------------------------
# decay
# ---------------------------------------------------------------------------

def cmd_decay(config: ExperimentConfig, out: Path, workers=1, tol=None, manifest=None):
    from .timedecay import (decay_metrics, evolve_crank_nicolson, fit_crossover, gaussian, prepare_state,
                            run_length, write_decay_csv, write_fit_json)
    d = {"t_max": 300.0, "sigma": 0.5, "dx_per_eps": 1 / 20, "n_times": 61, "t_min": 1.0}
    d.update(config.decay)
    P = _potential_from(config.potential, "potential", None)
    I = integral_lambda_eff(P) if P.modes else 0.0
    ok = True
    for eps in config.epsilons:
        V = P.realize(eps)
        with _Stage(manifest, f"prepare_eps{eps:g}"):
            L = run_length(float(d["t_max"]), L_potential=V.support_radius)
            state = prepare_state(V, gaussian(float(d["sigma"])), L, eps * float(d["dx_per_eps"]))
        times = np.concatenate([[0.0], np.geomspace(float(d["t_min"]), float(d["t_max"]), int(d["n_times"]))])
        with _Stage(manifest, f"evolve_eps{eps:g}"):
            f = evolve_crank_nicolson(V, state, times)
        p = out / f"decay_eps{_eps_tag(eps)}.csv"
        write_decay_csv(p, f)
        manifest.add(p)
        c, a, det = fit_crossover(decay_metrics(f), eps, I, return_details=True)
        ref = eps ** 4 * I ** 2
        verdict = bool(abs(a + 0.5) <= 0.05 and ref > 0 and 1 / 3 <= c / ref <= 3)
        ok &= verdict
        q = out / f"decay_fit_eps{_eps_tag(eps)}.json"
        write_fit_json(q, c, a, eps, I, {"pass": verdict, "box_half_length": L, **det,
                                         "cn": {k: v for k, v in f.diagnostics.items()}})
        manifest.add(q)
    return ok


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def cmd_check(config: ExperimentConfig, out: Path, workers=1, tol=None, manifest=None):
    from .scattering import genericity_indicator
    P = _potential_from(config.potential, "potential", None)
    rep = check_hypotheses(P)
    rows = []
    for eps in config.epsilons:
        g = genericity_indicator(P.realize(eps), config.solver_config(tol))
        rows.append({"epsilon": eps, "i0_re": g.i0.real, "i0_im": g.i0.imag, "abs_t_small_k": g.abs_t,
                     "generic": g.generic})
    again = parse_config(config.to_yaml())
    body = {"schema_version": SCHEMA_VERSION, "hypotheses": rep.__dict__, "genericity": rows,
            "integral_lambda": integral_lambda_eff(P) if P.modes else 0.0,
            "config_round_trip": again.to_dict() == config.to_dict()}
    p = out / "check.json"
    p.write_text(json.dumps(body, indent=2, sort_keys=True, default=str) + "\n")
    manifest.add(p)
    return bool(rep.theta_ok and rep.reality_ok and body["config_round_trip"])


COMMANDS = {"sweep": cmd_sweep, "scaled": cmd_scaled, "convergence": cmd_convergence, "pole": cmd_pole,
            "decay": cmd_decay, "check": cmd_check}


def run(command: str, config: ExperimentConfig, out=None, workers: int = 1, tol: float | None = None):
    """Run one experiment; returns (passed, manifest)."""
    out = Path(out or config.output)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config.hash())
    (out / "config.yaml").write_text(config.to_yaml())
    with _Stage(manifest, "total"):
        ok = COMMANDS[command](config, out, workers=workers, tol=tol, manifest=manifest)
    manifest.verdict = "pass" if ok else "fail"
    manifest.write(out)
    return ok, manifest


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="effwell", description="Two-scale scattering experiments.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--workers", type=int, default=1, metavar="N")
        sp.add_argument("--tol", type=float, metavar="X", help="relative tolerance of the Jost solver")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1", field="--workers", line=None)
        ok, manifest = run(args.command, config, args.out, args.workers, args.tol)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (EffwellError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"{args.command}: {manifest.verdict} ({manifest.wall_clock.get('total', 0.0):.1f} s)")
    return 0 if ok else 2


if __name__ == "__main__":
    sys.exit(main())
