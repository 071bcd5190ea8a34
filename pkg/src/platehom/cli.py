"""Command line driver: effective quantities, gamma sweeps, verification, energies.

Usage::

    python3 -m platehom effective --config run.json --out result.json
    python3 -m platehom sweep --config sweep.json --out sweep.csv --threads 2
    python3 -m platehom verify [--config verify.json] [--out report.json]
    python3 -m platehom energy --config energy.json

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 solver failure.

Configuration (JSON, validated against ``CONFIG_SCHEMA``)::

    {
      "material": "laminate" | "wood" | "wood-narrow" | "iso" | {"preset": ...} | {"regions": [...]},
      "prestrain": null | "hydrostatic-bottom" | {"type": "layered", "layers": [...]}
                   | {"type": "from-corrector"} | ...,
      "grid": [n1, n2, n3],
      "gammas": [g, ...] | {"values": [...], "powers_of_two": [k0, k1]},
      "regimes": {"zero": false, "infinity": true},
      "basis": "canonical" | {"rotated": angle},
      "solver": {"method": "direct" | "pcg", "tol": 1e-12, "maxiter": 100000,
                 "infinity": "slices" | "finite-limit", "fourier_modes": [N1, N2]},
      "reference": "exact" | "finite-limit" | "largest-gamma",
      "energy": {"regime": "inf", "samples": [{"weight": w, "curvature": [[a, b], [b, c]]}]},
      "verify": {"seed": 0, "tolerance": null, "inject_skewed_material": false},
      "reproducible": false
    }
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

CONFIG_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "platehom run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "material": {"oneOf": [{"type": "string"}, {"type": "object"}]},
        "prestrain": {"oneOf": [{"type": "null"}, {"type": "string"}, {"type": "object"}]},
        "grid": {"type": "array", "items": {"type": "integer", "minimum": 2},
                 "minItems": 3, "maxItems": 3},
        "gammas": {"oneOf": [
            {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            {"type": "object", "additionalProperties": False, "properties": {
                "values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "powers_of_two": {"type": "array", "items": {"type": "integer"},
                                  "minItems": 2, "maxItems": 2}}}]},
        "regimes": {"type": "object", "additionalProperties": False, "properties": {
            "zero": {"type": "boolean"}, "infinity": {"type": "boolean"}}},
        "basis": {"oneOf": [{"const": "canonical"},
                            {"type": "object", "required": ["rotated"], "additionalProperties": False,
                             "properties": {"rotated": {"type": "number"}}}]},
        "solver": {"type": "object", "additionalProperties": False, "properties": {
            "method": {"enum": ["direct", "pcg"]},
            "tol": {"type": "number", "exclusiveMinimum": 0},
            "maxiter": {"type": "integer", "minimum": 1},
            "infinity": {"enum": ["slices", "finite-limit"]},
            "fourier_modes": {"type": "array", "items": {"type": "integer", "minimum": 0},
                              "minItems": 2, "maxItems": 2}}},
        "reference": {"enum": ["exact", "finite-limit", "largest-gamma"]},
        "energy": {"type": "object", "additionalProperties": False, "properties": {
            "regime": {"type": ["string", "number"]},
            "samples": {"type": "array", "minItems": 1, "items": {
                "type": "object", "required": ["weight", "curvature"], "additionalProperties": False,
                "properties": {"weight": {"type": "number", "minimum": 0},
                               "curvature": {"type": "array", "minItems": 2, "maxItems": 2,
                                             "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                                       "items": {"type": "number"}}}}}}}},
        "verify": {"type": "object", "additionalProperties": False, "properties": {
            "seed": {"type": "integer"},
            "tolerance": {"type": ["number", "null"]},
            "inject_skewed_material": {"type": "boolean"}}},
        "output": {"type": "string"},
        "reproducible": {"type": "boolean"},
    },
}


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config

@dataclass
class RunConfig:
    material: Any = "laminate"
    prestrain: Any = None
    grid: tuple[int, int, int] = (8, 2, 8)
    gammas: list[float] = field(default_factory=list)
    zero: bool = False
    infinity: bool = False
    basis: Any = "canonical"
    solver: dict = field(default_factory=dict)
    reference: str = "exact"
    energy: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    output: str | None = None
    reproducible: bool = False
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        _validate_schema(doc)
        gam = _gamma_list(doc.get("gammas", []))
        regimes = doc.get("regimes", {})
        grid = tuple(int(n) for n in doc.get("grid", (8, 2, 8)))
        return cls(material=doc.get("material", "laminate"), prestrain=doc.get("prestrain"),
                   grid=grid, gammas=gam, zero=bool(regimes.get("zero", False)),
                   infinity=bool(regimes.get("infinity", False)), basis=doc.get("basis", "canonical"),
                   solver=dict(doc.get("solver", {})), reference=doc.get("reference", "exact"),
                   energy=dict(doc.get("energy", {})), verify=dict(doc.get("verify", {})),
                   output=doc.get("output"), reproducible=bool(doc.get("reproducible", False)),
                   raw=doc)

    def solver_options(self) -> dict:
        s = self.solver
        opts = {"solver": s.get("method", "direct"), "tol": float(s.get("tol", 1e-12)),
                "maxiter": int(s.get("maxiter", 100_000)), "infinity": s.get("infinity", "slices")}
        if "fourier_modes" in s:
            opts["n_modes"] = tuple(int(n) for n in s["fourier_modes"])
        return opts


def _validate_schema(doc) -> None:
    import jsonschema
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {path}: {exc.message}") from None


def _gamma_list(spec) -> list[float]:
    if isinstance(spec, dict):
        vals = [float(v) for v in spec.get("values", [])]
        if "powers_of_two" in spec:
            k0, k1 = spec["powers_of_two"]
            vals += [2.0 ** k for k in range(int(k0), int(k1) + 1)]
        vals = sorted(set(vals))
    else:
        vals = [float(v) for v in spec]
    for v in vals:
        if not (v > 0 and math.isfinite(v)):
            raise ConfigError("gamma values must be positive and finite")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError("gamma values must be strictly increasing")
    return vals


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig.from_dict({})
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path!r} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path!r}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return RunConfig.from_dict(doc)


# ------------------------------------------------------------ construction

def _basis(spec):
    from .material import CANONICAL_BASIS, SymBasis
    if spec == "canonical":
        return CANONICAL_BASIS
    return SymBasis.rotated(float(spec["rotated"]))


def _build(cfg: RunConfig):
    """Material, grid and prestrain; every failure here is a configuration error."""
    from .cell import build_grid
    from .material import build_material_field, build_prestrain_field
    try:
        mat = build_material_field(cfg.material)
        pre_spec = cfg.prestrain
        kind = pre_spec.get("type") if isinstance(pre_spec, dict) else pre_spec
        static = None if kind in (None, "from-corrector") else build_prestrain_field(pre_spec)
        grid = build_grid(*cfg.grid, mat, static)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot build material, prestrain or grid: {exc}") from None
    if kind == "from-corrector":
        try:
            pre = build_prestrain_field(pre_spec, grid)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad from-corrector prestrain: {exc}") from None
    else:
        pre = static
    return mat, grid, pre


def _regimes(cfg: RunConfig) -> list:
    from .corrector import GammaRegime
    out = []
    if cfg.zero:
        out.append(GammaRegime.zero())
    out += [GammaRegime.finite(g) for g in cfg.gammas]
    if cfg.infinity or not out:
        out.append(GammaRegime.infinity())
    return out


def _compute(grid, regime, prestrain, basis, opts):
    from .effective import compute_effective
    if regime.kind == "zero":
        opts = {k: v for k, v in opts.items() if k != "infinity"}
        if opts.get("solver") == "pcg":
            opts["solver"] = "direct"
    else:
        opts = {k: v for k, v in opts.items() if k != "n_modes"}
    return compute_effective(grid, regime, prestrain, basis, **opts)


def _map_ordered(fn: Callable, items: list, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _clean(obj, reproducible: bool):
    """JSON-ready copy; drops wall-clock entries when reproducible output is requested."""
    if isinstance(obj, dict):
        return {k: _clean(v, reproducible) for k, v in obj.items()
                if not (reproducible and k in ("seconds", "elapsed"))}
    if isinstance(obj, (list, tuple)):
        return [_clean(v, reproducible) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist(), reproducible)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _dumps(doc, reproducible: bool) -> str:
    return json.dumps(_clean(doc, reproducible), indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None) -> None:
    """Atomic write (or stdout); nothing is written unless the run succeeded."""
    if out is None:
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(out))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".platehom-")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, out)


# ---------------------------------------------------------------- commands

def run_effective(cfg: RunConfig, threads: int = 1) -> dict:
    _, grid, pre = _build(cfg)
    basis = _basis(cfg.basis)
    opts = cfg.solver_options()
    t0 = time.perf_counter()
    results = _map_ordered(lambda r: _compute(grid, r, pre, basis, opts), _regimes(cfg), threads)
    return {
        "material": grid.field.name,
        "grid": {"shape": list(grid.shape), "y1": grid.y1, "y2": grid.y2, "x3": grid.x3},
        "prestrain": None if pre is None else pre.name,
        "results": [r.to_dict() for r in results],
        "elapsed": time.perf_counter() - t0,
    }


SWEEP_COLUMNS = ["gamma", "qhat_11", "qhat_12", "qhat_13", "qhat_22", "qhat_23", "qhat_33",
                 "beff_1", "beff_2", "beff_3", "ires", "err_q", "err_b"]


def _fmt(v: float) -> str:
    return repr(float(v)) if not math.isfinite(v) else f"{float(v):.17g}"


def run_sweep(cfg: RunConfig, threads: int = 1) -> tuple[str, dict]:
    """CSV text plus a summary with the fitted slopes."""
    from .corrector import GammaRegime
    from .effective import b_error, q_error, rate_fit, saturation_filter
    if len(cfg.gammas) < 3:
        raise ConfigError("a sweep needs at least 3 gamma values")
    _, grid, pre = _build(cfg)
    basis = _basis(cfg.basis)
    opts = cfg.solver_options()
    gammas = list(cfg.gammas)
    if cfg.reference == "largest-gamma":
        if len(gammas) < 4:
            raise ConfigError("the largest-gamma reference needs at least 4 gamma values")
        ref_regime, gammas = GammaRegime.finite(gammas[-1]), gammas[:-1]
    else:
        ref_regime = GammaRegime.infinity()
        opts = dict(opts, infinity="finite-limit" if cfg.reference == "finite-limit" else "slices")
    regimes = [ref_regime] + [GammaRegime.finite(g) for g in gammas]
    res = _map_ordered(lambda r: _compute(grid, r, pre, basis, opts), regimes, threads)
    ref, rows = res[0], res[1:]
    iu = np.triu_indices(3)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    pq, pb = [], []
    for g, e in zip(gammas, rows):
        eq, eb = q_error(e.Qhat, ref.Qhat), b_error(e.BeffCoeffs, ref.BeffCoeffs)
        pq.append((g, eq))
        pb.append((g, eb))
        w.writerow([_fmt(v) for v in [g, *e.Qhat[iu], *e.BeffCoeffs, e.Ires, eq, eb]])
    tol = opts["tol"]
    fits = {}
    for name, pts in (("err_q", pq), ("err_b", pb)):
        kept = saturation_filter(pts, solver_tol=tol)
        try:
            f = rate_fit(kept)
            fits[name] = {"slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared,
                          "points": len(kept)}
        except ValueError as exc:
            fits[name] = {"slope": float("nan"), "intercept": float("nan"),
                          "r_squared": float("nan"), "points": len(kept), "note": str(exc)}
        fr = fits[name]
        w.writerow([f"# slope {name}", _fmt(fr["slope"]), "intercept", _fmt(fr["intercept"]),
                    "r_squared", _fmt(fr["r_squared"]), "points", str(fr["points"])])
    w.writerow(["# reference", ref_regime.label, cfg.reference])
    summary = {"fits": fits, "reference": {"regime": ref_regime.label, "qhat": ref.Qhat,
                                            "beff": ref.BeffCoeffs}}
    return buf.getvalue(), summary


def run_energy(cfg: RunConfig) -> dict:
    from .corrector import GammaRegime
    from .effective import bending_energy
    e = cfg.energy
    if not e.get("samples"):
        raise ConfigError("energy evaluation needs 'energy.samples'")
    _, grid, pre = _build(cfg)
    basis = _basis(cfg.basis)
    try:
        regime = GammaRegime.from_value(e.get("regime", "inf"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    eff = _compute(grid, regime, pre, basis, cfg.solver_options())
    samples = [(float(s["weight"]), np.asarray(s["curvature"], dtype=float)) for s in e["samples"]]
    total = bending_energy(eff.Qhat, eff.BeffCoeffs, eff.Ires, samples, basis)
    return {"energy": total, "effective": eff.to_dict(), "samples": len(samples)}


# ------------------------------------------------------------ verification

@dataclass
class Check:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance,
                "passed": self.passed}


def _admissibility(matrices) -> float:
    """Largest asymmetry or negative Mandel eigenvalue among raw 6x6 Voigt matrices."""
    from .material import STRAIN_WEIGHTS
    worst = 0.0
    s = np.sqrt(STRAIN_WEIGHTS)
    for C in matrices:
        C = np.asarray(C, dtype=float)
        asym = float(np.max(np.abs(C - C.T)))
        lam = float(np.linalg.eigvalsh(0.5 * (s[:, None] * (C + C.T) * s[None, :]))[0])
        neg = 0.0 if lam > 0 else (-lam if lam < 0 else math.inf)
        worst = max(worst, asym, neg)
    return worst


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def verification_suite(cfg: RunConfig) -> list[Check]:
    """Oracle equivalence, closed forms, identities and bounds on small instances."""
    from .cell import build_grid, sample_prestrain
    from .corrector import prestrain_from_corrector
    from .effective import compute_effective, effective_quadratic, q_ext
    from .instances import random_field, random_laminate, random_layered_prestrain, random_symmetric
    from .material import CANONICAL_BASIS, build_material_field, two_phase_laminate
    from .oracle import LaminateSpec, brute_force_qext, laminate_exact_qeff

    v = cfg.verify
    rng = np.random.default_rng(int(v.get("seed", 0)))
    override = v.get("tolerance")
    tol = (lambda t: t) if override is None else (lambda t: float(override))
    checks: list[Check] = []

    # admissibility of the configured material (plus the skewed test hook)
    try:
        mats = [t.voigt for t in build_material_field(cfg.material).tensors]
    except ValueError as exc:
        raise ConfigError(f"cannot build material: {exc}") from None
    if v.get("inject_skewed_material"):
        skew = np.eye(6)
        skew[0, 1] = 0.5
        mats.append(skew)
    checks.append(Check("material_admissibility", _admissibility(mats), tol(1e-12)))

    lam = two_phase_laminate()
    g = build_grid(4, 2, 4, lam)
    Q, _ = effective_quadratic(g, "inf")
    checks.append(Check("laminate_closed_form", float(np.max(np.abs(Q - laminate_exact_qeff(LaminateSpec())))),
                        tol(1e-9)))

    B = prestrain_from_corrector(g)
    e = compute_effective(g, "inf", B)
    checks.append(Check("laminate_limit_prestrain_vanishes", float(np.linalg.norm(e.BeffCoeffs)), tol(1e-8)))

    for label, regime in (("zero", 0.0), ("finite", 3.0), ("infinity", math.inf)):
        f = random_field(rng)
        pre = random_layered_prestrain(rng)
        gr = build_grid(3, 3, 3, f, pre)
        H = sample_prestrain(gr, pre)
        a = brute_force_qext(f, H, regime)
        b = q_ext(gr, H, regime)
        checks.append(Check(f"oracle_equivalence_{label}", _rel(a, b), tol(1e-9)))

        eff = compute_effective(gr, regime, pre)
        lhs = q_ext(gr, pre, regime)
        rhs = eff.q_eff(eff.Beff) + eff.Ires
        checks.append(Check(f"energy_identity_{label}", _rel(lhs, rhs), tol(1e-10)))

        lo, hi = f.bounds()
        ev = np.linalg.eigvalsh(eff.Qhat)
        viol = max(lo / 12 - ev[0], ev[-1] - hi / 12, 0.0)
        checks.append(Check(f"coercivity_bounds_{label}", float(viol), tol(1e-9)))
        checks.append(Check(f"qhat_symmetry_{label}", float(eff.diagnostics["representation_gap"]), tol(1e-10)))

    f = random_laminate(rng)
    gr = build_grid(4, 2, 4, f)
    Qinf, _ = effective_quadratic(gr, "inf")
    worst = -math.inf
    for gam in (1.0, 4.0, 16.0, 64.0):
        Qg, _ = effective_quadratic(gr, gam)
        for _ in range(3):
            c = CANONICAL_BASIS.coefficients(random_symmetric(rng)[:2, :2])
            worst = max(worst, float(c @ Qinf @ c - c @ Qg @ c))
    checks.append(Check("orthotropic_monotonicity", worst, tol(1e-12)))
    return checks


def run_verify(cfg: RunConfig) -> dict:
    checks = verification_suite(cfg)
    failed = [c for c in checks if not c.passed]
    return {"passed": not failed, "first_failure": failed[0].name if failed else None,
            "checks": [c.to_dict() for c in checks]}


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="platehom", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, hlp in (("effective", "effective quantities per regime (JSON)"),
                      ("sweep", "gamma sweep with error columns and slope fits (CSV)"),
                      ("verify", "oracle, identity and bound checks (JSON)"),
                      ("energy", "bending energy from curvature samples (JSON)"),
                      ("schema", "print the configuration JSON schema")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--config", help="JSON configuration file")
        s.add_argument("--out", help="output path (default: stdout)")
        s.add_argument("--threads", type=int, default=1, help="worker threads for independent solves")
        s.add_argument("--reproducible", action="store_true",
                       help="omit wall-clock fields so reruns are byte-identical")
    return p


def main(argv: list[str] | None = None) -> int:
    from .corrector import SolverError
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "schema":
        _emit(json.dumps(CONFIG_SCHEMA, indent=2) + "\n", args.out)
        return EXIT_OK
    try:
        if args.config is None and args.command != "verify":
            raise ConfigError(f"'{args.command}' needs --config")
        cfg = load_config(args.config)
        repro = args.reproducible or cfg.reproducible
        out = args.out or cfg.output
        if args.command == "effective":
            _emit(_dumps(run_effective(cfg, args.threads), repro), out)
        elif args.command == "sweep":
            text, summary = run_sweep(cfg, args.threads)
            _emit(text, out)
            for name, fit in summary["fits"].items():
                print(f"{name} slope {fit['slope']:.4f} over {fit['points']} points", file=sys.stderr)
        elif args.command == "energy":
            _emit(_dumps(run_energy(cfg), repro), out)
        else:
            report = run_verify(cfg)
            _emit(_dumps(report, repro), out)
            if not report["passed"]:
                print(f"verification failed: {report['first_failure']}", file=sys.stderr)
                return EXIT_VERIFY
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        print(json.dumps(_clean(exc.report, False), sort_keys=True), file=sys.stderr)
        return EXIT_SOLVER
    except (np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
