"""Config-driven experiment runner.

``symbreak [subcommand] --config run.json [--out DIR] [--seed-override N]``

The config is validated against :data:`SCHEMA` before anything runs.  Every
output is written under the output directory together with ``manifest.json``
(config hash, seed, per-file hashes, per-suite pass flags).  Exit codes: 0 on
success, 2 when a check fails, 1 on config or I/O errors.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import validation as val
from .boundary import DomainError
from .energy import ConfigError, EnergyConfig, GaugeProblem, constraint_scale
from .fields import Grid, ScalarField, encode_field, load_field
from .lieflow import KINDS, GeneratorBasis
from .optimize import OptConfig, minimize, seed_field
from .rng import stream

SUBCOMMANDS = ("cap", "grassmann-check", "energy-min", "lemma1-probe", "pure-descent",
               "weak-descent", "audit", "validate")
SUITES = ("cap", "projection", "slice", "el", "probe", "warp", "invariance", "pure", "weak")

_pos_int = {"type": "integer", "minimum": 1}
_pos_num = {"type": "number", "exclusiveMinimum": 0}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = _obj({
    "subcommand": {"enum": list(SUBCOMMANDS)},
    "seed": {"type": "integer", "minimum": 0},
    "grid": _obj({"nx": {"type": "integer", "minimum": 4}, "ny": {"type": "integer", "minimum": 4}}),
    "basis": {"type": "array", "minItems": 1,
              "items": {"enum": [k for k in KINDS if k != "Custom"]}},
    "signal": _obj({"amplitude": {"type": "number"}, "file": {"type": "string"}}),
    "energy": _obj({
        "alpha": {"type": "number", "minimum": 0}, "beta": _pos_num, "v": _pos_num,
        "variant": {"enum": ["a", "b"]}, "flow": {"enum": ["linearized", "nonlinear"]},
        "t": {"type": "number"}, "substeps": _pos_int}),
    "opt": _obj({
        "step": _pos_num, "max_iters": _pos_int, "grad_tol": {"type": "number", "minimum": 0},
        "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}, "eps": _pos_num}),
    "mc": _obj({"N": {"type": "integer", "minimum": 1000}, "seeds": _pos_int}),
    "cap": _obj({
        "m": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}},
        "tau": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}}}),
    "grassmann": _obj({
        "pairs": {"type": "array", "minItems": 1,
                  "items": {"type": "array", "minItems": 2, "maxItems": 2,
                            "items": {"type": "integer", "minimum": 2}}},
        "N": {"type": "integer", "minimum": 1000},
        "tau_U": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.1},
        "trials": {"type": "integer", "minimum": 2}}),
    "el": _obj({"probes": _pos_int, "fd_grid": {"type": "integer", "minimum": 4}}),
    "probe": _obj({"samples": _pos_int}),
    "audit": _obj({"samples": _pos_int}),
    "pure": _obj({"m0": {"type": "integer", "minimum": 2}, "tau": {"type": "number", "minimum": 0},
                  "t_max": _pos_num, "amplitude": {"type": "number"}}),
    "weak": _obj({"lambda": _pos_num, "eta": {"type": "number", "minimum": 0},
                  "eps_target": _pos_num, "n": {"type": "integer", "minimum": 4},
                  "substeps": _pos_int, "max_iters": _pos_int,
                  "sweep": {"type": "array", "minItems": 2, "items": _pos_num},
                  "sweep_iters": _pos_int}),
    "validate": _obj({"suites": {"type": "array", "items": {"enum": list(SUITES)}}}),
})


class UsageError(Exception):
    """Config or I/O problem; maps to exit code 1."""


# --- config ---------------------------------------------------------------

def load_config(path) -> tuple[dict, bytes]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    try:
        cfg = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise UsageError(f"malformed JSON in {path}: {exc}") from exc
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(SCHEMA).iter_errors(cfg))
    if err is not None:
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise UsageError(f"config error at {where}: {err.message}")
    return cfg, raw


def _energy_config(cfg: dict) -> EnergyConfig:
    return EnergyConfig(**cfg.get("energy", {}))


def _opt_config(cfg: dict) -> OptConfig:
    return OptConfig(**cfg.get("opt", {}), seed=cfg.get("seed", 0))


def _grid(cfg: dict) -> Grid:
    g = cfg.get("grid", {})
    return Grid(g.get("nx", 32), g.get("ny", 32))


def _signal(cfg: dict, grid: Grid, base: Path) -> ScalarField:
    source = cfg.get("signal", {})
    if "file" in source:
        path = Path(source["file"])
        try:
            S = load_field(path if path.is_absolute() else base / path)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot load signal: {exc}") from exc
        if not isinstance(S, ScalarField) or S.grid != grid:
            raise UsageError("signal file must hold a scalar field on the configured grid")
        return S
    return val.sample_signal(grid, source.get("amplitude", 1.0))


def _basis(cfg: dict) -> GeneratorBasis:
    return GeneratorBasis.of(*cfg.get("basis", ["TranslateX", "TranslateY"]))


def _pure_setup(cfg: dict) -> val.PureSetup:
    p = dict(cfg.get("pure", {}))
    p["n"] = _grid(cfg).nx
    p["seeds"] = cfg.get("mc", {}).get("seeds", val.PureSetup.seeds)
    return val.PureSetup(**p)


def _weak_setup(cfg: dict) -> val.WeakSetup:
    w = dict(cfg.get("weak", {}))
    if "lambda" in w:
        w["lam"] = w.pop("lambda")
    if "sweep" in w:
        w["sweep"] = tuple(w["sweep"])
    w["seeds"] = cfg.get("mc", {}).get("seeds", val.WeakSetup.seeds)
    return val.WeakSetup(**w)


# --- output ---------------------------------------------------------------

def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


class Report:
    """Collects output files in memory and writes them in one go."""

    def __init__(self):
        self.files: dict[str, bytes] = {}
        self.checks: list[val.Check] = []

    def text(self, name: str, s: str):
        self.files[name] = s.encode()

    def csv(self, name: str, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        self.text(name, buf.getvalue())

    def jsonl(self, name: str, records):
        self.text(name, "".join(json.dumps(_plain(r), sort_keys=True) + "\n" for r in records))

    def check(self, chk: val.Check):
        self.checks.append(chk)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def write(self, out: Path, manifest: dict):
        lines = [ln for c in self.checks for ln in c.lines]
        self.text("report.txt", "".join(ln + "\n" for ln in lines))
        self.text("summary.json", dumps({c.name: {"passed": c.passed, "metrics": c.metrics} for c in self.checks}))
        manifest = dict(manifest, suites={c.name: c.passed for c in self.checks}, passed=self.passed,
                        files={k: hashlib.sha256(v).hexdigest() for k, v in sorted(self.files.items())})
        try:
            out.mkdir(parents=True, exist_ok=True)
            for name, data in self.files.items():
                (out / name).write_bytes(data)
            (out / "manifest.json").write_text(dumps(manifest))
        except OSError as exc:
            raise UsageError(f"cannot write outputs to {out}: {exc}") from exc
        return lines


# --- subcommands ----------------------------------------------------------

def run_cap(cfg, rep: Report, base: Path):
    c = cfg.get("cap", {})
    chk = val.cap_suite(tuple(c.get("m", (2, 3, 5, 20, 100))), tuple(c.get("tau", (0.1, 0.5, 0.9))),
                        N=cfg.get("mc", {}).get("N", 200000), seed=cfg.get("seed", 0))
    rep.csv("cap.csv", val.CAP_HEADER, chk.rows)
    rep.check(chk)


def run_grassmann(cfg, rep: Report, base: Path):
    g = cfg.get("grassmann", {})
    pairs = tuple(tuple(p) for p in g.get("pairs", ((20, 5), (100, 90))))
    for m, m0 in pairs:
        if m0 > m:
            raise UsageError(f"config error at grassmann.pairs: need m0 <= m, got ({m}, {m0})")
    seed = cfg.get("seed", 0)
    rep.check(val.projection_suite(pairs, N=g.get("N", 100000), seed=seed))
    chk = val.slice_suite(pairs, tau_U=g.get("tau_U", 1e-3), trials=g.get("trials", 100000), seed=seed)
    rep.csv("grassmann.csv", val.CAP_HEADER, chk.rows)
    rep.check(chk)


def run_energy_min(cfg, rep: Report, base: Path):
    grid = _grid(cfg)
    S = _signal(cfg, grid, base)
    basis = _basis(cfg)
    ecfg, ocfg = _energy_config(cfg), _opt_config(cfg)
    phi0 = seed_field(grid, len(basis), ecfg.v, stream(cfg.get("seed", 0), "energy-min"))
    phi, trace = minimize(S, basis, phi0, ecfg, ocfg)
    prob = GaugeProblem(S, basis, ecfg)
    cr = float(np.max(np.abs(prob.constraint_residual(phi.data))))
    scale = constraint_scale(S, basis, ecfg)
    chk = val.Check("energy-min")
    chk.add("converged", trace.converged, f"{trace.iterations} iterations, grad {trace.final_grad_norm:.2e}")
    chk.add("constraint residual", cr <= val.CONSTRAINT_RTOL * scale, f"{cr:.2e} vs scale {scale:.3g}")
    chk.metrics.update(energy=trace.energies[-1], constraint=cr, scale=scale, iterations=trace.iterations)
    rep.csv("trace.csv", ("iter", "energy", "grad_norm"),
            [(k, e, g) for k, (e, g) in enumerate(zip(trace.energies, trace.grad_norms))])
    raw, meta = encode_field(phi)
    rep.files["phi.f64"] = raw
    rep.text("phi.f64.json", meta)
    rep.check(chk)


def run_probe(cfg, rep: Report, base: Path):
    rep.check(val.probe_suite(_grid(cfg).nx, _energy_config(cfg), cfg.get("probe", {}).get("samples", 64),
                              cfg.get("seed", 0)))


def run_pure(cfg, rep: Report, base: Path):
    chk = val.pure_suite(_pure_setup(cfg), _energy_config(cfg), _opt_config(cfg), cfg.get("seed", 0))
    rep.jsonl("pure_descent.jsonl", chk.rows)
    rep.check(chk)


def run_weak(cfg, rep: Report, base: Path):
    chk = val.weak_suite(_weak_setup(cfg), _energy_config(cfg), _opt_config(cfg), cfg.get("seed", 0))
    rep.jsonl("weak_descent.jsonl", [r for r in chk.rows if r["seed"] >= 0])
    rep.jsonl("weak_sweep.jsonl", [r for r in chk.rows if r["seed"] < 0])
    rep.check(chk)


def run_audit(cfg, rep: Report, base: Path):
    rep.check(val.invariance_suite(_grid(cfg).nx, cfg.get("audit", {}).get("samples", 50), cfg.get("seed", 0)))


def run_validate(cfg, rep: Report, base: Path):
    seed = cfg.get("seed", 0)
    wanted = cfg.get("validate", {}).get("suites", list(SUITES))
    ecfg, ocfg = _energy_config(cfg), _opt_config(cfg)
    for name in SUITES:
        if name not in wanted:
            continue
        if name == "cap":
            run_cap(cfg, rep, base)
        elif name == "projection":
            g = cfg.get("grassmann", {})
            pairs = tuple(tuple(p) for p in g.get("pairs", ((20, 5), (100, 90))))
            rep.check(val.projection_suite(pairs, N=g.get("N", 100000), seed=seed))
        elif name == "slice":
            g = cfg.get("grassmann", {})
            pairs = tuple(tuple(p) for p in g.get("pairs", ((20, 5), (100, 90))))
            chk = val.slice_suite(pairs, tau_U=g.get("tau_U", 1e-3), trials=g.get("trials", 100000), seed=seed)
            rep.csv("grassmann.csv", val.CAP_HEADER, chk.rows)
            rep.check(chk)
        elif name == "el":
            e = cfg.get("el", {})
            rep.check(val.el_suite(_grid(cfg).nx, ecfg, ocfg, probes=e.get("probes", 20),
                                   fd_grid=e.get("fd_grid", 16), seed=seed))
        elif name == "probe":
            run_probe(cfg, rep, base)
        elif name == "warp":
            rep.check(val.warp_suite(_grid(cfg).nx, seed))
        elif name == "invariance":
            run_audit(cfg, rep, base)
        elif name == "pure":
            run_pure(cfg, rep, base)
        elif name == "weak":
            run_weak(cfg, rep, base)


HANDLERS = {
    "cap": run_cap, "grassmann-check": run_grassmann, "energy-min": run_energy_min,
    "lemma1-probe": run_probe, "pure-descent": run_pure, "weak-descent": run_weak,
    "audit": run_audit, "validate": run_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="symbreak", description="Symmetry-breaking descent experiments.")
    p.add_argument("subcommand", nargs="?", choices=SUBCOMMANDS,
                   help="overrides the config's subcommand key")
    p.add_argument("--config", help="run-config JSON")
    p.add_argument("--out", default="symbreak-out", help="output directory")
    p.add_argument("--seed-override", type=int, help="replace the config seed")
    p.add_argument("--version", action="version", version=f"symbreak {__version__}")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is None:
            raise UsageError("--config is required")
        cfg, raw = load_config(args.config)
        if args.seed_override is not None:
            if args.seed_override < 0:
                raise UsageError("--seed-override must be >= 0")
            cfg["seed"] = args.seed_override
        sub = args.subcommand or cfg.get("subcommand")
        if sub is None:
            raise UsageError("no subcommand given on the command line or in the config")
        rep = Report()
        HANDLERS[sub](cfg, rep, Path(args.config).resolve().parent)
        manifest = {
            "tool": f"symbreak {__version__}",
            "subcommand": sub,
            "seed": cfg.get("seed", 0),
            "config_sha256": hashlib.sha256(raw).hexdigest(),
            "config": cfg,
        }
        lines = rep.write(Path(args.out), manifest)
    except (UsageError, ConfigError, DomainError) as exc:
        print(f"symbreak: error: {exc}", file=sys.stderr)
        return 1
    for ln in lines:
        print(ln)
    return 0 if rep.passed else 2


def main() -> None:
    sys.exit(run())
