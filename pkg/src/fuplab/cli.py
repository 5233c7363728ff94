"""Batch front end: generate, certify, constants, weight, fup, resonances and the full pipeline.

Every run writes its artifacts plus ``manifest.json`` (normalized config, seed, timestamp,
artifact list) into ``--out``. Exit codes: 0 ok, 1 runtime failure, 2 config validation.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .constants import damping_chain, fup_chain, hs_chain, spectral_gap_chain
from .errors import FuplabError, ValidationError
from .geometry import DyadicSet, build_koch, discretize_curve, set_from_spec
from .numerics import (Circle, FIOSpec, LatticeSetSpec, fio_decay_series, fit_exponent,
                       fup_decay_series)
from .porosity import (certify_ball_porosity, certify_box_porosity, certify_line_porosity,
                       estimate_regularity, estimate_three_point_constant)
from .resonances import SurfaceSpectrum, essential_gap, fuchsian_resonances
from .weights import K0_RULES, build_weight, verify_hypotheses

SUBCOMMANDS = ("generate", "certify", "constants", "weight", "fup", "resonances", "pipeline")


class Run:
    """Artifact sink for one invocation; the manifest is written even when a stage fails."""

    def __init__(self, out: Path, config: dict):
        self.out = out
        self.config = config
        self.artifacts = []

    def write(self, name: str, payload, provenance: str = "measured") -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        if isinstance(payload, str):
            text = payload
        else:
            text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False, default=_jsonable) + "\n"
        path.write_text(text, encoding="utf-8")
        self.artifacts.append({"file": name, "provenance": provenance})
        return path

    def manifest(self, status: str, exit_code: int, error: dict | None = None):
        self.out.mkdir(parents=True, exist_ok=True)
        doc = {
            "status": status,
            "exit_code": exit_code,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "version": __version__,
            "config": self.config,
            "seed": self.config.get("seed"),
            "artifacts": self.artifacts,
        }
        if error:
            doc["error"] = error
        text = json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False, default=_jsonable)
        (self.out / "manifest.json").write_text(text + "\n", encoding="utf-8")


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (tuple, set)):
        return list(x)
    raise TypeError(f"not serializable: {type(x).__name__}")


# ----------------------------------------------------------------- validation helpers

def _nu(nu):
    if nu is None or not 0 < nu < 1 / 3:
        raise ValidationError(f"nu={nu} violates the hypothesis ν ∈ (0,1/3)")
    return float(nu)


def _h(h):
    if h is None or not 0 < h < 0.01:
        raise ValidationError(f"h={h} violates the hypothesis h ∈ (0,1/100)")
    return float(h)


def _range(text: str):
    """'a..b' -> [a, ..., b]; also accepts a comma list."""
    try:
        if ".." in text:
            a, b = text.split("..")
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",")]
    except ValueError as exc:
        raise ValidationError(f"scales must look like n1..n2 or n1,n2,...: {text!r}") from exc


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc


def load_set(path) -> DyadicSet:
    """A serialized DyadicSet (has 'cells') or a set-spec document."""
    obj = _load_json(path)
    if not isinstance(obj, dict):
        raise ValidationError("set document must be a JSON object")
    return DyadicSet.from_dict(obj) if "cells" in obj else set_from_spec(obj)


# ----------------------------------------------------------------- stages

def cmd_generate(a, run: Run):
    s = load_set(a.set)
    run.write("set.json", s.to_dict(), provenance="generated")
    run.config.update(d=s.d, base=s.base, depth=s.depth)
    return {"cells": len(s), "d": s.d, "base": s.base, "depth": s.depth, "measure": s.measure()}


def cmd_certify(a, run: Run):
    s = load_set(a.set)
    if a.kind == "box":
        L = s.base if a.L is None else a.L
        max_depth = s.depth - 1 if a.max_depth is None else a.max_depth
        run.config.update(L=L, max_depth=max_depth)
        cert = certify_box_porosity(s, L, max_depth)
    else:
        nu = _nu(a.nu)
        alpha0 = s.width if a.alpha0 is None else a.alpha0
        alpha1 = s.side if a.alpha1 is None else a.alpha1
        run.config.update(alpha0=alpha0, alpha1=alpha1)
        if a.kind == "balls":
            cert = certify_ball_porosity(s, nu, alpha0, alpha1)
        else:
            run.config.update(directions=a.directions)
            cert = certify_line_porosity(s, nu, alpha0, alpha1, directions=a.directions)
    run.write("certificate.json", cert.to_dict())
    line = f"{cert.kind}: {cert.verdict}" + (" (vacuous)" if cert.vacuous else "")
    wit = cert.witness
    if wit:
        first = wit[0] if isinstance(wit, list) else wit
        line += f"; witness {json.dumps(first, default=_jsonable, sort_keys=True)}"
    return line


def constants_report(a):
    if a.chain == "gap":
        if a.delta is None:
            raise ValidationError("--delta is required for the gap chain")
        return spectral_gap_chain(a.delta, a.cmu, a.carc, a.cd)
    if a.chain == "fup":
        return fup_chain(_nu(a.nu), a.d, a.cd)
    if a.chain == "damping":
        return damping_chain(_nu(a.nu), a.mu_scale, a.c1, a.d, a.cd)
    missing = [k for k in ("L", "c1", "c2", "c3", "alpha") if getattr(a, k) is None]
    if missing:
        raise ValidationError(f"the hs chain needs --{', --'.join(m.replace('_', '-') for m in missing)}")
    return hs_chain(a.L, a.c1, a.c2, a.c3, a.alpha, a.d, a.cd, T=a.T)


def cmd_constants(a, run: Run):
    rep = constants_report(a)
    doc = rep.to_dict()
    run.write("constants.json", doc, provenance="closed-form chain")
    return doc


def cmd_weight(a, run: Run):
    s = load_set(a.set)
    h = _h(a.h)
    nu = _nu(a.nu)
    # cell centers mapped from the bounding frame onto [-3/h, 3/h]^d
    Y = (s.cell_centers() - np.asarray(s.center)) / (s.side / 2) * (3 / h)
    mu = a.mu_scale if a.mu_scale is not None else 3 / h * s.width
    run.config.update(mu_scale=mu)
    field = build_weight(Y, nu, mu, h, alpha=a.alpha, k0=a.k0, k0_rule=a.k0_rule)
    run.config.update(alpha=field.alpha, k0=field.k0)
    run.write("weight.json", field.to_dict())
    out = {"k0": field.k0, "k0_rule": field.k0_rule, "alpha": field.alpha,
           "annuli": [r.k for r in field.annuli], "invariants": field.invariants()}
    if a.verify:
        rep = verify_hypotheses(field, Y, budget=a.budget, n_directions=a.directions, seed=a.seed)
        run.write("hypotheses.json", rep.to_dict())
        run.write("gstar.csv", rep.to_csv())
        out.update(C_reg=rep.C_reg, C_gr=rep.C_gr, damping_slack=rep.damping_slack,
                   vacuous=rep.vacuous)
    return out


def _fup_target(path):
    obj = _load_json(path)
    if not isinstance(obj, dict):
        raise ValidationError("set document must be a JSON object")
    if obj.get("kind") == "circle":
        return Circle(float(obj.get("radius", 1.0)), tuple(obj.get("center", (0.0, 0.0))))
    return obj


def cmd_fup(a, run: Run):
    ns = _range(a.scales)
    if a.phase == "dft":
        target = _load_json(a.set)
        spec = LatticeSetSpec.from_dict(target)
        base = spec.base if spec.kind == "cantor" else 2
        series = fup_decay_series(spec, [base ** n for n in ns])
        run.config.update(N=[base ** n for n in ns])
    else:
        target = _fup_target(a.set)
        X = target if isinstance(target, Circle) else (
            DyadicSet.from_dict(target) if "cells" in target else set_from_spec(target))
        hs = [2.0 ** -n for n in ns]
        for h in hs:
            _h(h)
        spec = FIOSpec(a.phase, "bump" if a.phase != "euclidean-fourier" else "one",
                       rho=a.rho, C1=a.c1)
        run.config.update(h=hs, fio=spec.to_dict())
        series = fio_decay_series(spec, X, hs)
    run.write("series.csv", series.to_csv())
    out = {"norms": series.norms.tolist()}
    if len(series.points) >= 4:
        fit = fit_exponent(series)
        run.write("fit.json", fit.to_dict(), provenance="least-squares fit of measured norms")
        out["beta_emp"] = fit.beta
    return out


def _spectrum(arg):
    if arg in (None, "demo"):
        return SurfaceSpectrum.demo()
    obj = _load_json(arg)
    vals = obj.get("values") if isinstance(obj, dict) else obj
    if not isinstance(vals, list):
        raise ValidationError("spectrum must be a list or {'values': [...]}")
    return SurfaceSpectrum(tuple(vals), obj.get("source", "user-supplied") if isinstance(obj, dict) else "user-supplied")


def cmd_resonances(a, run: Run):
    table = fuchsian_resonances(_spectrum(a.spectrum), a.nmax)
    gap = essential_gap(table)
    run.write("resonances.csv", table.to_csv(), provenance="explicit pole formula")
    run.write("gap.json", gap.to_dict(), provenance="explicit pole formula")
    return gap.to_dict()


def cmd_pipeline(a, run: Run):
    curve = build_koch(a.curve_depth)
    grid = discretize_curve(curve, 2, a.grid_depth, center=(0.0, 0.0), side=2.0)
    levels = _range(a.levels)
    reg = estimate_regularity(grid, levels=levels, seed=a.seed)
    arc = estimate_three_point_constant(curve)
    est = {"delta": reg.delta, "C_mu": reg.C_mu, "C_arc": arc.C_arc,
           "regularity": reg.to_dict(), "three_point": arc.to_dict()}
    run.write("estimates.json", est)
    delta = a.delta if a.delta is not None else reg.delta
    run.config.update(delta_used=delta)
    rep = spectral_gap_chain(delta, max(1.0, reg.C_mu), max(1.0, arc.C_arc), a.cd)
    run.write("constants.json", rep.to_dict(), provenance="closed-form chain on measured inputs")
    out = {"delta": delta, "C_mu": reg.C_mu, "C_arc": arc.C_arc,
           "nu": rep.to_dict()["values"]["nu"]["approx"],
           "beta_tilde": rep.to_dict()["values"]["beta_tilde"]["approx"]}
    if a.fup_scales:
        ns = _range(a.fup_scales)
        series = fup_decay_series(LatticeSetSpec("cantor", 1), [3 ** n for n in ns])
        run.write("series.csv", series.to_csv())
        out["fup_norms"] = series.norms.tolist()
    return out


# ----------------------------------------------------------------- parser

def _common(p):
    p.add_argument("--out", default="fuplab-out", help="artifact directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="thread budget (default: FUPLAB_THREADS or library default)")
    p.add_argument("--config", default=None, help="JSON config; command-line flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fuplab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fuplab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("generate", help="build a DyadicSet from a set-spec")
    p.add_argument("--set", required=True)
    _common(p)

    p = sub.add_parser("certify", help="porosity certificate for a set")
    p.add_argument("--set", required=True)
    p.add_argument("--kind", choices=("balls", "lines", "box"), required=True)
    p.add_argument("--nu", type=float)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--alpha1", type=float)
    p.add_argument("--directions", type=int, default=64)
    p.add_argument("--L", type=int)
    p.add_argument("--max-depth", type=int)
    _common(p)

    p = sub.add_parser("constants", help="explicit constant chain report")
    p.add_argument("--chain", choices=("fup", "damping", "gap", "hs"), required=True)
    p.add_argument("--nu", type=float)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--cd", type=float, default=1.0)
    p.add_argument("--delta", type=float)
    p.add_argument("--cmu", type=float, default=1.0)
    p.add_argument("--carc", type=float, default=1.0)
    p.add_argument("--mu-scale", type=float)
    p.add_argument("--c1", type=float)
    p.add_argument("--c2", type=float)
    p.add_argument("--c3", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--L", type=int)
    p.add_argument("--T", type=int)
    _common(p)

    p = sub.add_parser("weight", help="damping weight on a rescaled set and its hypothesis checks")
    p.add_argument("--set", required=True)
    p.add_argument("--h", type=float, default=2.0 ** -10)
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--mu-scale", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--k0", type=int)
    p.add_argument("--k0-rule", choices=K0_RULES, default="paper")
    p.add_argument("--verify", action="store_true")
    p.add_argument("--budget", type=int, default=10_000)
    p.add_argument("--directions", type=int, default=360)
    _common(p)

    p = sub.add_parser("fup", help="localization-norm decay series and exponent fit")
    p.add_argument("--set", required=True)
    p.add_argument("--scales", required=True, help="n1..n2: N = base^n (dft) or h = 2^-n (FIO)")
    p.add_argument("--phase", default="dft", choices=("dft", "euclidean-fourier", "hyperbolic-log", "circle-model"))
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--c1", type=float, default=1.0)
    _common(p)

    p = sub.add_parser("resonances", help="explicit resonance table and essential gap")
    p.add_argument("--spectrum", default="demo")
    p.add_argument("--nmax", type=int, default=3)
    _common(p)

    p = sub.add_parser("pipeline", help="Koch curve -> estimates -> gap chain [-> fup series]")
    p.add_argument("--curve-depth", type=int, default=5)
    p.add_argument("--grid-depth", type=int, default=9)
    p.add_argument("--levels", default="1..6")
    p.add_argument("--delta", type=float, help="override the measured dimension")
    p.add_argument("--cd", type=float, default=1.0)
    p.add_argument("--fup-scales", default=None)
    _common(p)
    return parser


COMMANDS = {"generate": cmd_generate, "certify": cmd_certify, "constants": cmd_constants,
            "weight": cmd_weight, "fup": cmd_fup, "resonances": cmd_resonances,
            "pipeline": cmd_pipeline}


def parse(argv):
    """Parse argv; a --config file (or a previous manifest) supplies defaults that flags override."""
    parser = build_parser()
    argv = list(argv)
    if "--config" in argv:
        i = argv.index("--config")
        if i + 1 >= len(argv):
            parser.error("--config needs a path")
        cfg = _load_json(argv[i + 1])
        if not isinstance(cfg, dict):
            raise ValidationError("config must be a JSON object")
        if isinstance(cfg.get("config"), dict) and "artifacts" in cfg:
            cfg = cfg["config"]  # replay from a previous run's manifest
        name = next((a for a in argv if a in SUBCOMMANDS), None)
        if name is None:
            name = cfg.get("subcommand")
            if name not in SUBCOMMANDS:
                raise ValidationError("config names no subcommand")
            argv.insert(0, name)
        sub = parser._subparsers._group_actions[0].choices[name]
        for act in sub._actions:
            if act.dest in cfg and act.dest not in ("config", "help"):
                act.default = cfg[act.dest]
                act.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse usage errors exit with 2 already
        return int(exc.code or 0)
    config = {k: v for k, v in vars(args).items() if k not in ("config", "out")}
    if config.get("threads") is None:
        env = os.environ.get("FUPLAB_THREADS")
        config["threads"] = int(env) if env and env.isdigit() else None
    run = Run(Path(args.out), config)
    try:
        with threadpool_limits(limits=config["threads"]):
            result = COMMANDS[args.subcommand](args, run)
    except ValidationError as exc:
        run.manifest("error", 2, {"type": type(exc).__name__, "message": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FuplabError, ArithmeticError, MemoryError) as exc:
        run.manifest("error", 1, {"type": type(exc).__name__, "message": str(exc)})
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    run.manifest("ok", 0)
    if isinstance(result, str):
        print(result)
    else:
        print(json.dumps(result, indent=2, sort_keys=True, default=_jsonable))
    return 0
