"""Command line runner: one subcommand per engine plus `report`.

Configuration is flat key=value text (file via --config, or trailing key=value
arguments).  Keys may carry the engine name as a dotted prefix; keys prefixed
with another engine's name are ignored so one file can serve several engines.
Exit status: 0 success, 1 configuration or I/O error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .arms import ArmEventSpec, fit_exponent, mc_estimate, one_arm_radii
from .sle import estimate_loop_free_exponent
from .spectral import (ConvergenceError, cardy_formula, solve_backbone_2d, solve_backbone_symmetric,
                       solve_eigen_1d)

ENGINES = ("percolation", "sle", "diffusion", "eigen1d", "backbone", "cardy")
FORMATS = ("json", "csv", "plotdata")
RECORD_FIELDS = ("engine", "parameters", "estimates", "fits", "wallClock", "seed", "version")
CSV_HEADER = ("engine", "seed", "scale", "pHat", "stdErr", "lambda")


class ConfigError(ValueError):
    """Invalid configuration or unusable output path (exit status 1)."""


# ---------------------------------------------------------------- typed parameters

def _int(v: str) -> int:
    return int(v)


def _float(v: str) -> float:
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("not a finite number")
    return x


def _bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes"):
        return True
    if v.lower() in ("0", "false", "no"):
        return False
    raise ValueError("not a boolean")


def _list(item):
    def parse(v: str):
        out = [item(x) for x in v.split(",") if x.strip()]
        if not out:
            raise ValueError("empty list")
        return out
    return parse


def _choice(*options):
    def parse(v: str):
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return parse


REQUIRED = object()

# key -> (parser, default)
SCHEMA = {
    "percolation": {
        "event": (_choice("oneArm", "disjointOpenArms", "multichromaticArms", "annulusCrossing",
                          "closedAnnulusCrossing", "circuit", "rhombusCrossing"), "oneArm"),
        "p": (_float, 0.5),
        "trials": (_int, 10_000),
        "scales": (_list(_int), [16, 32, 64]),
        "r": (_int, 1),
        "k": (_int, 2),
        "colors": (str, "OO"),
        "halfPlane": (_bool, False),
        "L2": (_int, 0),
        "shards": (_int, 0),
    },
    "sle": {
        "kappa": (_float, 6.0),
        "paths": (_int, 200),
        "radii": (_list(_float), [0.5, 0.35, 0.25, 0.18, 0.12, 0.08]),
        "dt": (_float, 2e-3),
        "tolFactor": (_float, 1.0),
        "batches": (_int, 10),
    },
    "diffusion": {
        "kappa": (_float, 6.0),
        "paths": (_int, 100_000),
        "dt": (_float, 1 / 16),
        "tFit": (_list(_float), None),
        "batches": (_int, 10),
    },
    "eigen1d": {
        "kappa": (_float, 6.0),
        "n": (_int, 4095),
        "method": (_choice("directEigen", "timeDecay"), "directEigen"),
        "levels": (_int, 3),
    },
    "backbone": {
        "form": (_choice("alphaGamma", "alphaBeta"), "alphaGamma"),
        "meshes": (_list(_int), [64, 128, 256, 512]),
        "method": (_choice("directEigen", "timeDecay"), "timeDecay"),
        "edge": (_choice("shared", "extrapolated"), "shared"),
        "eps": (_float, 1e-3),
        "edgeExponent": (_float, 1 / 3),
    },
    "cardy": {
        "m": (_list(_float), [0.5]),
    },
    "report": {
        "inputs": (_list(str), REQUIRED),
    },
}


def read_config(text: str) -> dict:
    """Parse flat key=value lines; '#' starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            raise ConfigError(f"line {n}: empty key")
        out[k] = v
    return out


def validate(engine: str, raw: dict) -> dict:
    """Typed parameters for engine; unknown keys and bad values raise ConfigError."""
    schema = SCHEMA[engine]
    params = {}
    for key, value in raw.items():
        name = key
        if "." in key:
            prefix, name = key.split(".", 1)
            if prefix != engine:
                if prefix in SCHEMA:
                    continue
                raise ConfigError(f"unknown key {key!r}")
        if name not in schema:
            raise ConfigError(f"unknown key {key!r} for engine {engine}")
        try:
            params[name] = schema[name][0](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    for name, (_, default) in schema.items():
        if name not in params:
            if default is REQUIRED:
                raise ConfigError(f"missing required key {name!r}")
            params[name] = default
    _check_ranges(engine, params)
    return params


def _check_ranges(engine: str, p: dict):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)
    if engine == "percolation":
        need(0.0 <= p["p"] <= 1.0, "p must lie in [0, 1]")
        need(p["trials"] >= 1, "trials must be positive")
        need(all(s >= 1 for s in p["scales"]), "scales must be positive")
        need(len(set(p["scales"])) == len(p["scales"]), "scales must be distinct")
        need(set(p["colors"].upper()) <= {"O", "C"}, "colors is a string over O (open) and C (closed)")
    elif engine in ("sle", "diffusion"):
        need(p["kappa"] > 0, "kappa must be positive")
        need(p["paths"] >= 2 * p["batches"] >= 4, "paths must be at least twice batches (batches >= 2)")
        need(p["dt"] > 0, "dt must be positive")
        if engine == "sle":
            need(all(0 < r < 1 for r in p["radii"]) and len(p["radii"]) >= 3, "need >= 3 radii in (0, 1)")
    elif engine == "eigen1d":
        need(p["kappa"] > 4, "kappa must exceed 4")
        need(p["n"] >= 16, "n must be at least 16")
    elif engine == "backbone":
        need(len(p["meshes"]) >= 2, "at least two meshes")
        need(all(b == 2 * a for a, b in zip(p["meshes"], p["meshes"][1:])), "meshes must double")
        need(min(p["meshes"]) >= 16 and all(m % 2 == 0 for m in p["meshes"]), "meshes must be even and >= 16")
        need(0 < p["eps"] < 0.1, "eps must lie in (0, 0.1)")
        need(p["edgeExponent"] > 0, "edgeExponent must be positive")
    elif engine == "cardy":
        need(all(0 <= m <= 1 for m in p["m"]), "m must lie in [0, 1]")


# ---------------------------------------------------------------- records

@dataclass
class ResultRecord:
    engine: str
    parameters: dict
    estimates: dict
    fits: dict
    wallClock: float
    seed: int
    version: str = __version__

    def to_dict(self) -> dict:
        return _round(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "ResultRecord":
        if set(d) != set(RECORD_FIELDS):
            raise ConfigError(f"record fields {sorted(d)} differ from {list(RECORD_FIELDS)}")
        return cls(**d)


def _round(obj):
    """Plain JSON types with reals at 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_round(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.12g}") + 0.0  # no negative zero
    return obj


def _fit_dict(fit) -> dict:
    return {"exponent": fit.exponent, "slope": fit.slope, "intercept": fit.intercept, "slopeStdErr": fit.slopeStdErr}


# ---------------------------------------------------------------- engines

def _run_percolation(p: dict, seed: int, workers: int) -> tuple[dict, dict]:
    scales = sorted(p["scales"])
    shards = p["shards"] or max(1, workers)
    points = []
    if p["event"] == "oneArm":
        # coupled sample: each trial's radius is reused for every scale
        radii = np.concatenate([one_arm_radii(scales[-1], p["trials"], seed, p["p"], (i, shards))
                                for i in range(shards)])
        for R in scales:
            hits = int(np.count_nonzero(radii >= R))
            q = hits / p["trials"]
            points.append({"scale": R, "pHat": q, "stdErr": math.sqrt(q * (1 - q) / p["trials"]), "hits": hits})
    else:
        for R in scales:
            spec = _spec(p, R)
            est = mc_estimate(spec, p["p"], p["trials"], seed, shards=shards, workers=workers)
            points.append({"scale": R, "pHat": est.pHat, "stdErr": est.stdErr, "hits": est.hits})
    fits = {}
    usable = [(q["scale"], q["pHat"]) for q in points if q["pHat"] > 0]
    if len(usable) >= 3 and len(usable) == len(points):
        fits["powerLaw"] = _fit_dict(fit_exponent(usable))
    return {"points": points, "trials": p["trials"]}, fits


def _spec(p: dict, R: int) -> ArmEventSpec:
    e = p["event"]
    if e == "disjointOpenArms":
        return ArmEventSpec(e, R=R, r=p["r"], k=p["k"], halfPlane=p["halfPlane"])
    if e == "multichromaticArms":
        return ArmEventSpec(e, R=R, r=p["r"], colors=tuple(p["colors"].upper()), halfPlane=p["halfPlane"])
    if e in ("annulusCrossing", "closedAnnulusCrossing"):
        return ArmEventSpec(e, R=R, r=p["r"])
    if e == "rhombusCrossing":
        return ArmEventSpec(e, L=R, L2=p["L2"])
    return ArmEventSpec(e, R=R)


def _run_loop(p: dict, seed: int, method: str) -> tuple[dict, dict]:
    if method == "trace":
        fit = estimate_loop_free_exponent(p["kappa"], "trace", p["paths"], seed=seed, batches=p["batches"],
                                          radii=p["radii"], trace_dt=p["dt"], tol_factor=p["tolFactor"])
        points = [{"scale": s, "pHat": q, "stdErr": math.sqrt(q * (1 - q) / p["paths"])} for s, q in fit.points]
    else:
        fit = estimate_loop_free_exponent(p["kappa"], "diffusion", p["paths"], dt=p["dt"], t_fit=p["tFit"],
                                          seed=seed, batches=p["batches"])
        points = [{"scale": s, "pHat": q, "stdErr": math.sqrt(q * (1 - q) / p["paths"])} for s, q in fit.points]
    est = {"lambda": fit.exponent, "stdErr": fit.slopeStdErr, "points": points}
    return est, {"powerLaw": _fit_dict(fit)}


def _run_eigen1d(p: dict) -> tuple[dict, dict]:
    res = solve_eigen_1d(p["kappa"], p["n"], p["method"], p["levels"])
    trace = [{"scale": h, "lambda": lam} for h, lam in res.meshTrace]
    return {"lambda": res.lam, "meshTrace": trace, "observedOrder": res.meta.get("observedOrder")}, {}


def _run_backbone(p: dict) -> tuple[dict, dict]:
    if p["form"] == "alphaGamma":
        res = solve_backbone_2d(p["meshes"], p["method"], p["edge"], p["eps"], p["edgeExponent"])
    else:
        res = solve_backbone_symmetric(p["meshes"], p["method"], p["edgeExponent"])
    trace = [{"scale": M, "lambda": lam} for M, lam in res.meshTrace]
    return {"lambda": res.lam, "meshTrace": trace, "observedOrder": res.meta["observedOrder"],
            "meshError": res.meta["meshError"]}, {}


def _run_cardy(p: dict) -> tuple[dict, dict]:
    return {"values": [{"m": m, "value": cardy_formula(m)} for m in p["m"]],
            "value": cardy_formula(p["m"][0])}, {}


def run_experiment(engine: str, params: dict, seed: int, workers: int = 1) -> ResultRecord:
    """Run one validated configuration and return its record."""
    t0 = time.perf_counter()
    if engine == "percolation":
        est, fits = _run_percolation(params, seed, workers)
    elif engine == "sle":
        est, fits = _run_loop(params, seed, "trace")
    elif engine == "diffusion":
        est, fits = _run_loop(params, seed, "diffusion")
    elif engine == "eigen1d":
        est, fits = _run_eigen1d(params)
    elif engine == "backbone":
        est, fits = _run_backbone(params)
    elif engine == "cardy":
        est, fits = _run_cardy(params)
    else:
        raise ConfigError(f"unknown engine {engine!r}")
    return ResultRecord(engine, params, est, fits, time.perf_counter() - t0, seed)


# ---------------------------------------------------------------- output

def _rows(rec: dict):
    est = rec["estimates"]
    for q in est.get("points", []):
        yield q.get("scale"), q.get("pHat"), q.get("stdErr"), est.get("lambda")
    for q in est.get("meshTrace", []):
        yield q["scale"], None, None, q["lambda"]
    for q in est.get("values", []):
        yield q["m"], q["value"], None, None


def emit_report(records: list, fmt: str) -> str:
    """Render records as json lines, csv or plot data (x y yErr)."""
    if not records:
        raise ConfigError("no records to report")
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}")
    dicts = [r.to_dict() if isinstance(r, ResultRecord) else _round(r) for r in records]
    if fmt == "json":
        return "".join(json.dumps(d, sort_keys=True) + "\n" for d in dicts)
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for d in dicts:
            for scale, q, err, lam in _rows(d):
                w.writerow([d["engine"], d["seed"]] + ["" if x is None else x for x in (scale, q, err, lam)])
        return buf.getvalue()
    buf.write("# x y yErr\n")
    for d in dicts:
        buf.write(f"# engine={d['engine']} seed={d['seed']}\n")
        for scale, q, err, lam in _rows(d):
            y = q if q is not None else lam
            buf.write(f"{_g(scale)} {_g(y)} {_g(err or 0.0)}\n")
    return buf.getvalue()


def _g(x) -> str:
    return format(float(x), ".12g")


def load_records(paths) -> list:
    records = []
    for path in paths:
        try:
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        records.append(ResultRecord.from_dict(json.loads(line)))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"cannot read records from {path}: {exc}") from None
    return records


def _write(text: str, out: str | None, fmt: str):
    if out is None:
        sys.stdout.write(text)
        return
    suffix = {"json": ".jsonl", "csv": ".csv", "plotdata": ".dat"}[fmt]
    try:
        with open(out + suffix, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {out + suffix}: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="armlab", description=__doc__.splitlines()[0])
    ap.add_argument("engine", choices=ENGINES + ("report",))
    ap.add_argument("settings", nargs="*", help="key=value overrides")
    ap.add_argument("--config", help="flat key=value file")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="output path prefix (default: stdout)")
    ap.add_argument("--format", choices=FORMATS, default="json")
    ap.add_argument("--workers", type=int, default=1)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if args.workers < 1:
            raise ConfigError("workers must be positive")
        raw = {}
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    raw.update(read_config(fh.read()))
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        raw.update(read_config("\n".join(args.settings)))
        params = validate(args.engine, raw)
        if args.engine == "report":
            records = load_records(params["inputs"])
        else:
            records = [run_experiment(args.engine, params, args.seed, args.workers)]
        text = emit_report(records, args.format)
        _write(text, args.out, args.format)
    except ConfigError as exc:
        _error("config", str(exc))
        return 1
    except (ConvergenceError, FloatingPointError, ArithmeticError) as exc:
        _error("numerical", str(exc))
        return 2
    except ValueError as exc:
        _error("config", str(exc))
        return 1
    return 0


def _error(kind: str, message: str):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
