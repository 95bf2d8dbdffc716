"""Command-line front end: ``fkit weight|star|verify|duflo``.

Exit codes: 0 ok, 2 unparseable input or invalid graph, 3 budget exceeded,
4 verification failure.  Diagnostics go to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import duflo, integrate, verify
from .algebra import Poly, PolyVectorField, parse_poly
from .formality import TruncationPolicy, WeightTable, constant_pi, series_table, star, to_json
from .graphs import CapacityError, decode_vertex, graph_from_json, make_graph, validate

EXIT_OK, EXIT_PARSE, EXIT_BUDGET, EXIT_VERIFY = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, **extra):
        super().__init__(message)
        self.code, self.kind, self.extra = code, kind, extra


@dataclass
class RunConfig:
    command: str
    inputs: list = field(default_factory=list)
    policy: TruncationPolicy = field(default_factory=TruncationPolicy)
    seed: int = 0
    cache_path: str | None = None
    out: str | None = None


# -- input parsing --------------------------------------------------------------

def parse_graph_spec(text: str):
    """A graph from a JSON file, inline JSON, or a key like ``K1.2|b1,b2``."""
    if os.path.exists(text):
        return graph_from_json(Path(text).read_text(encoding="utf-8"))
    if text.lstrip().startswith("{"):
        return graph_from_json(text)
    head, _, body = text.partition("|")
    if not head or head[0] not in "KS" or "." not in head:
        raise ValueError(f"not a graph file, JSON object or key: {text!r}")
    n, m = (int(x) for x in head[1:].split("."))
    stars = [[t for t in s.split(",") if t] for s in body.split(";")] if body else []
    special = head[0] == "S"
    want = n + (1 if special else 0)
    stars += [[]] * (want - len(stars))
    for s in stars:
        for t in s:
            decode_vertex(t)
    return make_graph(n, m, stars, special=special)


def load_poisson(spec: str) -> PolyVectorField:
    """``constant`` (d1^d2 on R^2), a Lie algebra name or JSON file (its
    linear Poisson structure), or a JSON file ``{"dim": d, "bivector":
    {"1,2": "x3", ...}}``."""
    if spec in ("constant", "const"):
        return constant_pi(2)
    if spec in duflo.ALGEBRAS:
        return duflo.kks_bivector(duflo.ALGEBRAS[spec]())
    data = json.loads(Path(spec).read_text(encoding="utf-8"))
    if "bivector" not in data:
        return duflo.kks_bivector(duflo.LieAlgebra.from_json(json.dumps(data), name=spec))
    d = int(data["dim"])
    comps = {}
    for idx, coef in data["bivector"].items():
        i, j = (int(x) - 1 for x in idx.split(","))
        if not (0 <= i < d and 0 <= j < d) or i == j:
            raise ValueError(f"bad bivector index {idx!r}")
        p = parse_poly(str(coef), d)
        key, sign = ((i, j), 1) if i < j else ((j, i), -1)
        comps[key] = comps.get(key, Poly.zero(d)) + p * sign
    return PolyVectorField(d, 2, comps)


# -- output -----------------------------------------------------------------------

def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        Path(cfg.out).write_text(text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")


def _number(x: float, exact: bool):
    if exact and float(x).is_integer():
        return int(x)
    return x


def estimate_record(g, est: integrate.WeightEstimate) -> dict:
    return {"graph": g.key, "value": _number(est.value, est.exact), "std_error": est.std_error,
            "exact": est.exact, "samples": est.samples, "seed": est.seed, "rejected": est.rejected}


def numeric_text(p: Poly, table, digits: int = 6) -> str:
    """Poly with weight symbols replaced by their estimates, as text."""
    from .scalars import scalar_value
    parts = []
    for e in sorted(p.terms, key=lambda e: (-sum(e), tuple(-x for x in e))):
        v = round(scalar_value(p.terms[e], table)[0], digits)
        if not v:
            continue
        mono = "*".join(f"x{i + 1}" + (f"^{k}" if k > 1 else "") for i, k in enumerate(e) if k)
        mag = f"{abs(v):.{digits}g}"
        body = mono if mono and mag == "1" else "*".join(x for x in (mag, mono) if x)
        parts.append(("-" if v < 0 else "+", body))
    if not parts:
        return "0"
    out = ("-" if parts[0][0] == "-" else "") + parts[0][1]
    return out + "".join(f" {sg} {body}" for sg, body in parts[1:])


def series_text(series, table) -> str:
    parts = []
    for k, c in enumerate(series.coeffs):
        body = numeric_text(c, table)
        if body == "0":
            continue
        parts.append(body if k == 0 else f"ħ{'' if k == 1 else f'^{k}'}*({body})")
    return " + ".join(parts) or "0"


# -- commands ---------------------------------------------------------------------

def _cache(cfg: RunConfig):
    return integrate.WeightCache(cfg.cache_path) if cfg.cache_path else integrate.WeightCache()


def cmd_weight(cfg: RunConfig) -> int:
    try:
        g = parse_graph_spec(cfg.inputs[0])
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(EXIT_PARSE, "parse", str(exc)) from exc
    problems = validate(g)
    if problems:
        raise CliError(EXIT_PARSE, "invalid-graph", "; ".join(problems), graph=g.key)
    cache = _cache(cfg)
    try:
        est = integrate.weight(g, samples=cfg.policy.samples, seed=cfg.seed, cache=cache, jobs=cfg.policy.jobs)
    except ValueError as exc:
        raise CliError(EXIT_PARSE, "invalid-graph", str(exc), graph=g.key) from exc
    cache.flush()
    _emit(cfg, json.dumps(estimate_record(g, est), sort_keys=True))
    return EXIT_OK


def cmd_star(cfg: RunConfig, csv_path: str | None = None) -> int:
    spec, f_txt, g_txt = cfg.inputs
    try:
        pi = load_poisson(spec)
        f, g = parse_poly(f_txt, pi.d), parse_poly(g_txt, pi.d)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_PARSE, "parse", str(exc)) from exc
    table = WeightTable()
    S = star(pi, cfg.policy, table)
    series = S.star(f, g)
    report = {"f": f_txt, "g": g_txt, "order": cfg.policy.order, "text": series_text(series, table),
              "orders": series_table(series, table), "weights": table.provenance()}
    if csv_path:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["order", "monomial", "value", "error"])
            for o in report["orders"]:
                for t in o["terms"]:
                    w.writerow([o["order"], " ".join(map(str, t["monomial"])), t["value"], t["error"]])
    _emit(cfg, to_json(report))
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    name = cfg.inputs[0]
    if name not in verify.SUITES:
        raise CliError(EXIT_PARSE, "parse", f"unknown suite {name!r}", choices=list(verify.SUITES))
    if name == "duflo" and len(cfg.inputs) > 1:
        rep = verify.suite_duflo(cfg.policy, algebras=cfg.inputs[1:])
        rep["suite"] = name
    else:
        rep = verify.run_suite(name, cfg.policy)
    _emit(cfg, to_json(rep))
    if not rep["ok"]:
        raise CliError(EXIT_VERIFY, "verification-failed", f"suite {name} failed", suite=name)
    return EXIT_OK


def cmd_duflo(cfg: RunConfig, degree: int | None = None) -> int:
    alg, elem = cfg.inputs
    try:
        L = duflo.load_algebra(alg)
        p = parse_poly(elem, L.dim)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_PARSE, "parse", str(exc)) from exc
    try:
        u = duflo.duflo_map(L, p, D_max=degree)
    except ValueError as exc:
        raise CliError(EXIT_PARSE, "parse", str(exc)) from exc
    _emit(cfg, repr(u))
    return EXIT_OK


# -- argument handling ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--order", type=int, default=2, help="truncation order in hbar")
    common.add_argument("--samples", type=int, default=1 << 18, help="QMC samples per weight")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=5e-2, help="absolute tolerance floor")
    common.add_argument("--cache", default=None, help="weight cache file (JSON lines)")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    common.add_argument("--out", default=None, help="write the result here instead of stdout")

    ap = argparse.ArgumentParser(prog="fkit", description="Graph weights, star products and formality checks.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("weight", parents=[common], help="weight of one graph")
    p.add_argument("graph", help="graph JSON file, inline JSON, or key such as K1.2|b1,b2")
    p = sub.add_parser("star", parents=[common], help="f star g as a series in hbar")
    p.add_argument("poisson", help="constant | sl2 | so3 | heisenberg | JSON file")
    p.add_argument("f")
    p.add_argument("g")
    p.add_argument("--csv", default=None, help="also write a coefficient table as CSV")
    p = sub.add_parser("verify", parents=[common], help="run a verification suite")
    p.add_argument("suite", help=" | ".join(verify.SUITES))
    p.add_argument("extra", nargs="*", help="algebras for the duflo suite")
    p = sub.add_parser("duflo", parents=[common], help="Duflo map of a polynomial, in PBW form")
    p.add_argument("algebra", help="abelian | heisenberg | sl2 | so3 | JSON file")
    p.add_argument("element")
    p.add_argument("--degree", type=int, default=None, help="truncation degree of J^(1/2)")
    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    inputs = {"weight": [args.__dict__.get("graph")],
              "star": [getattr(args, "poisson", None), getattr(args, "f", None), getattr(args, "g", None)],
              "verify": [getattr(args, "suite", None), *getattr(args, "extra", [])],
              "duflo": [getattr(args, "algebra", None), getattr(args, "element", None)]}[args.command]
    try:
        cache = integrate.WeightCache(args.cache) if args.cache else None
        policy = TruncationPolicy(order=args.order, samples=args.samples, seed=args.seed, abs_tol=args.tol,
                                  jobs=max(1, args.jobs), cache=cache)
    except integrate.CacheFormatError as exc:
        raise CliError(EXIT_PARSE, "cache", str(exc)) from exc
    except ValueError as exc:
        raise CliError(EXIT_PARSE, "parse", str(exc)) from exc
    return RunConfig(args.command, inputs, policy, args.seed, args.cache, args.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "weight":
            return cmd_weight(cfg)
        if args.command == "star":
            return cmd_star(cfg, args.csv)
        if args.command == "verify":
            return cmd_verify(cfg)
        return cmd_duflo(cfg, args.degree)
    except CliError as exc:
        err = {"error": exc.kind, "message": str(exc), "exit_code": exc.code, **exc.extra}
    except CapacityError as exc:
        err = {"error": "budget", "message": str(exc), "exit_code": EXIT_BUDGET}
    except integrate.CacheFormatError as exc:
        err = {"error": "cache", "message": str(exc), "exit_code": EXIT_PARSE}
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return err["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
