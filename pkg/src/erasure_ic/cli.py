"""Command-line front end.

Every report carries the seed, a hash of the resolved options and the package
version. CSV output puts that metadata on leading ``#`` lines.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .converse import check_identity, lemma_grid, search_lemma
from .errors import ErasureICError
from .experiments import simulate
from .protocol import PAYLOAD_POLICIES, PHASE1_RULES, ProtocolConfig
from .region import (
    boundary_polyline,
    capacity_region,
    feasible_grid,
    feasible_set,
    solve_joint_distribution,
    sum_rate_curve,
)

EXIT_OK, EXIT_TARGET, EXIT_USAGE = 0, 1, 2
FIG2_RHOS = (-1.0, -0.5, 0.0, 0.5, 1.0)
IDENTITY_RHOS = tuple(np.round(np.arange(-1.0, 1.0001, 0.25), 10))

REGION_FIELDS = ("rho", "R1", "R2")
SWEEP_FIELDS = ("rho", "p", "sum_rate")
SIMULATE_FIELDS = (
    "p", "rho", "m", "trials", "policy", "mean_rate1", "mean_rate2", "theory_rate",
    "mean_slots", "theory_slots", "err_I", "err_II", "err_III", "decode_fail",
)


class UsageError(Exception):
    pass


def config_hash(options: dict) -> str:
    blob = json.dumps(options, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _metadata(command: str, options: dict) -> dict:
    return {
        "command": command,
        "seed": options.get("seed"),
        "config_hash": config_hash({"command": command, **options}),
        "version": __version__,
        "options": options,
    }


def _emit(meta: dict, fields: Sequence[str], rows: list[dict], extra: dict, fmt: str, out: str | None) -> None:
    if fmt == "json":
        text = json.dumps({"metadata": meta, "rows": rows, **extra}, indent=2, sort_keys=False, default=_json_default) + "\n"
    else:
        buf = io.StringIO()
        for key in ("command", "seed", "config_hash", "version"):
            buf.write(f"# {key}={meta[key]}\n")
        w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in r.items()})
        text = buf.getvalue()
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _options(args: argparse.Namespace, *names: str) -> dict:
    return {n: getattr(args, n) for n in names}


# ------------------------------------------------------------------ commands


def cmd_region(args) -> int:
    rows, errors = [], []
    for rho in args.rho:
        try:
            region = capacity_region(args.p, rho)
        except ErasureICError as exc:
            print(f"skipping rho={rho}: {exc}", file=sys.stderr)
            errors.append({"rho": rho, "error": str(exc)})
            continue
        for r1, r2 in boundary_polyline(region, args.resolution):
            rows.append({"rho": rho, "R1": r1, "R2": r2})
    if not rows:
        raise UsageError("no feasible (p, rho) pair to draw")
    meta = _metadata("region", _options(args, "p", "rho", "resolution", "seed"))
    _emit(meta, REGION_FIELDS, rows, {"errors": errors}, args.format, args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.steps < 2:
        raise UsageError("--steps must be >= 2")
    step = 1.0 / (args.steps - 1)
    rows = []
    for rho in args.rho:
        curve = sum_rate_curve(rho, feasible_grid(rho, step))
        rows += [{"rho": rho, "p": p, "sum_rate": s} for p, s in curve.points]
    meta = _metadata("sumrate-sweep", _options(args, "rho", "steps", "seed"))
    _emit(meta, SWEEP_FIELDS, rows, {}, args.format, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    points = [(p, rho) for p in args.p for rho in args.rho]
    configs = []
    for p, rho in points:
        try:
            configs.append(ProtocolConfig(
                m=args.m, p=p, rho=rho, seed=args.seed,
                payload_policy=args.policy, phase1_rule=args.phase1_rule,
            ))
        except ValueError as exc:
            raise UsageError(f"(p={p}, rho={rho}): {exc}") from exc
    rows, details, ok = [], [], True
    for cfg in configs:
        s = simulate(cfg, args.trials, args.workers)
        ok &= s.ok
        rows.append(s.row())
        for c in s.checks:
            print(f"[p={cfg.p} rho={cfg.rho}] {c.line()}", file=sys.stderr)
        details.append({
            "p": cfg.p,
            "rho": cfg.rho,
            "success_rate": s.success_rate,
            "mean_phase_slots": list(s.phase_slots),
            "wrong_decodes": s.wrong_decodes,
            "outside_region": s.outside_region,
            "checks": [{"name": c.name, "passed": c.passed, "value": float(c.value), "limit": float(c.limit)} for c in s.checks],
        })
    opts = _options(args, "p", "rho", "m", "trials", "seed", "policy", "phase1_rule")
    _emit(_metadata("simulate", opts), SIMULATE_FIELDS, rows, {"details": details}, args.format, args.out)
    return EXIT_OK if ok else EXIT_TARGET


def cmd_verify_lemma(args) -> int:
    if args.p is None and args.rho is None:
        dists = lemma_grid()
    else:
        ps = args.p or [0.25, 0.5, 0.75]
        rhos = args.rho or [-0.5, 0.0, 0.5, 1.0]
        dists = []
        for p in ps:
            for rho in rhos:
                if p > 0 and p in feasible_set(rho):
                    dists.append(solve_joint_distribution(p, rho))
    if not dists:
        raise UsageError("no feasible grid point with p != 0")
    res = search_lemma(dists, random_tables=args.tables, seed=args.seed)
    rows = [
        {"p": p, "rho": rho, "encoders": res.encoders, "min_margin": mg,
         "counterexamples": sum(1 for _, d, _ in res.counterexamples if (d.p, d.rho) == (p, rho))}
        for (p, rho), mg in res.per_point.items()
    ]
    bad = [{"p": d.p, "rho": d.rho, "margin": mg, "encoder": enc.describe()} for enc, d, mg in res.counterexamples]
    meta = _metadata("verify-lemma", _options(args, "p", "rho", "tables", "seed"))
    _emit(meta, ("p", "rho", "encoders", "min_margin", "counterexamples"), rows, {"counterexamples": bad}, args.format, args.out)
    return EXIT_TARGET if bad else EXIT_OK


def cmd_identities(args) -> int:
    rhos = args.rho or list(IDENTITY_RHOS)
    rows = []
    worst = 0.0
    for rho in rhos:
        s = feasible_set(rho)
        ps = np.linspace(s.lo, s.hi, args.points) if not s.is_singleton else [s.lo]
        res = max(check_identity(float(p), rho) for p in ps)
        worst = max(worst, res)
        rows.append({"rho": rho, "points": len(ps), "max_residual": res})
    meta = _metadata("check-identities", _options(args, "rho", "points", "seed"))
    _emit(meta, ("rho", "points", "max_residual"), rows, {"max_residual": worst}, args.format, args.out)
    return EXIT_OK if worst < 1e-12 else EXIT_TARGET


# --------------------------------------------------------------------- parser


def _common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None, help="output path (default: stdout)")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="erasure-ic", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("region", help="capacity region boundary polylines")
    sp.add_argument("--p", type=float, default=0.5)
    sp.add_argument("--rho", type=float, nargs="+", default=[-1.0, 0.0, 1.0])
    sp.add_argument("--resolution", type=int, default=2, help="minimum points per polyline")
    _common(sp)
    sp.set_defaults(func=cmd_region)

    sp = sub.add_parser("sumrate-sweep", help="maximum symmetric sum-rate against p")
    sp.add_argument("--rho", type=float, nargs="+", default=list(FIG2_RHOS))
    sp.add_argument("--steps", type=int, default=21, help="grid points across [0, 1]")
    _common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("simulate", help="Monte Carlo runs of the three-phase protocol")
    sp.add_argument("--p", type=float, nargs="+", default=[0.5])
    sp.add_argument("--rho", type=float, nargs="+", default=[0.0])
    sp.add_argument("--m", type=int, default=2000)
    sp.add_argument("--trials", type=int, default=50)
    sp.add_argument("--policy", choices=PAYLOAD_POLICIES, default="paper-literal")
    sp.add_argument("--phase1-rule", dest="phase1_rule", choices=PHASE1_RULES, default="inverse-departure")
    sp.add_argument("--workers", type=int, default=1)
    _common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify-lemma", help="search for encoders violating the entropy inequality")
    sp.add_argument("--p", type=float, nargs="+", default=None)
    sp.add_argument("--rho", type=float, nargs="+", default=None)
    sp.add_argument("--tables", type=int, default=10_000, help="random two-slot encoder tables per point")
    _common(sp)
    sp.set_defaults(func=cmd_verify_lemma)

    sp = sub.add_parser("check-identities", help="residual of p * beta = 1 - p00")
    sp.add_argument("--rho", type=float, nargs="+", default=None)
    sp.add_argument("--points", type=int, default=50)
    _common(sp)
    sp.set_defaults(func=cmd_identities)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
