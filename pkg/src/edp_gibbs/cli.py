"""Command-line front end: seeded experiments with CSV + manifest output.

Every experiment resolves its configuration to a canonical document,
hashes it, and stamps the hash on each CSV row, so any table can be
traced back to the exact invocation.  Numeric cells use the shortest
round-trip decimal representation.  The manifest is the only place wall
time appears; everything else is a pure function of (config, seed),
including under EDP_THREADS-parallel execution.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import re
import sys
import time

import numpy as np

from . import __version__
from .conditional import conditioning_point, tv_distance
from .densities import (DensitySpec, double_exp, from_document,
                        regularity_report, weibull)
from .edgeworth import edgeworth_error_scan
from .errors import NumericError, PreconditionError
from .sampling import democracy_demo
from .tail import exceedance_grid, exceedance_raw_log_integral, \
    mc_tail_estimate
from .tilting import asymptotic_moments, skewness_ratio, solve_tilt

EXPERIMENTS = ("density-check", "tilt", "edgeworth", "conditional-tv",
               "tail", "exceedance", "democracy")


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage problems; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def parse_spec_text(text: str) -> DensitySpec:
    """`family:param=value,...`, a bare family name, or a JSON file path."""
    head = text.split(":", 1)[0]
    if head in ("weibull", "double_exp", "double-exp"):
        params = {}
        if ":" in text:
            for piece in text.split(":", 1)[1].split(","):
                if not piece.strip():
                    continue
                key, _, value = piece.partition("=")
                if not _:
                    raise ValueError(f"malformed spec parameter {piece!r}")
                params[key.strip()] = float(value)
        if head == "weibull":
            return weibull(params.pop("k", 2.0))
        if params:
            raise ValueError(f"unknown parameters for {head}: {params}")
        return double_exp()
    if os.path.exists(text):
        with open(text, encoding="utf-8") as fh:
            return from_document(json.load(fh))
    raise ValueError(
        f"spec {text!r} is neither a known family nor an existing file")


def parse_int_list(text: str) -> list[int]:
    return [int(piece) for piece in text.split(",") if piece.strip()]


def parse_float_list(text: str) -> list[float]:
    return [float(piece) for piece in text.split(",") if piece.strip()]


_SCHEDULE_RE = re.compile(r"(fixed|power|log)\(([^)]*)\)\Z")


def parse_schedule(text: str):
    """fixed(a) | power(c, alpha) for c*n^alpha | log(c) for c*log n."""
    match = _SCHEDULE_RE.fullmatch(text.strip())
    if not match:
        raise ValueError(f"malformed schedule {text!r}; expected "
                         "fixed(a), power(c,alpha), or log(c)")
    name, argtext = match.groups()
    args = [float(piece) for piece in argtext.split(",") if piece.strip()]
    counts = {"fixed": 1, "power": 2, "log": 1}
    if len(args) != counts[name]:
        raise ValueError(f"schedule {name} takes {counts[name]} "
                         f"parameter(s), got {len(args)}")
    if name == "fixed":
        return lambda n: args[0]
    if name == "power":
        return lambda n: args[0] * float(n) ** args[1]
    return lambda n: args[0] * math.log(n)


def _cell(value) -> str:
    """Shortest round-trip text for a CSV cell."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def config_hash(document: dict) -> str:
    canon = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(canon.encode(), digest_size=8).hexdigest()


def write_table(path: str, headers: list, rows: list, chash: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(headers) + ["config_hash"])
        for row in rows:
            writer.writerow([_cell(v) for v in row] + [chash])


def _resolve_levels(args, parser, multi_a: bool):
    """One (n, a_n) pair per experiment row from --n/--a/--a-schedule."""
    if args.a is not None and args.a_schedule is not None:
        parser.error("--a and --a-schedule are mutually exclusive")
    n_list = args.n
    if args.a_schedule is not None:
        schedule = parse_schedule(args.a_schedule)
        return [(n, float(schedule(n))) for n in n_list]
    a_list = args.a if args.a is not None else [2.0]
    if len(a_list) > 1 and len(n_list) > 1:
        parser.error("vary either --n or --a, not both")
    if len(a_list) > 1:
        if not multi_a:
            parser.error("this experiment takes a single --a")
        return [(n_list[0], a) for a in a_list]
    return [(n, a_list[0]) for n in n_list]


def _run_density_check(spec, args, levels):
    report = regularity_report(spec)
    headers = ["condition", "value", "ok", "class_label"]
    rows = [[name, value, ok, report.class_label]
            for name, (value, ok) in sorted(report.conditions.items())]
    rows.append(["all_conditions", float(report.ok), report.ok,
                 report.class_label])
    return headers, rows, {}


def _run_tilt(spec, args, levels):
    headers = ["a", "t", "log_phi", "m", "s2", "mu3", "skewness",
               "m_over_psi", "s2_over_psi1", "mu3_over_6psi2"]
    rows = []
    for _, a in levels:
        rec = solve_tilt(spec, a)
        comp = asymptotic_moments(spec, rec.t)
        rows.append([a, rec.t, rec.log_phi, rec.m, rec.s2, rec.mu3,
                     skewness_ratio(spec, rec.t), comp.ratios[0],
                     comp.ratios[1], comp.ratios[2]])
    return headers, rows, {}


def _run_edgeworth(spec, args, levels):
    headers = ["n", "a_n", "sup_error", "sup_error_times_sqrt_n"]
    schedule = {n: a for n, a in levels}
    reports = edgeworth_error_scan(spec, lambda n: schedule[n],
                                   [n for n, _ in levels],
                                   points=args.grid_points)
    rows = [[r.n, r.a_n, r.sup_error, r.sup_error_times_sqrt_n]
            for r in reports]
    return headers, rows, {}


def _run_conditional_tv(spec, args, levels):
    headers = ["n", "a_n", "tv_fixed", "ratio_min", "ratio_max"]
    rows, documents = [], {}
    for n, a in levels:
        point = conditioning_point(spec, n, a, k=args.k)
        report = tv_distance(spec, point, points=args.grid_points)
        lo, hi = report.pointwise_ratio_band
        rows.append([n, a, report.tv_fixed, lo, hi])
        documents[f"conditional_report_n{n}.json"] = {
            "n": n,
            "a_n": a,
            "k": args.k,
            "t": point.t,
            "growth_value": point.growth_value,
            "tv_fixed": report.tv_fixed,
            "tv_baseline": report.tv_baseline,
            "pointwise_ratio_band": [float(lo), float(hi)],
            "probe_x": [float(v) for v in report.probe_x],
        }
    return headers, rows, documents


def _run_tail(spec, args, levels):
    headers = ["n", "a_n", "log_p_analytic", "log_p_mc", "mc_std_err",
               "mc_samples", "seed"]
    rows = []
    for n, a in levels:
        est = mc_tail_estimate(spec, n, a, args.samples, args.seed)
        rows.append([est.n, est.a_n, est.log_p_analytic, est.log_p_mc,
                     est.mc_std_err, est.mc_samples, args.seed])
    return headers, rows, {}


def _run_exceedance(spec, args, levels):
    if len(levels) != 1:
        raise PreconditionError("exceedance emits one curve per run; "
                                "pass a single --n and --a")
    n, a = levels[0]
    x, log_density = exceedance_grid(spec, n, a, points=args.grid_points)
    headers = ["y", "log_density"]
    rows = [[float(xi), float(li)] for xi, li in zip(x, log_density)]
    extras = {"raw_log_integral": exceedance_raw_log_integral(spec, n, a)}
    return headers, rows, extras


def _run_democracy(spec, args, levels):
    headers = ["n", "a_n", "epsilon", "fraction", "std_err", "count"]
    rows = []
    for n, a in levels:
        est = democracy_demo(spec, n, a, args.eps, args.samples, args.seed)
        rows.append([est.n, est.a_n, est.epsilon, est.fraction,
                     est.std_err, est.count])
    return headers, rows, {}


_RUNNERS = {
    "density-check": _run_density_check,
    "tilt": _run_tilt,
    "edgeworth": _run_edgeworth,
    "conditional-tv": _run_conditional_tv,
    "tail": _run_tail,
    "exceedance": _run_exceedance,
    "democracy": _run_democracy,
}


def build_parser() -> _Parser:
    parser = _Parser(prog="edp-gibbs",
                     description="Tilted-density experiments with "
                                 "deterministic seeded Monte Carlo.")
    sub = parser.add_subparsers(dest="experiment", metavar="experiment",
                                parser_class=_Parser)
    sub.required = True
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--spec", default="weibull:k=2",
                       help="family:param=value,... or a JSON file path")
        p.add_argument("--n", type=parse_int_list, default=[16],
                       help="comma-separated sample sizes")
        p.add_argument("--a", type=parse_float_list, default=None,
                       help="conditioning level(s), comma-separated")
        p.add_argument("--a-schedule", default=None,
                       help="fixed(a) | power(c,alpha) | log(c)")
        p.add_argument("--k", type=int, default=1,
                       help="number of conditioned coordinates")
        p.add_argument("--eps", type=float, default=1.0,
                       help="democracy window half-width")
        p.add_argument("--samples", type=int, default=100_000,
                       help="Monte Carlo draw count")
        p.add_argument("--seed", type=int, default=0,
                       help="64-bit master seed")
        p.add_argument("--grid-points", type=int, default=1 << 14,
                       help="grid resolution for density evaluations")
        p.add_argument("--out", default=".",
                       help="output directory for CSV + manifest")
    return parser


def run(args, parser) -> int:
    started = time.monotonic()
    try:
        spec = parse_spec_text(args.spec)
    except ValueError as exc:
        parser.error(str(exc))
    try:
        levels = _resolve_levels(args, parser,
                                 multi_a=args.experiment in
                                 ("tilt", "democracy", "conditional-tv"))
        headers, rows, extras = _RUNNERS[args.experiment](spec, args,
                                                          levels)
    except ValueError as exc:
        parser.error(str(exc))
    except PreconditionError as exc:
        print(f"edp-gibbs: precondition failed: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"edp-gibbs: numeric failure: {exc}", file=sys.stderr)
        return 3

    config = {
        "experiment": args.experiment,
        "spec": args.spec,
        "n": list(args.n),
        "a": list(args.a) if args.a is not None else None,
        "a_schedule": args.a_schedule,
        "k": args.k,
        "eps": args.eps,
        "samples": args.samples,
        "seed": args.seed,
        "grid_points": args.grid_points,
    }
    chash = config_hash(config)
    os.makedirs(args.out, exist_ok=True)
    csv_name = f"{args.experiment}.csv"
    write_table(os.path.join(args.out, csv_name), headers, rows, chash)
    files = [csv_name]

    documents = {k: v for k, v in extras.items() if isinstance(v, dict)}
    scalars = {k: v for k, v in extras.items() if not isinstance(v, dict)}
    for name, document in sorted(documents.items()):
        with open(os.path.join(args.out, name), "w",
                  encoding="utf-8") as fh:
            json.dump({"config_hash": chash, **document}, fh,
                      sort_keys=True, indent=2)
            fh.write("\n")
        files.append(name)

    manifest = {
        "code_version": __version__,
        "config": config,
        "config_hash": chash,
        "experiment": args.experiment,
        "files": files,
        "wall_time_s": time.monotonic() - started,
    }
    manifest.update(scalars)
    with open(os.path.join(args.out, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return run(args, parser)


if __name__ == "__main__":
    sys.exit(main())
