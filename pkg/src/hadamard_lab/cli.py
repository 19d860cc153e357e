"""Command-line front end.

Subcommands::

    hadamard-lab analyze transience --model M.json
    hadamard-lab analyze dpi        --model M.json --eps 0.01
    hadamard-lab analyze martin     --model M.json
    hadamard-lab simulate bm        --model M.json --paths 10000 --seed 7
    hadamard-lab report all         --model M.json

Each run writes one JSON report (``--out``, default stdout) and optional CSV
series (``--emit-csv DIR``).  Exit status: 0 on success, 2 when inconclusive
or not-found verdicts make up at least half of the verdicts, 1 on errors and
64 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys

import numpy as np
import scipy
from scipy import stats

from . import __version__
from .brownian import (
    SimConfig,
    confinement_from_batch,
    detect_atoms,
    hitting_measure_from_batch,
    simulate,
    traces_to_csv,
)
from .criteria import (
    INCONCLUSIVE,
    ConvergenceVerdict,
    dpi_certificate,
    doyle_transience,
    radial_transience,
)
from .errors import HadamardLabError, InsufficientSamples, NotTransient
from .jacobi import DEFAULT_TOL
from .potential import martin_finite_length, martin_integrand_samples
from .surface import load_model
from .uniformize import DiskMap, boundary_correspondence_report

SCHEMA = "hadamard-lab/1"
EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.add_argument("--emit-csv", metavar="DIR", help="directory for CSV plot series")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="ODE tolerance")
    p.add_argument("--theta0", type=float, default=0.0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)


def _dpi_args(p):
    p.add_argument("--beta", type=float, default=0.5, help="sector half-width")
    p.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.01, 0.001])


def _sim_args(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paths", type=int, default=10_000)
    p.add_argument("--r0", type=float, default=0.01, help="start radius (pole proxy)")
    p.add_argument("--r-escape", type=float, default=None)
    p.add_argument("--dt", type=float, default=SimConfig.dt_base)
    p.add_argument("--delta", type=float, default=0.3, help="confinement half-width")
    p.add_argument("--confine-r0", type=float, nargs="*", default=[],
                   help="extra start radii for confinement estimates")
    p.add_argument("--traces", type=int, default=0, help="number of paths to trace")


def build_parser():
    parser = _Parser(prog="hadamard-lab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    analyze = groups.add_parser("analyze").add_subparsers(dest="command", required=True,
                                                           parser_class=_Parser)
    _common(analyze.add_parser("transience"))
    p = analyze.add_parser("dpi")
    _common(p)
    _dpi_args(p)
    _common(analyze.add_parser("martin"))

    p = groups.add_parser("simulate").add_subparsers(dest="command", required=True,
                                                      parser_class=_Parser).add_parser("bm")
    _common(p)
    _sim_args(p)

    p = groups.add_parser("report").add_subparsers(dest="command", required=True,
                                                    parser_class=_Parser).add_parser("all")
    _common(p)
    _dpi_args(p)
    _sim_args(p)
    return parser


# ---------------------------------------------------------------------------
# sections


def _verdict_dict(v, tol):
    return {**v.to_dict(), "tolerance": tol}


def _error_dict(exc):
    d = {"type": type(exc).__name__, "message": str(exc)}
    if getattr(exc, "r_reached", None) is not None:
        d["r_reached"] = exc.r_reached
    return d


def _transience(model, args, csv_dir):
    if model.is_radial:
        verdict, ray = radial_transience(model.radial_profile, args.tol)
        criterion = "milnor"
        if csv_dir and ray.sol is not None:
            ray.sol.to_csv(os.path.join(csv_dir, "jacobi.csv"))
    else:
        verdict = doyle_transience(model, tol=args.tol)
        criterion = "doyle"
        if csv_dir:
            _write_rows(os.path.join(csv_dir, "transience_rays.csv"), ["theta", "status"],
                        [(r["theta"], r["status"]) for r in verdict.details["rays"]])
    out = _verdict_dict(verdict, args.tol)
    out["criterion"] = criterion
    out["transient"] = verdict.is_finite
    return out, verdict


def _dpi(model, args, csv_dir):
    certs = [dpi_certificate(model, args.theta0, args.beta, eps, tol=args.tol)
             for eps in args.eps]
    if csv_dir:
        rows = [(c.epsilon, t["log_rho"], *t["values"]) for c in certs for t in c.tested]
        _write_rows(os.path.join(csv_dir, "dpi_search.csv"),
                    ["epsilon", "log_rho", "I_rho", "I_2rho", "I_4rho"], rows)
    return [{**c.to_dict(), "tolerance": args.tol} for c in certs], certs


def _martin(model, args, csv_dir):
    if model.lower_bound is None:
        return {"status": "skipped", "reason": "model declares no lower_bound"}, None
    try:
        verdict = martin_finite_length(model.upper_bound, model.lower_bound, args.tol)
    except NotTransient as exc:
        verdict = ConvergenceVerdict(INCONCLUSIVE, "fitted_tail", reason=str(exc))
    if csv_dir and verdict.status != INCONCLUSIVE:
        grid = np.geomspace(4.0, 400.0, 100)
        _write_rows(os.path.join(csv_dir, "martin_integrand.csv"), ["r", "k", "G", "bound"],
                    martin_integrand_samples(model.upper_bound, model.lower_bound, grid,
                                             args.tol))
    return _verdict_dict(verdict, args.tol), verdict


def _simulation(model, args, csv_dir):
    cfg = SimConfig(dt_base=args.dt, r_escape=args.r_escape, seed=args.seed, n_paths=args.paths)
    batch = simulate(model, args.r0, args.theta0, cfg, trace_paths=args.traces,
                     threads=args.threads)
    measure = hitting_measure_from_batch(batch, strict=False)
    out = {"config": batch.config.to_dict(), "start": {"r0": args.r0, "theta0": args.theta0},
           "counts": batch.counts(), "hitting_measure": measure.summary(),
           "label": "statistical"}
    try:
        atoms = detect_atoms(measure)
        out["atoms"] = atoms
    except InsufficientSamples as exc:
        atoms = None
        out["atoms"] = {"skipped": str(exc)}
    if measure.n_escaped > 0:
        ks = stats.kstest(measure.samples / (2.0 * math.pi), "uniform")
        out["ks_uniform"] = {"statistic": float(ks.statistic), "p_value": float(ks.pvalue)}
    confinement = [confinement_from_batch(batch, args.delta).to_dict()]
    for r0 in args.confine_r0:
        extra = simulate(model, r0, args.theta0, cfg, threads=args.threads)
        confinement.append(confinement_from_batch(extra, args.delta).to_dict())
    out["confinement"] = confinement
    if csv_dir:
        measure.to_csv(os.path.join(csv_dir, "escape_angles.csv"))
        if batch.traces:
            traces_to_csv(batch, os.path.join(csv_dir, "traces.csv"))
    return out, measure, atoms


def _disk_csv(model, args, csv_dir):
    if not (csv_dir and model.is_radial):
        return
    try:
        dmap = DiskMap.from_profile(model.radial_profile, args.tol)
    except NotTransient:
        return
    dmap.to_csv(os.path.join(csv_dir, "disk_radius.csv"), np.geomspace(0.01, 100.0, 200))


# ---------------------------------------------------------------------------
# driver


def _write_rows(path, header, rows):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x
                        for x in row])


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def _provenance(args):
    import numba

    prov = {"tol": args.tol, "versions": {"hadamard_lab": __version__, "numpy": np.__version__,
                                          "scipy": scipy.__version__, "numba": numba.__version__,
                                          "python": platform.python_version()}}
    if getattr(args, "seed", None) is not None:
        prov["seed"] = args.seed
    return prov


def _exit_status(statuses, failed):
    if failed:
        return EXIT_ERROR
    if statuses and 2 * sum(s in (INCONCLUSIVE, "NotFound") for s in statuses) >= len(statuses):
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def run(args):
    """Execute parsed arguments; returns ``(report, exit_status)``."""
    command = f"{args.group} {args.command}"
    report = {"schema": SCHEMA, "command": command, "provenance": _provenance(args)}
    csv_dir = args.emit_csv
    errors = []
    statuses = []
    try:
        model = load_model(args.model)
        if csv_dir:
            os.makedirs(csv_dir, exist_ok=True)
    except (OSError, ValueError, HadamardLabError) as exc:
        report["error"] = _error_dict(exc)
        return report, EXIT_ERROR
    report["model_echo"] = {**model.describe(), "upper_bound": model.upper_bound.to_dict(),
                            "lower_bound": model.lower_bound.to_dict()
                            if model.lower_bound is not None else None}

    def section(name, fn):
        try:
            return fn()
        except (HadamardLabError, OSError, ValueError) as exc:
            report[name] = {"error": _error_dict(exc)}
            errors.append(name)
            return None

    want = {"transience", "dpi", "martin", "bm"} if args.group == "report" else {args.command}
    transience = martin = certs = measure = atoms = None

    if "transience" in want:
        res = section("transience", lambda: _transience(model, args, csv_dir))
        if res:
            report["transience"], transience = res
            statuses.append(transience.status)
    if "dpi" in want:
        res = section("dpi", lambda: _dpi(model, args, csv_dir))
        if res:
            report["dpi"], certs = res
            statuses.extend("found" if c.found else "NotFound" for c in certs)
    if "martin" in want:
        res = section("martin", lambda: _martin(model, args, csv_dir))
        if res:
            report["martin"], martin = res
            if martin is not None:
                statuses.append(martin.status)
    if "bm" in want:
        res = section("simulation", lambda: _simulation(model, args, csv_dir))
        if res:
            report["simulation"], measure, atoms = res
    if args.group == "report":
        section("disk_map", lambda: _disk_csv(model, args, csv_dir))
        report["boundary_correspondence"] = boundary_correspondence_report(
            model, measure, atoms or [], certs or (), transience, martin)
    if csv_dir:
        report["csv_files"] = sorted(os.listdir(csv_dir))
    return report, _exit_status(statuses, errors)


def dump_report(report):
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def main(argv=None):
    args = build_parser().parse_args(argv)
    report, status = run(args)
    text = dump_report(report)
    try:
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"hadamard-lab: cannot write report: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return status


if __name__ == "__main__":
    sys.exit(main())
