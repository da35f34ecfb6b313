"""``gauge-killing`` command-line tool.

Exit codes: 0 pass, 1 a check failed, 2 usage error, 3 invalid bundle model,
4 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time

from . import __version__
from .catalog import example_ids, get_example, list_examples
from .config import SUITES, bundle_from_config, load_key_values, run_config_from_mapping
from .errors import GaugeKillingError, InvalidArgumentError, ModelInvalidError, PreconditionError, SolverFailureError

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_MODEL, EXIT_SOLVER = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    p = _Parser(prog="gauge-killing", description="Verify Killing fields of connection metrics on principal bundles.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    lp = sub.add_parser("list", help="list the example catalog")
    lp.add_argument("--json", action="store_true", help="print the listing as JSON")

    def common(sp):
        sp.add_argument("--config", help="key=value run configuration file; flags override it")
        sp.add_argument("--bundle-config", help="key=value file defining a user bundle")
        sp.add_argument("--example")
        sp.add_argument("--h", type=float, help="lattice spacing")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--n-samples", type=int)
        sp.add_argument("--out", help="output path (stdout if omitted)")

    rp = sub.add_parser("run", help="run a verification suite")
    common(rp)
    rp.add_argument("--suite", choices=SUITES)
    rp.add_argument("--tol", action="append", default=[], metavar="CHECK=VALUE", help="override one check tolerance (repeatable)")
    rp.add_argument("--csv", help="also write the check table as CSV")
    rp.add_argument("--perturb", action="store_true", default=None, help="expected-negative mode: perturb the moment map sections")

    sp = sub.add_parser("solve", help="solve the moment map equation for one base field")
    common(sp)
    sp.add_argument("--field")
    sp.add_argument("--json", dest="json_out", help="summary path (default: OUT with .json suffix)")
    return p


def _config_from_args(args):
    values = load_key_values(args.config) if args.config else {}
    cfg = run_config_from_mapping(values)
    flags = {
        "example": args.example,
        "h": args.h,
        "seed": args.seed,
        "n_samples": args.n_samples,
        "out": args.out,
        "bundle_config": args.bundle_config,
        "suite": getattr(args, "suite", None),
        "csv": getattr(args, "csv", None),
        "perturb": getattr(args, "perturb", None),
        "field": getattr(args, "field", None),
    }
    cfg = run_config_from_mapping({k: v for k, v in flags.items() if v is not None}, cfg)
    for item in getattr(args, "tol", []):
        if "=" not in item:
            raise InvalidArgumentError(f"--tol expects CHECK=VALUE, got {item!r}")
        name, value = item.split("=", 1)
        cfg = run_config_from_mapping({f"tol.{name.strip()}": value}, cfg)
    cfg.example_given = args.example is not None or "example" in values
    return cfg


def _resolve_example(cfg):
    known = list(example_ids())
    user = None
    if cfg.bundle_config:
        user = bundle_from_config(load_key_values(cfg.bundle_config))
        known.append(user.id)
        if not getattr(cfg, "example_given", True):
            cfg.example = user.id
    cfg.validate(known)
    return user if user is not None and cfg.example == user.id else get_example(cfg.example)


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    return obj


def report_json(report):
    """Canonical JSON text for a report (sorted keys, no wall time)."""
    return json.dumps(_finite(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def checks_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "residual", "tol", "pass"])
    for c in report["checks"]:
        w.writerow([c["name"], repr(c["residual"]), repr(c["tol"]), int(c["pass"])])
    return buf.getvalue()


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def cmd_list(args):
    rows = list_examples()
    if args.json:
        sys.stdout.write(json.dumps(rows, indent=2, sort_keys=True) + "\n")
        return EXIT_PASS
    print(f"{'id':14s} {'group':7s} {'base':22s} {'charts':>6s}  curvature")
    for r in rows:
        print(f"{r['id']:14s} {r['group']:7s} {r['base']:22s} {r['charts']:>6d}  {r['curvature']}")
    return EXIT_PASS


def cmd_run(args):
    from .suites import run_suite

    cfg = _config_from_args(args)
    example = _resolve_example(cfg)
    t0 = time.perf_counter()
    report = run_suite(example, cfg)
    _write(cfg.out, report_json(report))
    if cfg.csv:
        _write(cfg.csv, checks_csv(report))
    fails = [c["name"] for c in report["checks"] if not c["pass"]]
    print(f"{cfg.suite} on {cfg.example}: {report['verdict']} ({len(report['checks'])} checks, {time.perf_counter() - t0:.2f} s)", file=sys.stderr)
    for name in fails:
        print(f"  failed: {name}", file=sys.stderr)
    return EXIT_PASS if report["verdict"] == "pass" else EXIT_FAIL


def cmd_solve(args):
    from .bundle import check_compatibility
    from .moment import MomentMapProblem, solution_csv, solution_json, solve

    cfg = _config_from_args(args)
    example = _resolve_example(cfg)
    if not cfg.field:
        raise InvalidArgumentError("solve needs --field")
    X = example.field(cfg.field)
    check_compatibility(example.bundle, min(cfg.n_samples, 100), cfg.seed, sections=list(example.sections.values()))
    sol = solve(MomentMapProblem.for_example(example, X, cfg.h), seed=cfg.seed, kernel=True)
    _write(cfg.out, solution_csv(sol))
    summary = solution_json(sol, {"example": example.id, "field": cfg.field, "seed": cfg.seed, "version": __version__}) + "\n"
    json_path = args.json_out
    if json_path is None and cfg.out not in (None, "-"):
        json_path = cfg.out.rsplit(".", 1)[0] + ".json" if cfg.out.endswith(".csv") else cfg.out + ".json"
    if json_path:
        _write(json_path, summary)
    else:
        sys.stderr.write(summary)
    print(f"{example.id} {cfg.field}: solvable={sol.solvable} continuum residual {sol.continuum_residual:.3e} (threshold {sol.threshold:.3e}), kernel_dim {sol.kernel_dim}", file=sys.stderr)
    return EXIT_PASS


COMMANDS = {"list": cmd_list, "run": cmd_run, "solve": cmd_solve}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelInvalidError as exc:
        print(f"model invalid: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except SolverFailureError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InvalidArgumentError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PreconditionError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except GaugeKillingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
