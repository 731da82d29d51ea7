"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 a solver ended with
a failure status.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import jsonschema

from . import harness
from .harness import TestCase
from .precision import Variant
from .report import FIGURES, make_figure
from .solver import SolverConfig
from .systems import make_kuramoto

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2
DEFAULT_OUTPUT = "mixedstep-out"

CAMPAIGN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["benchmark", "n_tests", "sizes", "tolerances"],
    "properties": {
        "benchmark": {"enum": list(harness.BENCHMARKS)},
        "n_tests": {"type": "integer", "minimum": 1},
        "sizes": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "tolerances": {"type": "array", "minItems": 1,
                       "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
        "variants": {"type": "array", "minItems": 1, "items": {"enum": list(harness.VARIANTS)}},
        "final_times": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "couplings": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
        "stimuli": {"type": "array", "minItems": 1, "items": {"type": "number"}},
        "abs_ratio": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "r": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "step_log": {"type": "boolean"},
        "time_limits": {"type": "boolean"},
    },
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved for solver failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _variant(name: str) -> str:
    try:
        return Variant.parse(name).value
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _output_dir(args) -> str:
    return args.output or os.environ.get("MIXEDSTEP_OUTPUT") or DEFAULT_OUTPUT


def _base_config(no_time_limits: bool) -> SolverConfig:
    cfg = SolverConfig()
    return cfg.without_time_limits() if no_time_limits else cfg


def _parse_override(item: str):
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise UsageError(f"override {item!r} is not key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def load_campaign_config(path, overrides=()) -> dict:
    """Read a campaign JSON file, apply ``key=value`` overrides and validate."""
    cfg: dict = {}
    if path:
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    for item in overrides:
        k, v = _parse_override(item)
        cfg[k] = v
    try:
        jsonschema.validate(cfg, CAMPAIGN_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "config"
        raise UsageError(f"invalid campaign config at {where}: {exc.message}") from None
    return cfg


def _print(obj, as_json: bool, text: str):
    print(json.dumps(obj, indent=2, sort_keys=True) if as_json else text)


def cmd_run(args) -> int:
    params = {}
    t_final = args.tf
    if args.benchmark == "lco":
        t_final = t_final or 10 * math.pi
    elif args.benchmark == "kuramoto":
        params = {"sigma": args.sigma, "K": args.K}
        if t_final is None:
            t_final = make_kuramoto(args.n, args.sigma, args.K, seed=args.seed).t_final
    else:
        params = {"K": args.K, "I0": args.I0}
        t_final = t_final or 60.0
    atol = args.atol if args.atol is not None else args.rtol
    try:
        SolverConfig(rel_tol=args.rtol, abs_tol=atol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    tc = TestCase(args.seed, args.benchmark, args.n, args.rtol, atol, t_final, params)
    rows, _ = harness.run_test(tc, [args.variant], _base_config(args.no_time_limits))
    ref, row = rows
    report = {k: row[k] for k in ("benchmark", "N", "variant", "rel_tol", "abs_tol", "status",
                                  "n_accepted", "n_failed", "final_error", "mean_ebs",
                                  "mean_eanalytic", "t_final")}
    report["seed"] = args.seed
    report["reference_status"] = ref["status"]
    lines = [f"{k}: {'' if v is None else v}" for k, v in report.items()]
    _print(report, args.json, "\n".join(lines))
    return EXIT_OK if row["status"] == "Completed" else EXIT_FAILURE


def _rate_table(rs) -> tuple[dict, str]:
    rates = harness.success_rates(rs)
    out = {k: {"completed": ok, "total": n, "rate": ok / n} for k, (ok, n) in rates.items()}
    lines = [f"{'solver':<10} {'completed':>9} {'total':>6} {'rate':>7}"]
    for k, v in out.items():
        lines.append(f"{k:<10} {v['completed']:>9} {v['total']:>6} {100 * v['rate']:>6.1f}%")
    return out, "\n".join(lines)


def cmd_sweep(args) -> int:
    cfg = load_campaign_config(args.config, args.set)
    opts = {k: cfg[k] for k in ("final_times", "couplings", "stimuli", "abs_ratio") if k in cfg}
    try:
        cases = harness.generate_campaign(cfg["benchmark"], cfg["n_tests"], cfg["sizes"],
                                          cfg["tolerances"], **opts)
    except harness.InvalidDomain as exc:
        raise UsageError(str(exc)) from None
    out = _output_dir(args)
    os.makedirs(out, exist_ok=True)
    no_limits = args.no_time_limits or not cfg.get("time_limits", True)
    solver_cfg = _base_config(no_limits)
    variants = cfg.get("variants", harness.VARIANTS)

    def progress(tc, rows):
        if not args.json:
            status = " ".join(f"{r['variant']}={r['status']}" for r in rows)
            print(f"test {tc.test_id}: {status}", file=sys.stderr)

    try:
        rs = harness.run_campaign(
            cases, variants, solver_cfg,
            results_path=os.path.join(out, "results.csv"),
            steplog_path=os.path.join(out, "steps.csv") if cfg.get("step_log") else None,
            manifest_path=os.path.join(out, "manifest.json"),
            jobs=args.jobs, r=cfg.get("r", 0.5), progress=progress)
    except KeyboardInterrupt:
        print("interrupted; completed tests are kept and will be skipped on resume", file=sys.stderr)
        return EXIT_FAILURE
    rates, text = _rate_table(rs)
    _print({"output": out, "success": rates}, args.json, text)
    return EXIT_OK


def _load_results(paths):
    merged = harness.ResultSet([], ())
    for p in paths:
        if not os.path.exists(p):
            raise UsageError(f"results file {p} does not exist")
        try:
            rs = harness.read_results(p)
        except harness.SchemaError as exc:
            raise UsageError(str(exc)) from None
        merged.rows.extend(rs.rows)
        merged.variants = tuple(dict.fromkeys(merged.variants + rs.variants))
    return merged


def cmd_analyze(args) -> int:
    rs = _load_results(args.results)
    done = harness.complete_rows(rs)
    n_complete = len({(r["benchmark"], r["test_id"]) for r in done})
    n_tests = len({(r["benchmark"], r["test_id"]) for r in rs.rows})
    rates, rate_text = _rate_table(rs)
    medians, betas = {}, {}
    for v in rs.variants:
        by_tol: dict = {}
        for r in done:
            if r["variant"] == v and r["final_error"] is not None:
                by_tol.setdefault(r["rel_tol"], []).append(r["final_error"])
        medians[v] = {repr(t): harness.summarize(vals).median for t, vals in sorted(by_tol.items(), reverse=True)}
        b = harness.beta_values(rs, v)
        if b.size:
            betas[v] = harness.summarize(b).five_number()
    obj = {"tests": n_tests, "complete": n_complete, "success": rates,
           "median_final_error": medians, "beta": betas}
    lines = [f"tests: {obj['tests']}  complete: {obj['complete']}", rate_text, "",
             "median normalized final error by tolerance:"]
    for v, m in medians.items():
        lines.append(f"  {v:<8} " + "  ".join(f"{t}:{e:.3e}" for t, e in m.items()))
    lines.append("beta (min, q1, median, q3, max):")
    for v, b in betas.items():
        lines.append(f"  {v:<8} " + ", ".join(f"{x:.4g}" for x in b))
    _print(obj, args.json, "\n".join(lines))
    return EXIT_OK


def cmd_report(args) -> int:
    rs = _load_results(args.results)
    out = _output_dir(args)
    figures = FIGURES if args.figure == "all" else (args.figure,)
    made = []
    for f in figures:
        csv_path, svg_path, has_data = make_figure(rs, f, out)
        made.append({"figure": f, "csv": csv_path, "svg": svg_path, "empty": not has_data})
    text = "\n".join(f"{m['figure']}: {m['svg']}" + (" (no complete tests)" if m["empty"] else "") for m in made)
    _print(made, args.json, text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mixedstep", description="Mixed-precision Bogacki-Shampine solver experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--output", help="output directory (default $MIXEDSTEP_OUTPUT or ./mixedstep-out)")
    common.add_argument("--no-time-limits", action="store_true", help="disable wall-clock failure conditions")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for campaigns")

    r = sub.add_parser("run", parents=[common], help="solve one test against the reference")
    r.add_argument("--benchmark", choices=harness.BENCHMARKS, default="lco")
    r.add_argument("--n", type=int, default=100)
    r.add_argument("--variant", type=_variant, default="double")
    r.add_argument("--rtol", type=float, default=1e-6)
    r.add_argument("--atol", type=float)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--tf", type=float, help="final time")
    r.add_argument("--sigma", type=float, default=0.5, help="Kuramoto frequency spread")
    r.add_argument("--K", type=float, default=1.0, help="coupling strength")
    r.add_argument("--I0", type=float, default=0.228249, help="CC stimulus amplitude")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="run a campaign from a JSON config")
    s.add_argument("--config", help="campaign JSON file")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry; VALUE is parsed as JSON when possible")
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("analyze", parents=[common], help="summarize result files")
    a.add_argument("results", nargs="+")
    a.set_defaults(func=cmd_analyze)

    rp = sub.add_parser("report", parents=[common], help="write figure CSVs and SVGs")
    rp.add_argument("results", nargs="+")
    rp.add_argument("--figure", choices=FIGURES + ("all",), default="all")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.jobs < 1:
            parser.error("--jobs must be >= 1")
        if getattr(args, "n", 1) < 1:
            parser.error("--n must be >= 1")
    except SystemExit as exc:  # usage errors and --help return instead of exiting
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mixedstep: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except harness.CampaignIOError as exc:
        print(f"mixedstep: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
