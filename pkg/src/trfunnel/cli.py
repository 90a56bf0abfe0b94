"""Command-line interface: ``solve``, ``sweep``, ``check-trace``, ``summarize`` and ``registry``.

Exit codes
----------
0   run finished at a critical point or by slow progress; checks passed
1   I/O error
2   restoration failed
3   budget exhausted
4   ``check-trace`` found discrepancies
64  invalid configuration or usage
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .benchmarks import BENCHMARKS, REGISTRY, reference_solution, registry_json
from .config import (
    OUTPUT_DIR_ENV,
    RunConfig,
    build_config,
    default_output_dir,
    load_config_file,
    parse_param,
)
from .driver import BUDGET_EXHAUSTED, CRITICAL_POINT, RESTORATION_FAILED, SLOW_PROGRESS, SolverReport, run
from .errors import ConfigError, UnknownProblem
from .models import RM_FORMS
from .trace import check_trace, read_trace, summarize, write_trace

logger = logging.getLogger("trfunnel")

EXIT_OK = 0
EXIT_IO = 1
EXIT_RESTORATION = 2
EXIT_BUDGET = 3
EXIT_TRACE = 4
EXIT_USAGE = 64

STATUS_EXIT = {
    CRITICAL_POINT: EXIT_OK,
    SLOW_PROGRESS: EXIT_OK,
    RESTORATION_FAILED: EXIT_RESTORATION,
    BUDGET_EXHAUSTED: EXIT_BUDGET,
}


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 64 so they never collide with solver statuses."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_flags(p, single):
    if single:
        p.add_argument("--problem", help=f"benchmark name ({', '.join(BENCHMARKS)})")
        p.add_argument("--rm", dest="rm_form", help=f"reduced-model form ({', '.join(RM_FORMS)})")
        p.add_argument("--strategy", choices=("funnel", "filter"))
        p.add_argument("--seed", type=int)
        p.add_argument("--trace", dest="trace_path", help="trace CSV path")
        p.add_argument("--report", dest="report_path", help="report JSON path")
    p.add_argument("--config", help="JSON or YAML file with run settings")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="override an algorithm parameter (repeatable)")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--max-bb-evals", dest="max_bb_evals", type=int)
    p.add_argument("--timing", dest="record_timing", action="store_true", default=None,
                   help="record wall-clock time in the trace (breaks byte-identical reruns)")
    p.add_argument("--output-dir", help=f"default directory for outputs (env {OUTPUT_DIR_ENV})")


def build_parser():
    parser = _Parser(prog="trfunnel", description="Trust-region funnel/filter solver for grey-box problems.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run one problem")
    _add_run_flags(p, single=True)

    p = sub.add_parser("sweep", help="run problems x RM forms x strategies in parallel")
    _add_run_flags(p, single=False)
    p.add_argument("--problems", nargs="+", default=list(BENCHMARKS))
    p.add_argument("--forms", nargs="+", default=list(RM_FORMS))
    p.add_argument("--strategies", nargs="+", default=["funnel", "filter"], choices=("funnel", "filter"))
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1, help="parallel worker slots")

    p = sub.add_parser("check-trace", help="replay the decisions recorded in a trace CSV")
    p.add_argument("trace")
    p.add_argument("--report", help="report JSON of the run; supplies parameters and strategy")
    p.add_argument("--strategy", choices=("funnel", "filter"))
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")

    p = sub.add_parser("summarize", help="tabulate report JSON files")
    p.add_argument("reports", nargs="+")
    p.add_argument("--csv-prefix", help="also write <prefix>_performance.csv and <prefix>_steps.csv")

    sub.add_parser("registry", help="print the benchmark registry as JSON")
    return parser


# --------------------------------------------------------------------------
# configuration from parsed arguments


def parse_config(args):
    """RunConfig from parsed ``solve`` arguments: defaults < file < flags."""
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    cli = {k: getattr(args, k, None) for k in ("problem", "rm_form", "strategy", "seed", "trace_path",
                                                 "report_path", "max_iter", "max_bb_evals", "record_timing")}
    cli["params"] = dict(parse_param(s) for s in getattr(args, "param", []))
    return build_config(file_values, cli)


def _output_dir(args):
    return Path(args.output_dir) if getattr(args, "output_dir", None) else default_output_dir()


def _stem(cfg):
    return f"{cfg.problem}-{cfg.rm_form}-{cfg.strategy}-s{cfg.seed}"


def _reference(name):
    spec = REGISTRY.get(name)
    return reference_solution(name)[0] if spec is not None and spec.available else None


def execute(cfg, out_dir):
    """Run ``cfg``, write its trace and report, and return the report."""
    from .benchmarks import make_problem

    problem = make_problem(cfg.problem)
    report = run(problem, cfg.to_options())
    trace_path = Path(cfg.trace_path) if cfg.trace_path else out_dir / f"{_stem(cfg)}.csv"
    report_path = Path(cfg.report_path) if cfg.report_path else out_dir / f"{_stem(cfg)}.json"
    write_trace(trace_path, report.trace, _reference(cfg.problem))
    payload = report.to_dict()
    payload["config"] = cfg.to_dict()
    payload["trace_path"] = str(trace_path)
    report_path.write_text(json.dumps(payload, indent=2) + "\n")
    return report


def _sweep_job(cfg_dict, out_dir):
    cfg = RunConfig(**cfg_dict)
    report = execute(cfg, Path(out_dir))
    return report.to_dict()


# --------------------------------------------------------------------------
# subcommands


def cmd_solve(args):
    cfg = parse_config(args)
    if not cfg.problem:
        raise ConfigError("--problem is required")
    report = execute(cfg, _output_dir(args))
    print(f"{cfg.problem} [{cfg.rm_form}/{cfg.strategy}] {report.status}: f = {report.f:.10g}, "
          f"theta = {report.theta:.3g}, chi = {report.chi:.3g}, iterations = {report.iterations}, "
          f"black-box evaluations = {report.black_box_evals}")
    return STATUS_EXIT[report.status]


def cmd_sweep(args):
    base = parse_config(args)
    out_dir = _output_dir(args)
    jobs = []
    for name in args.problems:
        if name not in BENCHMARKS:
            raise UnknownProblem(name)
        for form in args.forms:
            for strategy in args.strategies:
                cfg = RunConfig(**{**base.to_dict(), "problem": name, "rm_form": form, "strategy": strategy,
                                   "trace_path": None, "report_path": None})
                jobs.append(cfg.to_dict())
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            dicts = list(pool.map(_sweep_job, jobs, [str(out_dir)] * len(jobs)))
    else:
        dicts = [_sweep_job(j, str(out_dir)) for j in jobs]
    reports = [_report_from_dict(d) for d in dicts]
    summary = summarize(reports)
    (out_dir / "summary_performance.csv").write_text(summary.performance_csv)
    (out_dir / "summary_steps.csv").write_text(summary.step_types_csv)
    print(summary)
    return EXIT_OK


def _report_from_dict(d):
    keys = SolverReport.__dataclass_fields__
    return SolverReport(**{k: v for k, v in d.items() if k in keys})


def cmd_check_trace(args):
    records = read_trace(args.trace)
    overrides, strategy = {}, args.strategy
    if args.report:
        data = json.loads(Path(args.report).read_text())
        overrides.update(data.get("params", {}))
        strategy = strategy or data.get("strategy")
    overrides.update(dict(parse_param(s) for s in args.param))
    from .params import AlgorithmParams

    params = AlgorithmParams().replace(**overrides)
    res = check_trace(records, params, strategy)
    for d in res.discrepancies:
        print(d)
    print(f"{args.trace}: {res.rows} rows, {res.accepted_steps} accepted, {res.theta_steps} theta-type, "
          f"{len(res.discrepancies)} discrepancies")
    return EXIT_OK if res.ok else EXIT_TRACE


def cmd_summarize(args):
    reports = [_report_from_dict(json.loads(Path(p).read_text())) for p in args.reports]
    summary = summarize(reports)
    print(summary)
    if args.csv_prefix:
        Path(f"{args.csv_prefix}_performance.csv").write_text(summary.performance_csv)
        Path(f"{args.csv_prefix}_steps.csv").write_text(summary.step_types_csv)
    return EXIT_OK


def cmd_registry(args):
    print(registry_json())
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "check-trace": cmd_check_trace,
    "summarize": cmd_summarize,
    "registry": cmd_registry,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UnknownProblem) as exc:
        print(f"trfunnel: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"trfunnel: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
