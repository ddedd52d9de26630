"""Command-line front end: ``ttcrit solve | compare | suite``.

Exit codes: 0 success, 2 usage or validation error, 3 convergence failure
(a partial report is still written), 4 internal numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .criticality import EigenOptions, solve_alpha, solve_keff
from .exceptions import CapacityError, ConvergenceError, TTCritError, UnsupportedError, ValidationError
from .report import SolveReport, build_report, compare_reports, history_to_csv, table_to_csv
from .transport import assemble_operators, load_problem

EXIT_OK, EXIT_USAGE, EXIT_CONVERGENCE, EXIT_NUMERICAL = 0, 2, 3, 4
MODES = ("dense", "tt", "qtt")
SOLVES = ("keff", "alpha")
FORMATS = ("json", "csv")

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    problem_path: str
    mode: str = "dense"
    solve: str = "keff"
    tol: float = 1e-6
    max_outer: int = 500
    seed: int = 0
    output_path: str | None = None
    report_format: str = "json"
    quad_order: int | None = None
    nodes: int | None = None
    width_factor: float | None = None

    def validate(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if self.solve not in SOLVES:
            raise ValidationError(f"solve must be one of {SOLVES}")
        if self.report_format not in FORMATS:
            raise ValidationError(f"format must be one of {FORMATS}")
        if not self.tol > 0:
            raise ValidationError("tol must be > 0")
        if self.max_outer < 1:
            raise ValidationError("max-outer must be >= 1")


def resolve_problem_path(name: str) -> Path:
    """A file path, or the stem of a bundled problem such as ``pu239_slab``."""
    p = Path(name)
    if p.exists():
        return p
    bundled = resources.files("ttcrit") / "problems" / f"{name}.yaml"
    if bundled.is_file():
        return Path(str(bundled))
    raise ValidationError(f"problem file {name!r} not found")


def bundled_problems() -> list[str]:
    return sorted(p.name[:-5] for p in (resources.files("ttcrit") / "problems").iterdir() if p.name.endswith(".yaml"))


def load_config_problem(cfg: RunConfig):
    problem = load_problem(resolve_problem_path(cfg.problem_path))
    if cfg.quad_order is not None:
        problem = problem.with_quadrature(cfg.quad_order)
    if cfg.nodes is not None:
        problem = problem.with_nodes(cfg.nodes)
    if cfg.width_factor is not None:
        problem = problem.with_width(cfg.width_factor)
    return problem


def _write(report: SolveReport, cfg: RunConfig):
    if cfg.output_path:
        report.save(cfg.output_path, cfg.report_format)


def run(cfg: RunConfig) -> tuple[SolveReport | None, int, str | None]:
    """Execute one solve.  Returns ``(report, exit_code, message)``."""
    try:
        cfg.validate()
        problem = load_config_problem(cfg)
        ops = assemble_operators(problem, cfg.mode)
        opts = EigenOptions(tol=cfg.tol, max_outer=cfg.max_outer, seed=cfg.seed)
        solver = solve_keff if cfg.solve == "keff" else solve_alpha
        try:
            result = solver(ops, opts)
        except ConvergenceError as exc:
            best = exc.best
            if best is None or not hasattr(best, "eigenvalue"):
                return None, EXIT_CONVERGENCE, str(exc)
            report = build_report(best, ops, problem, problem_path=cfg.problem_path, options=opts, error=str(exc))
            _write(report, cfg)
            return report, EXIT_CONVERGENCE, str(exc)
        report = build_report(result, ops, problem, problem_path=cfg.problem_path, options=opts)
        _write(report, cfg)
        return report, EXIT_OK, None
    except (ValidationError, UnsupportedError, CapacityError) as exc:
        return None, EXIT_USAGE, str(exc)
    except OSError as exc:
        return None, EXIT_USAGE, str(exc)
    except (TTCritError, np.linalg.LinAlgError, ArithmeticError) as exc:
        return None, EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}"


def _summary(report: SolveReport) -> dict:
    return {
        "kind": report.kind,
        "mode": report.mode,
        "eigenvalue": report.eigenvalue,
        "k_eff": report.k_eff,
        "iterations": report.iterations,
        "converged": report.converged,
        "wall_time_seconds": round(report.wall_time_seconds, 3),
        "psi_compression": report.compression.get("psi"),
    }


def _cmd_solve(args) -> int:
    cfg = RunConfig(
        problem_path=args.problem, mode=args.mode, solve=args.solve, tol=args.tol, max_outer=args.max_outer,
        seed=args.seed, output_path=args.out, report_format=args.format, quad_order=args.quad_order,
        nodes=args.nodes, width_factor=args.width_factor,
    )
    report, code, msg = run(cfg)
    if report is not None:
        print(json.dumps(_summary(report)))
    if msg:
        print(f"ttcrit: error: {msg}", file=sys.stderr)
    return code


def _cmd_compare(args) -> int:
    try:
        reports = [SolveReport.load(p) for p in args.reports]
        table = compare_reports(reports)
    except (ValidationError, OSError) as exc:
        print(f"ttcrit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.format == "json":
        text = json.dumps(table, indent=2)
    else:
        text = table_to_csv(table["runs"]) + "\n" + table_to_csv(table["pairs"])
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return EXIT_OK


def _suite_configs(path) -> list[RunConfig]:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ValidationError(f"cannot read suite file {path}: {exc}") from None
    runs = data.get("runs") if isinstance(data, dict) else None
    if not runs:
        raise ValidationError("suite file needs a non-empty 'runs' list")
    defaults = data.get("defaults", {})
    allowed = set(RunConfig.__dataclass_fields__)
    out = []
    for i, r in enumerate(runs):
        d = {**defaults, **r}
        bad = set(d) - allowed
        if bad:
            raise ValidationError(f"run {i}: unknown keys {sorted(bad)}")
        out.append(RunConfig(**d))
    return out


def _cmd_suite(args) -> int:
    try:
        configs = _suite_configs(args.suite)
    except ValidationError as exc:
        print(f"ttcrit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out) if args.out else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    for i, cfg in enumerate(configs):
        if cfg.output_path is None and out_dir is not None:
            cfg.output_path = str(out_dir / f"run{i:02d}.{cfg.report_format}")
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        results = list(pool.map(run, configs))
    rows, codes = [], []
    for cfg, (report, code, msg) in zip(configs, results):
        codes.append(code)
        rows.append({"problem": cfg.problem_path, "mode": cfg.mode, "solve": cfg.solve, "exit_code": code,
                     "eigenvalue": None if report is None else report.eigenvalue,
                     "iterations": None if report is None else report.iterations,
                     "wall_time_seconds": None if report is None else report.wall_time_seconds,
                     "output": cfg.output_path, "error": msg})
    print(json.dumps(rows, indent=2) if args.format == "json" else table_to_csv(rows))
    return max(codes)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ttcrit", description="Transport criticality in dense, TT and QTT formats.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="run one eigenvalue solve")
    s.add_argument("--problem", required=True, help=f"YAML path or bundled name ({', '.join(bundled_problems())})")
    s.add_argument("--mode", choices=MODES, default="dense")
    s.add_argument("--solve", choices=SOLVES, default="keff")
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-outer", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="report path")
    s.add_argument("--format", choices=FORMATS, default="json", help="json report or csv history")
    s.add_argument("--quad-order", type=int, help="override the quadrature order N")
    s.add_argument("--nodes", type=int, help="override the node count on every axis")
    s.add_argument("--width-factor", type=float, help="scale the geometry extents")
    s.set_defaults(func=_cmd_solve)

    c = sub.add_parser("compare", help="tabulate deltas between reports of one problem")
    c.add_argument("reports", nargs="+")
    c.add_argument("--out")
    c.add_argument("--format", choices=FORMATS, default="json")
    c.set_defaults(func=_cmd_compare)

    u = sub.add_parser("suite", help="run the configs listed in a YAML suite file")
    u.add_argument("suite")
    u.add_argument("--workers", type=int, default=2)
    u.add_argument("--out", help="directory for per-run reports")
    u.add_argument("--format", choices=FORMATS, default="json")
    u.set_defaults(func=_cmd_suite)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
