"""Command-line entry point.

Exit codes: 0 success, 2 input error, 3 engine abort, 4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

from . import bundled_scenario
from .engine import DEFAULT_HORIZON, EngineAbort, run
from .metrics import (
    format_ms,
    compare_reports,
    emit_comparison,
    emit_report_csv,
    emit_timeline_csv,
)
from .policies import POLICIES
from .scenario import PARAM_NAMES, Scenario, ScenarioError, parse_param_value, parse_scenario, serialize_scenario

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ABORT = 3
EXIT_IO = 4

SWEEP_HEADER = "value,mean_baseline_ms,mean_enhanced_ms,improvement_pct,deadlocks_baseline,deadlocks_enhanced"


def _read_scenario(path: str) -> Scenario:
    p = Path(path)
    if not p.exists():
        bundled = bundled_scenario(p.name)
        if bundled.exists():
            p = bundled
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from None
    return parse_scenario(text)


def write_atomically(out_dir: str | Path, files: dict[str, str]) -> list[Path]:
    """Write every file or none: all go to temp names first, then get renamed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staged: list[tuple[str, Path]] = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=out, prefix=f".{name}.", suffix=".tmp")
            staged.append((tmp, out / name))
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            Path(tmp).unlink(missing_ok=True)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return [final for _, final in staged]


def _trace_text(report) -> str:
    return "\n".join(report.trace) + "\n"


def cmd_run(args) -> int:
    scenario = _read_scenario(args.scenario)
    report = run(scenario, args.policy, horizon=args.horizon)
    files = {f"{args.policy}_report.csv": emit_report_csv(report)}
    if args.trace:
        files[f"{args.policy}_trace.txt"] = _trace_text(report)
    write_atomically(args.out, files)
    s = report.summary
    print(f"{args.policy}: mean response {format_ms(s.mean_response) or '-'} ms, "
          f"migrations {s.total_migrations}, deadlocks {s.deadlock_count}, rejected {s.rejected}")
    return EXIT_OK


def _compare(scenario: Scenario, horizon: int):
    return run(scenario, "baseline", horizon=horizon), run(scenario, "enhanced", horizon=horizon)


def cmd_compare(args) -> int:
    scenario = _read_scenario(args.scenario)
    base, enh = _compare(scenario, args.horizon)
    files = {
        "baseline_report.csv": emit_report_csv(base),
        "enhanced_report.csv": emit_report_csv(enh),
        "comparison.csv": emit_comparison(base, enh),
        "utilization.csv": emit_timeline_csv(base, enh),
    }
    if args.trace:
        files["baseline_trace.txt"] = _trace_text(base)
        files["enhanced_trace.txt"] = _trace_text(enh)
    write_atomically(args.out, files)
    cmp = compare_reports(base, enh)
    pct = "-" if cmp.mean_improvement_pct is None else f"{cmp.mean_improvement_pct:.2f}"
    print(f"MEAN improvement: {pct}%")
    print(f"deadlocks: baseline={base.summary.deadlock_count} enhanced={enh.summary.deadlock_count}")
    return EXIT_OK


def parse_sweep(arg: str) -> tuple[str, list[tuple[str, object]]]:
    name, sep, values = arg.partition("=")
    name = name.strip()
    if not sep or not values.strip():
        raise ScenarioError(f"--sweep expects <param>=<v1,v2,...>, got {arg!r}")
    if name not in PARAM_NAMES and name != "default_hop":
        raise ScenarioError(f"unknown sweep parameter {name}")
    raw = [v.strip() for v in values.split(",") if v.strip()]
    return name, [(v, parse_param_value(name, v)) for v in raw]


def sweep_rows(scenario: Scenario, name: str, values, horizon: int = DEFAULT_HORIZON) -> list[str]:
    rows = []
    for text, value in values:
        base, enh = _compare(scenario.with_param(name, value), horizon)
        cmp = compare_reports(base, enh)
        pct = "" if cmp.mean_improvement_pct is None else f"{cmp.mean_improvement_pct:.2f}"
        rows.append(",".join([
            text,
            format_ms(cmp.mean_baseline),
            format_ms(cmp.mean_enhanced),
            pct,
            str(base.summary.deadlock_count),
            str(enh.summary.deadlock_count),
        ]))
    return rows


def cmd_sweep(args) -> int:
    scenario = _read_scenario(args.scenario)
    name, values = parse_sweep(args.sweep)
    rows = sweep_rows(scenario, name, values, args.horizon)
    text = "\n".join([SWEEP_HEADER, *rows]) + "\n"
    write_atomically(args.out, {f"sweep_{name}.csv": text})
    sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    scenario = _read_scenario(args.scenario)
    sys.stdout.write(serialize_scenario(scenario))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cloudlb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, outputs=True):
        p.add_argument("--scenario", required=True, help="scenario file (bundled names also accepted)")
        if outputs:
            p.add_argument("--out", default="out", help="output directory (default: out)")
            p.add_argument("--horizon", type=int, default=DEFAULT_HORIZON,
                           help="abort if the simulated clock passes this many ms")

    p = sub.add_parser("run", help="simulate one policy")
    common(p)
    p.add_argument("--policy", required=True, choices=sorted(POLICIES))
    p.add_argument("--trace", action="store_true", help="also write the event trace")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="simulate both policies and compare")
    common(p)
    p.add_argument("--trace", action="store_true", help="also write both event traces")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="compare across values of one parameter")
    common(p)
    p.add_argument("--sweep", required=True, metavar="PARAM=V1,V2,...")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a scenario and print its normalized form")
    common(p, outputs=False)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except EngineAbort as exc:
        print(f"engine aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
