"""Command-line experiment runner: ``fluidnet run | compare | sweep``.

Exit codes: 0 success, 1 a run failed, 2 bad flags or an invalid config.
Every CSV has a fixed header; see ``COMPARE_COLUMNS`` and ``SWEEP_COLUMNS``.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ScenarioConfig, load_config_file
from .controllers import CONTROLLER_NAMES
from .engine import BatchError, run, run_jobs, trace_csv
from .marl import dump_policies, parse_policies
from .metrics import KPI_COLUMNS, NA

COMPARE_COLUMNS = ("controller", "seed", "drop_digest") + KPI_COLUMNS
SWEEP_COLUMNS = ("density", "controller", "seed") + KPI_COLUMNS[:6]


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive_list(text: str) -> list[int]:
    vals = _int_list(text)
    if any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("densities must be positive integers")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fluidnet", description="Fluid-antenna multi-cell simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="one controller, one seed")
    r.add_argument("--config", type=Path)
    r.add_argument("--controller", choices=CONTROLLER_NAMES, default="fab")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", type=Path, required=True)
    r.add_argument("--trace", action="store_true", help="also write the per-slot trace.csv")
    r.add_argument("--save-policy", type=Path)
    r.add_argument("--load-policy", type=Path)

    c = sub.add_parser("compare", help="all four controllers on paired seeds")
    c.add_argument("--config", type=Path)
    c.add_argument("--seeds", type=_int_list, required=True)
    c.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("sweep", help="user-density sweep over all controllers")
    s.add_argument("--config", type=Path)
    s.add_argument("--densities", type=_positive_list, required=True)
    s.add_argument("--seeds", type=_int_list, required=True)
    s.add_argument("--out", type=Path, required=True)
    return p


def _config(path) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    try:
        return load_config_file(path)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except ConfigError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _summary_rows(controller: str, reports) -> list[list[str]]:
    """Mean and sample std rows; a column with any NA entry stays NA."""
    rows = []
    cols = [r.row() for r in reports]
    for label in ("mean", "std"):
        out = [controller, label, ""]
        for i in range(len(KPI_COLUMNS)):
            vals = [c[i] for c in cols]
            if NA in vals:
                out.append(NA)
                continue
            x = np.array([float(v) for v in vals])
            if label == "mean":
                out.append(repr(float(x.mean())))
            else:
                out.append(repr(float(x.std(ddof=1))) if x.size > 1 else "0.0")
        rows.append(out)
    return rows


def cmd_run(args) -> int:
    cfg = _config(args.config)
    if (args.save_policy or args.load_policy) and args.controller != "marl":
        raise UsageError("--save-policy/--load-policy need --controller marl")
    policies = None
    if args.load_policy:
        try:
            policies = parse_policies(args.load_policy.read_text(), cfg.num_cells)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot load policy: {exc}") from None
    args.out.mkdir(parents=True, exist_ok=True)
    res = run(cfg, args.controller, args.seed, trace=args.trace, policies=policies)
    (args.out / "kpi.csv").write_text(res.report.to_csv())
    (args.out / "kpi.json").write_text(res.report.to_json() + "\n")
    (args.out / "cdf.csv").write_text(res.report.cdf_csv())
    if args.trace:
        (args.out / "trace.csv").write_text(trace_csv(res.trace))
    if args.save_policy:
        args.save_policy.parent.mkdir(parents=True, exist_ok=True)
        args.save_policy.write_text(dump_policies(res.policies))
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args.config)
    seeds = args.seeds
    jobs = [(cfg, name, s) for name in CONTROLLER_NAMES for s in seeds]
    results = run_jobs(jobs)
    rows = []
    for name in CONTROLLER_NAMES:
        mine = [(s, res) for (_, n, s), res in zip(jobs, results) if n == name]
        rows += [[name, str(s), digest] + report.row() for s, (report, digest) in mine]
        rows += _summary_rows(name, [report for _, (report, _) in mine])
    args.out.mkdir(parents=True, exist_ok=True)
    _write_csv(args.out / "compare.csv", COMPARE_COLUMNS, rows)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args.config)
    jobs = [(cfg.replace(users_per_cell=d), name, s)
            for d in args.densities for name in CONTROLLER_NAMES for s in args.seeds]
    results = run_jobs(jobs)
    rows = [[str(job[0].users_per_cell), job[1], str(job[2])] + report.row()[:6]
            for job, (report, _) in zip(jobs, results)]
    args.out.mkdir(parents=True, exist_ok=True)
    _write_csv(args.out / "sweep.csv", SWEEP_COLUMNS, rows)
    return 0


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return 0 if exc.code == 0 else 2
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fluidnet: error: {exc}", file=sys.stderr)
        return 2
    except BatchError as exc:
        print(f"fluidnet: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any run failure maps to exit 1
        print(f"fluidnet: run failed: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
