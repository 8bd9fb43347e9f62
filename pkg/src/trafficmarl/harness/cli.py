"""Command line entry point: ``trafficmarl {run,plot,diagnose,validate-config}``.

Exit codes: 0 success, 1 configuration error, 2 runtime abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import yaml

from ..sim import ConfigurationError
from .config import ExperimentConfig, load_config
from .experiment import load_schedule_for, run_experiment
from .report import (diagnose_feasibility, emit_plots, read_action_log, read_metrics,
                     summary_line, write_action_log, write_feasibility, write_metrics)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
log = logging.getLogger("trafficmarl")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def cmd_validate(args) -> int:
    cfg = _config(args)
    schedule = load_schedule_for(cfg, args.schedule)
    print(f"config ok: controller={cfg.controller} agents={cfg.agent_ids} case={cfg.reward_case} "
          f"episodes={cfg.episodes}; schedule has {len(schedule)} vehicles")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    schedule = load_schedule_for(cfg, args.schedule)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
    result = run_experiment(cfg, schedule, out_dir=out)
    write_metrics(result.metrics, out / "metrics.csv")
    if result.action_log:
        write_action_log(result.action_log, out / "actions.csv")
        write_feasibility(diagnose_feasibility(result.actions_by_agent()), out / "feasibility.json")
    if not args.no_plots:
        emit_plots(result.metrics, out, title=f"{cfg.controller}, case {cfg.reward_case}")
    print(summary_line(result.metrics))
    if any(m.aborted for m in result.metrics):
        log.warning("some episodes aborted; see log")
    return EXIT_OK


def cmd_plot(args) -> int:
    out = Path(args.out_dir)
    metrics_path = Path(args.metrics) if args.metrics else out / "metrics.csv"
    for p in emit_plots(read_metrics(metrics_path), out):
        print(p)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    out = Path(args.out_dir)
    actions = Path(args.actions) if args.actions else out / "actions.csv"
    report = diagnose_feasibility(read_action_log(actions), horizon=args.horizon)
    write_feasibility(report, out / "feasibility.json")
    for agent, entry in report.items():
        if "notice" in entry:
            print(f"agent {agent}: {entry['notice']}")
        else:
            transient = [j for j, t in entry["transience"].items() if t["converged"]]
            print(f"agent {agent}: {entry['n_actions_logged']} actions, transient actions {transient}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trafficmarl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train or evaluate a controller")
    p.add_argument("--config")
    p.add_argument("--schedule")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default="runs/latest")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="render plots from a metrics CSV")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--metrics")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("diagnose", help="action-chain feasibility report from an action log")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--actions")
    p.add_argument("--horizon", type=int, default=20)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("validate-config", help="check a config and schedule without running")
    p.add_argument("--config")
    p.add_argument("--schedule")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
