"""Command-line interface.

Verbs: run (single scenario), sweep (axis sweep over seeds), train (PPO
only), report (tables/plots from stored records), verify (re-check stored
invariants).  Configuration comes from a YAML file (--config) or a named
profile, with any field overridable via repeated --set key=value flags.
The results directory defaults to $HAPNET_RESULTS or ./results.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import harness, ppo_agent, report
from .scenario import ScenarioConfig, desk_profile, paper_profile


def _results_dir(args) -> Path:
    base = args.outdir or os.environ.get("HAPNET_RESULTS", "results")
    return Path(base)


def _parse_value(text: str):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def _load_scenario(args) -> ScenarioConfig:
    if args.config:
        scenario = ScenarioConfig.from_yaml(args.config)
    elif args.profile == "paper":
        scenario = paper_profile()
    else:
        scenario = desk_profile()
    overrides = {}
    for item in args.set or []:
        key, _, value = item.partition("=")
        if not _:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        overrides[key] = _parse_value(value)
    if overrides:
        scenario = scenario.with_overrides(overrides)
    scenario.validate()
    return scenario


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="scenario YAML file")
    parser.add_argument("--profile", choices=["desk", "paper"], default="desk",
                        help="named configuration profile (ignored with --config)")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any configuration field (dotted path)")
    parser.add_argument("--outdir", help="results directory (default $HAPNET_RESULTS or ./results)")
    parser.add_argument("--seed", type=int, default=0)


def cmd_run(args) -> int:
    scenario = _load_scenario(args)
    outdir = _results_dir(args)
    record = harness.evaluate_method(args.method, scenario, args.seed, n_slots=args.slots,
                                     train_iters=args.train_iters)
    path = record.save(outdir / f"run_{args.method}_seed{args.seed}")
    print(f"saved run record to {path}")
    print(f"mean PC: {record.mean_pc():.6g} W over {len(record.rows)} slots "
          f"(feasibility {record.feasibility_rate():.2%})")
    return 0


def cmd_sweep(args) -> int:
    scenario = _load_scenario(args)
    outdir = _results_dir(args) / f"sweep_{args.axis}"
    values = [_parse_value(v) for v in args.values]
    seeds = [int(s) for s in args.seeds]
    summary = harness.sweep_and_report(
        scenario, args.axis, values, seeds, outdir,
        methods=tuple(args.methods), n_slots=args.slots, train_iters=args.train_iters,
    )
    report.write_table(summary, outdir / "table.csv")
    failed = [r for r in summary if r["error"]]
    print(f"sweep complete: {len(summary)} cells, {len(failed)} failed; results in {outdir}")
    return 0


def cmd_train(args) -> int:
    scenario = _load_scenario(args)
    outdir = _results_dir(args)
    outdir.mkdir(parents=True, exist_ok=True)
    result = harness.train_agent(scenario, args.seed, iters_max=args.train_iters)
    ckpt = outdir / f"policy_seed{args.seed}.pt"
    ppo_agent.save_checkpoint(
        result.policy, ckpt, scenario.ppo,
        iteration=len(result.learning_curve), seed=args.seed,
        config_hash=scenario.config_hash(),
    )
    curve_path = outdir / f"learning_curve_seed{args.seed}.csv"
    lines = ["iteration,mean_reward"] + [f"{i},{r!r}" for i, r in enumerate(result.learning_curve)]
    curve_path.write_text("\n".join(lines) + "\n")
    report.plot_learning_curves({f"seed {args.seed}": result.learning_curve}, outdir,
                                name=f"learning_curve_seed{args.seed}")
    print(f"checkpoint: {ckpt}")
    print(f"learning curve: {curve_path}")
    if result.learning_curve:
        print(f"final mean reward: {result.learning_curve[-1]:.6g}")
    return 0


def cmd_report(args) -> int:
    summary = harness.load_summary(args.summary)
    axis = summary[0]["axis"] if summary else "value"
    outdir = Path(args.summary).parent
    fig = report.plot_sweep(summary, axis, outdir)
    table = report.write_table(summary, outdir / "table.csv")
    print(f"wrote {fig} and {table}")
    return 0


def cmd_verify(args) -> int:
    result = harness.verify_runrecord(args.record)
    for key, value in result.items():
        print(f"{key}: {value}")
    return 0 if result["ok"] else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="hapnet",
                                     description="caching-enabled multi-HAP power-cost simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="evaluate one method on a single scenario")
    _add_common(p_run)
    p_run.add_argument("--method", choices=list(harness.METHODS), default="B4")
    p_run.add_argument("--slots", type=int, default=None)
    p_run.add_argument("--train-iters", type=int, default=None)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep one axis over seeds and methods")
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=sorted(harness.AXIS_KEYS))
    p_sweep.add_argument("--values", nargs="+", required=True)
    p_sweep.add_argument("--seeds", nargs="+", default=["0"])
    p_sweep.add_argument("--methods", nargs="+", default=list(harness.METHODS),
                         choices=list(harness.METHODS))
    p_sweep.add_argument("--slots", type=int, default=None)
    p_sweep.add_argument("--train-iters", type=int, default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_train = sub.add_parser("train", help="train the PPO caching agent only")
    _add_common(p_train)
    p_train.add_argument("--train-iters", type=int, default=None)
    p_train.set_defaults(func=cmd_train)

    p_report = sub.add_parser("report", help="render tables and figures from a sweep summary")
    p_report.add_argument("summary", help="path to summary.csv from a sweep")
    p_report.set_defaults(func=cmd_report)

    p_verify = sub.add_parser("verify", help="re-check invariants of a stored run record")
    p_verify.add_argument("record", help="run record directory")
    p_verify.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
