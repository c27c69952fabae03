"""Command-line front end: run, bootstrap, shotnoise, summarize.

Every command takes a configuration file (or, for summarize, a results
directory produced by bootstrap). ``--out``, ``--seed`` and ``--epochs``
override the corresponding config values, which keeps scaled-down reruns of
a shipped config a one-flag affair.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .mnist_data import IdxFormatError
from .quantum_model import OutputSelection, build_layout
from .runner import (
    ConfigError,
    RunConfig,
    export_metrics,
    format_shot_noise_report,
    format_summary,
    parse_config,
    records_from_results_dir,
    run_bootstrap,
    run_training,
    shot_noise_experiment,
    summarize,
)


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", help="path to a configuration file")
    parser.add_argument("--out", metavar="DIR", help="override run.out_dir")
    parser.add_argument("--seed", type=int, metavar="U64",
                        help="override run.base_seed")
    parser.add_argument("--epochs", type=int, metavar="N",
                        help="override train.epochs")


def _load_config(args: argparse.Namespace) -> RunConfig:
    config = parse_config(Path(args.config).read_text())
    if args.out is not None:
        config = replace(config, out_dir=args.out)
    if args.seed is not None:
        config = replace(config, base_seed=args.seed)
    if getattr(args, "epochs", None) is not None:
        config = replace(config, epochs=args.epochs)
    return config


def _cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args)
    record = run_training(config, config.base_seed)
    summary = summarize([record])
    export_metrics([record], summary, config, config.out_dir)
    print(f"seed: {record.seed}")
    print(f"parameters: {record.total_parameters}")
    print(f"final_train_accuracy: {record.final_train_accuracy!r}")
    print(f"final_val_accuracy: {record.final_val_accuracy!r}")
    print(f"wall_clock_seconds: {record.wall_clock_seconds:.3f}")
    print(f"metrics: {Path(config.out_dir) / 'run_0' / 'metrics.csv'}")
    return 0


def _cmd_bootstrap(args: argparse.Namespace) -> int:
    config = _load_config(args)
    _, summary = run_bootstrap(config)
    print(format_summary(summary), end="")
    print(f"results: {config.out_dir}")
    return 0


def _cmd_shotnoise(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if config.model.middle != "quantum":
        raise ConfigError("model.middle: shotnoise needs a quantum middle")
    layout = build_layout(config.model.qubits, config.model.layout_tokens)
    selection = OutputSelection(config.model.selection)
    angles = np.random.default_rng(config.base_seed).uniform(
        0.0, math.pi, layout.num_params)
    seeds = range(config.base_seed, config.base_seed + args.trials)
    report = shot_noise_experiment(
        layout, angles, selection, args.epsilon, seeds,
        out_path=Path(config.out_dir) / "shotnoise_report.txt")
    print(format_shot_noise_report(report), end="")
    return 0


def _cmd_summarize(args: argparse.Namespace) -> int:
    records = records_from_results_dir(args.results_dir)
    summary = summarize(records)
    text = format_summary(summary)
    if args.out is not None:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    print(text, end="")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hqnet",
        description="hybrid quantum-classical MNIST benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="single training run, seed from config")
    _add_config_arguments(run_p)
    run_p.set_defaults(func=_cmd_run)

    boot_p = sub.add_parser("bootstrap", help="seeded bootstrap ensemble")
    _add_config_arguments(boot_p)
    boot_p.set_defaults(func=_cmd_bootstrap)

    shot_p = sub.add_parser("shotnoise",
                            help="empirical gradient sample-complexity check")
    _add_config_arguments(shot_p)
    shot_p.add_argument("--epsilon", type=float, default=0.1,
                        help="target gradient error (default 0.1)")
    shot_p.add_argument("--trials", type=int, default=100,
                        help="number of trial seeds (default 100)")
    shot_p.set_defaults(func=_cmd_shotnoise)

    sum_p = sub.add_parser("summarize",
                           help="re-aggregate a persisted results directory")
    sum_p.add_argument("results_dir", help="directory with run_*/metrics.csv")
    sum_p.add_argument("--out", metavar="FILE",
                       help="also write the summary to FILE")
    sum_p.set_defaults(func=_cmd_summarize)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, IdxFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
