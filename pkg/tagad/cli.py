"""Command-line entry point: ``tagad <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections.abc import Callable
from dataclasses import replace
from pathlib import Path
from typing import Any

import torch

from . import __version__
from .config import DEFAULT_SEED, PRESETS, RunConfig, load_config, log_config
from .errors import ConfigError, DatasetError, InjectionError, NumericError
from .graph import save_dataset
from .pipeline import (
    BENCH_FILE,
    run_bench,
    run_eval,
    run_inject,
    run_pipeline,
    run_score,
    run_sweep_gamma,
    run_sweep_rounds,
    run_train,
)
from .synthgen import SynthSpec, generate, load_spec
from .trainer import grad_check, tiny_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
EXIT_INTERNAL = 4

THREADS_ENV = "TAGAD_THREADS"
GRAD_CHECK_TOLERANCE = 1e-3


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with EXIT_USAGE."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _round_counts(value: str) -> list[int]:
    try:
        counts = [int(v) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{value}'") from e
    if not counts or min(counts) < 1:
        raise argparse.ArgumentTypeError(f"round counts must be positive integers, got '{value}'")
    return counts


def _gammas(value: str) -> list[float]:
    try:
        gammas = [float(v) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{value}'") from e
    if not gammas or min(gammas) < 0:
        raise argparse.ArgumentTypeError(f"gammas must be non-negative, got '{value}'")
    return gammas


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"Master seed for every random stream (default {DEFAULT_SEED})")
    common.add_argument("--config", type=Path, default=None, help="RunConfig file (.json or .yaml)")
    common.add_argument("--preset", choices=sorted(PRESETS), default=None,
                        help="Per-dataset lr/gamma/epochs preset applied before --config")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    parser = _Parser(prog="tagad", description="Contrastive anomaly detection on text-attributed graphs")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = commands.add_parser("generate", parents=[common], help="Generate a synthetic clean dataset")
    p.add_argument("--spec", type=Path, default=None, help="SynthSpec file (.json or .yaml)")
    p.add_argument("--out", type=Path, required=True, help="Output dataset directory")
    p.set_defaults(handler=_cmd_generate)

    p = commands.add_parser("inject", parents=[common], help="Plant anomalies into a clean dataset")
    p.add_argument("--in", dest="in_dir", type=Path, required=True, help="Clean dataset directory")
    p.add_argument("--out", type=Path, required=True, help="Output dataset directory")
    p.set_defaults(handler=_cmd_inject)

    p = commands.add_parser("train", parents=[common], help="Train both encoders")
    p.add_argument("--data", type=Path, required=True, help="Dataset directory")
    p.add_argument("--out", type=Path, required=True, help="Checkpoint path")
    p.add_argument("--features", type=Path, default=None, help="External features.tsv")
    p.add_argument("--grad-check", action="store_true",
                   help="Verify gradients on a tiny double-precision problem before training")
    p.set_defaults(handler=_cmd_train)

    p = commands.add_parser("score", parents=[common], help="Score every node with a checkpoint")
    p.add_argument("--model", type=Path, required=True, help="Checkpoint path")
    p.add_argument("--data", type=Path, required=True, help="Dataset directory")
    p.add_argument("--rounds", type=int, default=None, help="Sampling rounds R")
    p.add_argument("--out", type=Path, required=True, help="scores.csv path")
    p.add_argument("--features", type=Path, default=None, help="External features.tsv")
    p.set_defaults(handler=_cmd_score)

    p = commands.add_parser("eval", parents=[common], help="Evaluate scores against labels")
    p.add_argument("--scores", type=Path, required=True, help="scores.csv path")
    p.add_argument("--labels", type=Path, required=True, help="labels.csv path")
    p.add_argument("--out", type=Path, required=True, help="report.json path")
    p.add_argument("--roc", type=Path, default=None, help="Optional roc.csv path")
    p.set_defaults(handler=_cmd_eval)

    p = commands.add_parser("bench", parents=[common], help="Time featurize, training epochs and scoring rounds")
    p.add_argument("--data", type=Path, required=True, help="Dataset directory")
    p.add_argument("--out", type=Path, default=Path(BENCH_FILE), help="bench.json path")
    p.add_argument("--rounds", type=int, default=None, help="Sampling rounds R")
    p.add_argument("--features", type=Path, default=None, help="External features.tsv")
    p.set_defaults(handler=_cmd_bench)

    p = commands.add_parser("pipeline", parents=[common], help="inject, featurize, train, score and eval")
    p.add_argument("--data", type=Path, required=True, help="Clean dataset directory")
    p.add_argument("--out", type=Path, required=True, help="Output directory for every artifact")
    p.add_argument("--features", type=Path, default=None, help="External features.tsv")
    p.set_defaults(handler=_cmd_pipeline)

    p = commands.add_parser("sweep-rounds", parents=[common], help="AUC per sampling-round count")
    p.add_argument("--model", type=Path, required=True, help="Checkpoint path")
    p.add_argument("--data", type=Path, required=True, help="Labeled dataset directory")
    p.add_argument("--rounds", type=_round_counts, required=True, help="Comma-separated round counts")
    p.add_argument("--out", type=Path, default=None, help="Optional JSON output path")
    p.add_argument("--features", type=Path, default=None, help="External features.tsv")
    p.set_defaults(handler=_cmd_sweep_rounds)

    p = commands.add_parser("sweep-gamma", parents=[common], help="AUC per uni-modal weight gamma")
    p.add_argument("--data", type=Path, required=True, help="Labeled dataset directory")
    p.add_argument("--gammas", type=_gammas, required=True, help="Comma-separated gamma values")
    p.add_argument("--out", type=Path, default=None, help="Optional JSON output path")
    p.add_argument("--features", type=Path, default=None, help="External features.tsv")
    p.set_defaults(handler=_cmd_sweep_gamma)

    return parser


def resolve_config(args: argparse.Namespace, **overrides: Any) -> RunConfig:
    """Defaults < --preset < --config < flags, logged before use."""
    if args.seed is not None:
        overrides["seed"] = args.seed
    overrides = {k: v for k, v in overrides.items() if v is not None}
    config = load_config(args.config, args.preset, overrides)
    log_config(config, explicit_seed=args.seed is not None)
    return config


def _cmd_generate(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec) if args.spec else SynthSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    else:
        logger.info(f"No --seed given, using seed {spec.seed}")
    logger.info(f"Resolved synth spec: {spec}")
    save_dataset(generate(spec), None, args.out)
    return EXIT_OK


def _cmd_inject(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    run_inject(config, args.in_dir, args.out)
    return EXIT_OK


def _cmd_train(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    if args.grad_check:
        error = grad_check(tiny_config(seed=config.seed))
        if error > GRAD_CHECK_TOLERANCE:
            raise NumericError(f"gradient check failed: max relative error {error:.3e}")
        logger.info(f"Gradient check passed (max relative error {error:.3e})")
    run_train(config, args.data, args.out, args.features)
    return EXIT_OK


def _cmd_score(args: argparse.Namespace) -> int:
    if args.config is not None or args.preset is not None:
        logger.warning("score uses the checkpoint's config; --config/--preset are ignored")
    run_score(args.model, args.data, args.out, rounds=args.rounds, seed=args.seed,
              features_path=args.features)
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    resolve_config(args)
    run_eval(args.scores, args.labels, args.out, args.roc)
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace) -> int:
    config = resolve_config(args, rounds=args.rounds)
    run_bench(config, args.data, args.out, args.features)
    return EXIT_OK


def _cmd_pipeline(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    report, _ = run_pipeline(config, args.data, args.out, args.features)
    print(json.dumps({"auc": report.auc, "ap": report.ap}))
    return EXIT_OK


def _cmd_sweep_rounds(args: argparse.Namespace) -> int:
    rows = run_sweep_rounds(args.model, args.data, args.rounds, args.out, args.features)
    for row in rows:
        print(f"{row['rounds']}\t{row['auc']:.6f}")
    return EXIT_OK


def _cmd_sweep_gamma(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    rows = run_sweep_gamma(config, args.data, args.gammas, args.out, args.features)
    for row in rows:
        print(f"{row['gamma']}\t{row['auc']:.6f}")
    return EXIT_OK


def apply_thread_limit() -> None:
    """Cap torch intra-op threads from TAGAD_THREADS when set."""
    value = os.environ.get(THREADS_ENV)
    if not value:
        return
    try:
        threads = int(value)
    except ValueError as e:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got '{value}'") from e
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got '{value}'")
    torch.set_num_threads(threads)
    logger.debug(f"torch threads capped at {threads}")


def _exit_code(error: Exception) -> int:
    if isinstance(error, NumericError):
        return EXIT_NUMERIC
    if isinstance(error, ConfigError):
        return EXIT_USAGE
    return EXIT_DATA


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        apply_thread_limit()
        return handler(args)
    except (ConfigError, DatasetError, InjectionError, NumericError, OSError, ValueError) as e:
        code = _exit_code(e)
        logger.error(f"tagad {args.command} failed: {e}")
        return code
    except Exception:
        logger.exception(f"Unexpected error in tagad {args.command}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
