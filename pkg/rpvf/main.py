"""Command-line entrypoint running the basis comparison experiments."""

from __future__ import annotations

import argparse
import json
import logging.config
import os
import sys
from pathlib import Path

from pydantic import ValidationError

from rpvf.config import ExperimentConfig, ExperimentId
from rpvf.exceptions import RpvfError
from rpvf.experiments import run_experiment, write_report

logger = logging.getLogger(__name__)

ALL_EXPERIMENTS = "all"


def configure_logging() -> None:
    """Load the logging configuration named by LOG_CONFIG (JSON dictConfig)."""
    config_file = Path(os.getenv("LOG_CONFIG", "logging-dev.json"))
    if not config_file.exists():
        logging.basicConfig(level=logging.INFO, format="%(levelname)s - %(name)s - %(message)s")
        return
    with config_file.open() as f:
        logging.config.dictConfig(json.load(f))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rpvf",
        description="Compare proto-value function and reward-based bases on gridworld MDPs",
    )
    parser.add_argument(
        "experiment",
        choices=[experiment.value for experiment in ExperimentId] + [ALL_EXPERIMENTS],
    )
    parser.add_argument("--alpha", type=float, help="Discount factor in (0, 1)")
    parser.add_argument("--beta", type=float, help="Reward inverse temperature for W_R")
    parser.add_argument("--sigma", type=float, help="Bandwidth of the value kernel")
    parser.add_argument("--k", type=int, help="Number of eigenvectors per action block")
    parser.add_argument("--seed", type=int, help="Root seed")
    parser.add_argument("--instances", type=int, help="Mine grids in the benchmark")
    parser.add_argument("--policies", type=int, help="Initial policies per mine grid")
    parser.add_argument("--episodes", type=int, help="Sampling episodes")
    parser.add_argument("--horizon", type=int, help="Sampling episode length")
    parser.add_argument("--workers", type=int, help="Processes for the mine-grid benchmark")
    parser.add_argument("--out", type=Path, help="Output directory")
    parser.add_argument("--config", type=Path, help="Flat key=value config file")
    return parser


def _selected(experiment: str) -> list[ExperimentId]:
    if experiment == ALL_EXPERIMENTS:
        return list(ExperimentId)
    return [ExperimentId(experiment)]


def main(argv: list[str] | None = None) -> int:
    """Parse arguments, run the chosen experiments and write their reports.

    Returns:
        Process exit code: 0 on success, 1 on any configuration or numerical failure.
    """
    args = vars(build_parser().parse_args(argv))
    experiment = args.pop("experiment")
    config_file = args.pop("config")

    try:
        for experiment_id in _selected(experiment):
            config = ExperimentConfig.load(config_file, experiment=experiment_id, **args)
            logger.info(
                "Configuration loaded: experiment=%s, alpha=%s, beta=%s, k=%s, seed=%s, out=%s",
                config.experiment,
                config.alpha,
                config.resolved_beta,
                config.k,
                config.seed,
                config.output_dir,
            )
            report = run_experiment(config)
            write_report(report, config)
    except (RpvfError, ValidationError, ValueError, FileNotFoundError) as e:
        logger.exception("Experiment %s failed: %s", experiment, e)
        return 1
    return 0


def cli() -> None:
    configure_logging()
    sys.exit(main())


if __name__ == "__main__":
    cli()
