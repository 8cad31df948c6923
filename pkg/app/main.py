"""Command-line entry point: ``python -m app.main <subcommand> [flags]``.

Exit codes: 0 success, 1 configuration or usage error, 2 numeric failure.
"""

import argparse
import sys
from typing import List, Optional, Sequence

from app.config.scenario_loader import load_ekf_config, load_scenario
from app.config.settings import Settings
from app.models.scenario_models import DECENTRALIZED_SCHEMES
from app.services.base import ConfigError, ServiceError
from app.services.ekf_service import run_ekf_localization, simulate_ranges
from app.services.experiment_service import ExperimentService
from app.services.report_service import (
    baseline_frame,
    ekf_frames,
    step_frame,
    sweep_frame,
    write_csv,
)
from app.services.selftest_service import run_selftest
from app.utils.logger import get_logger, set_level

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Routes usage errors to exit code 1 instead of argparse's 2."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _float_list(raw: str) -> List[float]:
    try:
        return [float(item) for item in raw.split(",") if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{raw}'") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="app.main", description="Privacy-preserving compressed Kalman filtering experiments")
    parser.add_argument(
        "--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Override LOG_LEVEL"
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(cmd, *, config_required: bool = True, trials: bool = False, steps: bool = True):
        cmd.add_argument("--config", required=config_required, help="Flat key=value scenario file")
        cmd.add_argument("--seed", type=int, default=None, help="Base seed (default: from config)")
        if steps:
            cmd.add_argument("--steps", type=int, default=None, help="Number of filter steps (default: from config)")
        if trials:
            cmd.add_argument(
                "--trials", type=int, default=None, help="Independent trials (default: config, else DEFAULT_TRIALS)"
            )
        cmd.add_argument("--out", default=None, help="Output CSV path (default: stdout)")

    simulate = sub.add_parser("simulate", help="Run one trial and write per-step records")
    common(simulate)
    simulate.add_argument("--scheme", default=None, help="Override the configured scheme")
    simulate.add_argument("--timing", action="store_true", help="Record wall time per step")

    sweep = sub.add_parser("sweep", help="Average final-step errors over a parameter grid")
    common(sweep, trials=True)
    sweep.add_argument("--param", required=True, choices=["delta", "omega", "lookahead"])
    sweep.add_argument("--values", required=True, type=_float_list, help="Comma-separated grid")

    compare = sub.add_parser("compare-baselines", help="Proposed scheme against calibrated IB, PF and CP")
    common(compare, trials=True)

    decentral = sub.add_parser("decentralized", help="Multi-sensor run")
    common(decentral)
    decentral.add_argument("--scheme", default=None, choices=list(DECENTRALIZED_SCHEMES))

    ekf = sub.add_parser("ekf-loc", help="Range-only localization, sanitized against raw")
    ekf.add_argument("--config", default=None, help="Optional key=value file for the localization run")
    ekf.add_argument("--seed", type=int, default=None)
    ekf.add_argument("--steps", type=int, default=None)
    ekf.add_argument("--out", default="ekf", help="Output prefix (default: ekf)")

    selftest = sub.add_parser("selftest", help="Randomized identity checks")
    selftest.add_argument("--seed", type=int, default=0, help="Seed (default: 0)")
    selftest.add_argument("--trials", type=int, default=100, help="Instances per check (default: 100)")
    return parser


def _emit(frame, out: Optional[str]) -> None:
    text = write_csv(frame, out)
    if text is not None:
        sys.stdout.write(text)


def run_command(args: argparse.Namespace, settings: Settings) -> int:
    if args.command == "selftest":
        report = run_selftest(seed=args.seed, trials=args.trials)
        return EXIT_OK if report.passed else EXIT_NUMERIC

    if args.command == "ekf-loc":
        cfg = load_ekf_config(args.config, seed=args.seed, steps=args.steps)
        data = simulate_ranges(cfg)
        sanitized = run_ekf_localization(cfg, sanitize=True, data=data)
        raw = run_ekf_localization(cfg, sanitize=False, data=data)
        for name, frame in ekf_frames(sanitized, raw).items():
            write_csv(frame, f"{args.out}_{name}.csv")
        return EXIT_OK

    scheme = getattr(args, "scheme", None)
    if args.command == "decentralized" and scheme is None:
        scheme = "sequential"
    cfg = load_scenario(args.config, seed=args.seed, steps=args.steps, scheme=scheme)
    if args.command == "decentralized" and cfg.scheme not in DECENTRALIZED_SCHEMES:
        raise ConfigError(f"decentralized runs need scheme no_exchange or sequential, got {cfg.scheme}")

    service = ExperimentService(settings, record_wall_time=True if getattr(args, "timing", False) else None)
    if args.command in ("simulate", "decentralized"):
        _emit(step_frame(service.run_experiment(cfg)), args.out)
    elif args.command == "sweep":
        _emit(sweep_frame(service.sweep(cfg, args.param, args.values, args.trials)), args.out)
    elif args.command == "compare-baselines":
        _emit(baseline_frame(service.compare_baselines(cfg, args.trials)), args.out)
    return EXIT_OK


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_CONFIG
    except SystemExit as exc:
        # --help
        return int(exc.code or 0)

    try:
        settings = Settings()
        if args.log_level:
            set_level(args.log_level)
        return run_command(args, settings)
    except (ConfigError, ValueError) as exc:
        logger.error(f"configuration error: {exc}")
        return EXIT_CONFIG
    except ServiceError as exc:
        logger.error(f"numeric failure: {exc}", exc_info=True)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(cli_main())
