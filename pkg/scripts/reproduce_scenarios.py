"""
Reproduction script that writes every experiment family as CSV into one directory:
privacy-floor sweep, zigzag run, baseline comparison, decentralized comparison,
lossy-measurement run and the EKF localization run.
"""
import argparse
import sys
from pathlib import Path

# Add parent directory to path to import app modules
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.config.settings import Settings
from app.models.scenario_models import EkfConfig, ScenarioConfig
from app.services.ekf_service import run_ekf_localization, simulate_ranges
from app.services.experiment_service import ExperimentService
from app.services.report_service import baseline_frame, ekf_frames, step_frame, sweep_frame, write_csv
from app.utils.logger import setup_logger

logger = setup_logger(__name__, level="INFO")

SCENARIOS = {
    "delta_sweep": ScenarioConfig(
        dim_state=8, dim_meas=8, n_public=4, n_private=4, q_scale=2.0, p0_scale=0.01,
        f_generator="random_sv", lookahead="auto", xi=1.0, epsilon=2.0,
    ),
    "zigzag": ScenarioConfig(
        dim_state=8, dim_meas=8, n_public=4, n_private=4, q_scale=2.0, p0_scale=0.01,
        f_generator="flip", delta=15 / 4,
    ),
    "baselines": ScenarioConfig(
        dim_state=10, dim_meas=10, n_public=5, n_private=5, q_scale=2.0, p0_scale=0.01,
        f_generator="gaussian_rows", h_generator="orthogonal", delta=5.0,
    ),
    "lossy": ScenarioConfig(
        dim_state=10, dim_meas=10, n_public=5, n_private=5, q_scale=0.2, r_scale=0.1,
        f_generator="identity", h_generator="identity", drop_prob=0.8, delta=1.0,
        privacy_map="elementwise",
    ),
}


def decentralized_scenario(sensor_dims: str, scheme: str) -> ScenarioConfig:
    return ScenarioConfig(
        dim_state=8, dim_meas=30, n_public=4, n_private=4, q_scale=4.0, delta=3.0,
        privacy_map="elementwise", lookahead="auto", xi=1.0, epsilon=4.0,
        sensor_dims=sensor_dims, scheme=scheme,
    )


def reproduce(*, out_dir: Path, trials: int, steps: int, seed: int) -> None:
    """
    Run every experiment family and write its CSV.

    Args:
        out_dir: Directory receiving the CSV files
        trials: Independent trials per averaged data point
        steps: Filter steps per trial
        seed: Base seed shared by all families
    """
    logger.info("=" * 60)
    logger.info("Scenario Reproduction Script")
    logger.info("=" * 60)
    logger.info(f"Output directory: {out_dir}")
    logger.info(f"Trials: {trials}")
    logger.info(f"Steps: {steps}")
    logger.info(f"Seed: {seed}")
    logger.info("=" * 60)

    service = ExperimentService(Settings())
    written = []

    def scenario(name: str, **overrides) -> ScenarioConfig:
        return SCENARIOS[name].with_overrides(seed=seed, steps=steps, **overrides)

    logger.info("Sweeping the privacy floor...")
    rows = service.sweep(scenario("delta_sweep"), "delta", [float(d) for d in range(1, 11)], trials)
    written.append(out_dir / "delta_sweep.csv")
    write_csv(sweep_frame(rows), written[-1])

    logger.info("Running the zigzag scenario with and without look-ahead...")
    for depth in (0, 1):
        records = service.run_experiment(scenario("zigzag", lookahead_depth=depth))
        written.append(out_dir / f"zigzag_r{depth}.csv")
        write_csv(step_frame(records), written[-1])

    logger.info("Comparing against calibrated baselines...")
    rows = service.compare_baselines(scenario("baselines"), trials)
    written.append(out_dir / "baselines.csv")
    write_csv(baseline_frame(rows), written[-1])

    logger.info("Running the decentralized schemes...")
    for dims in ("10,10,10", "6,6,6,6,6"):
        for scheme in ("no_exchange", "sequential"):
            cfg = decentralized_scenario(dims, scheme).with_overrides(seed=seed, steps=steps)
            records = service.run_experiment(cfg)
            written.append(out_dir / f"decentralized_{scheme}_{len(dims.split(','))}sensors.csv")
            write_csv(step_frame(records), written[-1])

    logger.info("Running the lossy-measurement scenario...")
    records = service.run_experiment(scenario("lossy"))
    written.append(out_dir / "lossy.csv")
    write_csv(step_frame(records), written[-1])

    logger.info("Running the EKF localization scenario...")
    ekf_cfg = EkfConfig(seed=seed)
    data = simulate_ranges(ekf_cfg)
    sanitized = run_ekf_localization(ekf_cfg, sanitize=True, data=data)
    raw = run_ekf_localization(ekf_cfg, sanitize=False, data=data)
    for name, frame in ekf_frames(sanitized, raw).items():
        written.append(out_dir / f"ekf_{name}.csv")
        write_csv(frame, written[-1])

    logger.info("\n" + "=" * 60)
    logger.info("REPRODUCTION COMPLETE")
    logger.info("=" * 60)
    logger.info(f"Files written: {len(written)}")
    logger.info(f"Sanitized location RMSE: {sanitized.location_rmse:.4f} (raw {raw.location_rmse:.4f})")
    logger.info(f"Sanitized speed RMSE: {sanitized.speed_rmse:.4f} (raw {raw.speed_rmse:.4f})")
    logger.info("=" * 60)


def main():
    """Parse arguments and run every scenario."""
    settings = Settings()
    parser = argparse.ArgumentParser(
        description="Write the CSV files of every experiment family"
    )
    parser.add_argument(
        "--out-dir",
        type=Path,
        default=settings.OUTPUT_DIR,
        help=f"Directory for the CSV files (default: {settings.OUTPUT_DIR})",
    )
    parser.add_argument(
        "--trials",
        type=int,
        default=settings.DEFAULT_TRIALS,
        help=f"Trials per averaged data point (default: {settings.DEFAULT_TRIALS})",
    )
    parser.add_argument(
        "--steps",
        type=int,
        default=20,
        help="Filter steps per trial (default: 20)",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=0,
        help="Base seed (default: 0)",
    )

    args = parser.parse_args()

    reproduce(out_dir=args.out_dir, trials=args.trials, steps=args.steps, seed=args.seed)


if __name__ == "__main__":
    main()
