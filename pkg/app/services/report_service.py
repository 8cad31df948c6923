"""CSV output of experiment results through pandas."""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO, Union

import pandas as pd

from app.models.scenario_models import StepRecord
from app.services.ekf_service import EkfRun
from app.utils.logger import get_logger

logger = get_logger(__name__)

STEP_COLUMNS = ["k", "tau", "eta_min", "eta_sum", "M", "feasible", "utility", "wall_ns"]
SWEEP_COLUMNS = ["param", "value", "mean_tau", "mean_eta_min", "frac_feasible"]
BASELINE_COLUMNS = ["scheme", "gamma", "M", "mean_tau", "mean_eta", "frac_feasible"]
FLOAT_FORMAT = "%.12g"

Destination = Union[str, Path, TextIO]


def step_frame(records: Sequence[StepRecord], *, with_trial: bool = False) -> pd.DataFrame:
    rows = [
        {
            "trial": record.trial,
            "k": record.k,
            "tau": record.tau,
            "eta_min": record.eta_min,
            "eta_sum": record.eta_sum,
            "M": record.M_label,
            "feasible": "true" if record.feasible else "false",
            "utility": record.utility,
            "wall_ns": record.wall_ns,
        }
        for record in records
    ]
    columns = (["trial"] if with_trial else []) + STEP_COLUMNS
    return pd.DataFrame(rows, columns=["trial"] + STEP_COLUMNS)[columns]


def sweep_frame(rows: List[Dict[str, float]]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def baseline_frame(rows: List[Dict[str, float]]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=BASELINE_COLUMNS)


def ekf_frames(sanitized: EkfRun, raw: EkfRun) -> Dict[str, pd.DataFrame]:
    """Trajectory and speed tables comparing sanitized and raw estimates."""
    steps = range(sanitized.truth.shape[0])
    trajectory = pd.DataFrame({
        "k": list(steps),
        "true_x": sanitized.truth[:, 2],
        "true_y": sanitized.truth[:, 3],
        "sanitized_x": sanitized.estimates[:, 2],
        "sanitized_y": sanitized.estimates[:, 3],
        "unsanitized_x": raw.estimates[:, 2],
        "unsanitized_y": raw.estimates[:, 3],
    })
    speed = pd.DataFrame({
        "k": list(steps),
        "true_v": sanitized.truth[:, 0],
        "sanitized_v": sanitized.estimates[:, 0],
        "unsanitized_v": raw.estimates[:, 0],
        "M": sanitized.M_used,
    })
    return {"trajectory": trajectory, "speed": speed}


def write_csv(frame: pd.DataFrame, destination: Optional[Destination]) -> Optional[str]:
    """Write deterministically; with no destination the CSV text is returned instead."""
    if destination is None:
        return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    if isinstance(destination, (str, Path)):
        path = Path(destination)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.info(f"wrote {len(frame)} row(s) to {path}")
        return None
    frame.to_csv(destination, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return None
