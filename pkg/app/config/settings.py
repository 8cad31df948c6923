import os
from pathlib import Path
from dotenv import load_dotenv


BASE_DIR = Path(__file__).resolve().parent.parent.parent
ENV_PATH = BASE_DIR / ".env"

_TRUE_VALUES = {"1", "true", "yes", "on"}
_FALSE_VALUES = {"0", "false", "no", "off"}


# Numeric tolerances and run defaults; everything has a default so no .env is required
class Settings:
    def __init__(self, env_path: Path = ENV_PATH):
        # Values already exported in the shell win over the .env file
        if env_path.exists():
            load_dotenv(dotenv_path=env_path, override=False)

        self.LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO").strip().upper()
        if self.LOG_LEVEL not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError("LOG_LEVEL must be one of DEBUG, INFO, WARNING, ERROR, CRITICAL.")

        self.LOG_FILE = os.environ.get("LOG_FILE", "").strip() or None

        floor_raw = os.environ.get("EIG_FLOOR", "1e-12").strip()
        self.EIG_FLOOR = float(floor_raw)
        if not 0 < self.EIG_FLOOR < 1e-3:
            raise ValueError("EIG_FLOOR must be a positive number below 1e-3.")

        sweeps_raw = os.environ.get("MULTIPLIER_MAX_SWEEPS", "200").strip()
        self.MULTIPLIER_MAX_SWEEPS = int(sweeps_raw)
        if self.MULTIPLIER_MAX_SWEEPS <= 0:
            raise ValueError("MULTIPLIER_MAX_SWEEPS must be a positive integer.")

        doublings_raw = os.environ.get("MULTIPLIER_MAX_DOUBLINGS", "10").strip()
        self.MULTIPLIER_MAX_DOUBLINGS = int(doublings_raw)
        if self.MULTIPLIER_MAX_DOUBLINGS < 0:
            raise ValueError("MULTIPLIER_MAX_DOUBLINGS must be a non-negative integer.")

        bisection_raw = os.environ.get("MULTIPLIER_BISECTION_STEPS", "60").strip()
        self.MULTIPLIER_BISECTION_STEPS = int(bisection_raw)
        if self.MULTIPLIER_BISECTION_STEPS <= 0:
            raise ValueError("MULTIPLIER_BISECTION_STEPS must be a positive integer.")

        eps_raw = os.environ.get("SEQUENTIAL_EPS_CONV", "1e-6").strip()
        self.SEQUENTIAL_EPS_CONV = float(eps_raw)
        if self.SEQUENTIAL_EPS_CONV <= 0:
            raise ValueError("SEQUENTIAL_EPS_CONV must be a positive number.")

        max_iter_raw = os.environ.get("SEQUENTIAL_MAX_SWEEPS", "10").strip()
        self.SEQUENTIAL_MAX_SWEEPS = int(max_iter_raw)
        if self.SEQUENTIAL_MAX_SWEEPS <= 0:
            raise ValueError("SEQUENTIAL_MAX_SWEEPS must be a positive integer.")

        self.RECORD_WALL_TIME = _parse_bool("RECORD_WALL_TIME", os.environ.get("RECORD_WALL_TIME", "false"))

        trials_raw = os.environ.get("DEFAULT_TRIALS", "50").strip()
        self.DEFAULT_TRIALS = int(trials_raw)
        if self.DEFAULT_TRIALS <= 0:
            raise ValueError("DEFAULT_TRIALS must be a positive integer.")

        self.OUTPUT_DIR = Path(os.environ.get("OUTPUT_DIR", "results").strip() or "results")

        # Scale of the first multiplier bracket relative to trace(Θ_P) / threshold
        self.GAMMA_MAX_SCALE = 1e3


def _parse_bool(name: str, raw: str) -> bool:
    value = raw.strip().lower()
    if value in _TRUE_VALUES:
        return True
    if value in _FALSE_VALUES:
        return False
    raise ValueError(f"{name} must be a boolean (true/false).")
