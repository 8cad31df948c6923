import numpy as np
import pytest

from app.config.settings import Settings
from app.models.filter_models import GaussianBelief
from app.models.privacy_models import PrivacySpec


def make_psd(rng: np.random.Generator, dim: int, jitter: float = 0.1) -> np.ndarray:
    factor = rng.standard_normal((dim, dim))
    return factor @ factor.T / dim + jitter * np.eye(dim)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def psd():
    return make_psd


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    """Keep a developer's .env or exported variables out of the tests."""
    for key in (
        "LOG_LEVEL",
        "LOG_FILE",
        "EIG_FLOOR",
        "MULTIPLIER_MAX_SWEEPS",
        "MULTIPLIER_MAX_DOUBLINGS",
        "MULTIPLIER_BISECTION_STEPS",
        "SEQUENTIAL_EPS_CONV",
        "SEQUENTIAL_MAX_SWEEPS",
        "RECORD_WALL_TIME",
        "DEFAULT_TRIALS",
        "OUTPUT_DIR",
    ):
        monkeypatch.delenv(key, raising=False)
    monkeypatch.setattr("app.config.settings.ENV_PATH", tmp_path / "missing.env")
    monkeypatch.setattr(Settings.__init__, "__defaults__", (tmp_path / "missing.env",))


@pytest.fixture
def settings():
    return Settings()


@pytest.fixture
def small_problem(rng):
    """Predicted belief with 2 public and 2 private states, 4 measurements, one look-ahead step."""
    L, N = 4, 4
    pred = GaussianBelief(mean=np.zeros(L), cov=make_psd(rng, L) + np.eye(L), stage="predicted")
    H = rng.standard_normal((N, L))
    R = 0.5 * np.eye(N)
    F_future = [rng.standard_normal((L, L)) / 2.0]
    Q_future = [np.eye(L)]
    spec = PrivacySpec.partitioned(2, 2, delta=0.5)
    return pred, H, R, F_future, Q_future, spec
