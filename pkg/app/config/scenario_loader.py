from pathlib import Path
from typing import Any, Dict, Optional, Type, TypeVar, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ValidationError

from app.models.scenario_models import EkfConfig, ScenarioConfig
from app.services.base import ConfigError
from app.utils.logger import get_logger

logger = get_logger(__name__)

ConfigModel = TypeVar("ConfigModel", bound=BaseModel)


def read_scenario_file(path: Union[str, Path]) -> Dict[str, str]:
    """Flat ``key=value`` pairs of a scenario file; ``#`` comments and blank lines are skipped."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"scenario file not found: {path}")
    values = {}
    for key, value in dotenv_values(path, interpolate=False).items():
        # A bare key or an empty value keeps the field's default
        if value is None or not value.strip():
            continue
        values[key.strip().lower()] = value.strip()
    return values


def load_config(
    model: Type[ConfigModel],
    path: Optional[Union[str, Path]] = None,
    **overrides: Any,
) -> ConfigModel:
    """Validate file values merged with command-line overrides into ``model``.

    Raises:
        ConfigError: on a missing file, an unknown key or a rejected value
    """
    values: Dict[str, Any] = read_scenario_file(path) if path is not None else {}
    values.update({key: value for key, value in overrides.items() if value is not None})
    try:
        config = model.model_validate(values)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in error['loc']) or 'config'}: {error['msg']}"
            for error in exc.errors()
        )
        raise ConfigError(f"invalid {model.__name__} ({problems})") from exc
    logger.debug(f"loaded {model.__name__} from {path or '<defaults>'}")
    return config


def load_scenario(path: Optional[Union[str, Path]] = None, **overrides: Any) -> ScenarioConfig:
    return load_config(ScenarioConfig, path, **overrides)


def load_ekf_config(path: Optional[Union[str, Path]] = None, **overrides: Any) -> EkfConfig:
    return load_config(EkfConfig, path, **overrides)
