from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.exceptions import ConfigurationError, StageConfigError
from src.schemas.model.config import ModelConfig
from src.schemas.training.stage import Method, Penalty, StageConfig

# Thresholds used when a pruning method is chosen without explicit values.
METHOD_DEFAULTS: Dict[Method, Dict[str, float]] = {
    Method.RGSM: {"lam": 0.05, "beta": 1.0, "mu": 0.0},
    Method.GSBC: {"lam": 0.05, "beta": 0.0, "mu": 0.0},
    Method.GL: {"lam": 0.0, "beta": 0.0, "mu": 0.5},
}


class DefaultSettings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        extra="ignore",
        frozen=True,
        env_nested_delimiter="__",
        env_parse_enums=True,
    )


class ModelSettings(DefaultSettings):
    """Network shape settings."""

    preset: Literal["toy", "speech_commands"] = "toy"
    seed: int = 0

    def to_model_config(self) -> ModelConfig:
        if self.preset == "speech_commands":
            return ModelConfig.speech_commands(seed=self.seed)
        return ModelConfig.toy(seed=self.seed)


class DataSettings(DefaultSettings):
    """Synthetic dataset settings; ``path`` switches to a precomputed feature file."""

    num_classes: int = 4
    n_per_class: int = 500
    t: int = 32
    f: int = 16
    noise_sigma: float = 0.5
    seed: int = 0
    path: Optional[str] = None


class StageSettings(DefaultSettings):
    """Hyperparameters of one stage; unset lam/beta/mu fall back to METHOD_DEFAULTS."""

    method: Method = Method.SGD
    lam: Optional[float] = None
    beta: Optional[float] = None
    mu: Optional[float] = None
    rho: float = 0.0
    lr: float = 0.02
    lr_drop_epoch: Optional[int] = None
    epochs: int = 12
    batch_size: int = 32
    seed: int = 0
    penalty: Penalty = Penalty.GL
    weight_decay: float = 0.0

    def to_stage_config(self) -> StageConfig:
        """Resolve method defaults and validate method-parameter consistency.

        Raises:
            StageConfigError: if the resolved parameters contradict the method.
        """
        defaults = METHOD_DEFAULTS.get(self.method, {"lam": 0.0, "beta": 0.0, "mu": 0.0})
        values: Dict[str, Any] = {
            "method": self.method,
            "lam": self.lam if self.lam is not None else defaults["lam"],
            "beta": self.beta if self.beta is not None else defaults["beta"],
            "mu": self.mu if self.mu is not None else defaults["mu"],
            "rho": self.rho if self.method == Method.BLENDED_BC else 0.0,
            "eta": self.lr,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr_drop_epoch": self.lr_drop_epoch,
            "seed": self.seed,
            "penalty": self.penalty,
            "weight_decay": self.weight_decay,
        }
        try:
            return StageConfig(**values)
        except ValidationError as e:
            raise StageConfigError(f"Invalid {self.method.value} stage configuration: {e}") from e


class BaselineSettings(StageSettings):
    """Unpruned float network (the reference accuracy)."""

    method: Method = Method.SGD
    epochs: int = 15
    lr_drop_epoch: Optional[int] = 12


class StageOneSettings(StageSettings):
    """Stage I: channel pruning from a cold start."""

    method: Method = Method.RGSM
    epochs: int = 30
    lr_drop_epoch: Optional[int] = 24


class StageTwoSettings(StageSettings):
    """Stage II: float retraining under the frozen mask."""

    method: Method = Method.SGD
    epochs: int = 12
    lr: float = 0.01
    lr_drop_epoch: Optional[int] = 9


class StageThreeSettings(StageSettings):
    """Stage III: weight binarization with warm start."""

    method: Method = Method.BLENDED_BC
    rho: float = 1e-5
    epochs: int = 12
    lr: float = 0.005
    lr_drop_epoch: Optional[int] = 9


class Settings(DefaultSettings):
    """Application settings."""

    app_version: str = "0.1.0"
    environment: str = "development"
    log_level: str = "INFO"
    output_dir: str = "./runs"

    model: ModelSettings = Field(default_factory=ModelSettings)
    data: DataSettings = Field(default_factory=DataSettings)
    baseline: BaselineSettings = Field(default_factory=BaselineSettings)
    stage1: StageOneSettings = Field(default_factory=StageOneSettings)
    stage2: StageTwoSettings = Field(default_factory=StageTwoSettings)
    stage3: StageThreeSettings = Field(default_factory=StageThreeSettings)


def get_settings(config_file: Optional[Union[str, Path]] = None, **overrides: Any) -> Settings:
    """Get application settings.

    Args:
        config_file: key-value (dotenv) file, e.g. ``STAGE1__LAM=0.05``;
            ``.env`` in the working directory when omitted.
        overrides: nested dicts (``stage1={"lam": 0.04}``) that take precedence
            over the file and the environment.
    Raises:
        ConfigurationError: if the file is missing or a value fails validation.
    """
    if config_file is not None and not Path(config_file).is_file():
        raise ConfigurationError(f"Config file not found: {config_file}")
    try:
        if config_file is None:
            return Settings(**overrides)
        return Settings(_env_file=str(config_file), **overrides)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid settings: {e}") from e
