"""
Configuration management for kernkit.

Run settings are resolved from, lowest priority first: config/defaults.json,
the user's JSON file, ``KERNKIT_<FIELD>`` environment variables, and
command-line flags.
"""
import json
import logging
import logging.config
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Type, Union

from pydantic import Field, ValidationError
from pydantic_settings import (
    BaseSettings,
    InitSettingsSource,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
)

from kernkit.errors import ConfigError
from kernkit.schemas import (
    SHAPE_NAMES,
    EncoderConfig,
    FeatureKind,
    ModelKind,
    SynthConfig,
    SynthMode,
    TrainConfig,
)
from kernkit.storage import load_json, save_json

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"
EFFECTIVE_CONFIG_NAME = "effective_config.json"

PathLike = Union[str, Path]


class RunConfig(BaseSettings):
    """Flat run configuration covering corpus generation, encoder pretraining and training."""

    model_config = SettingsConfigDict(env_prefix="KERNKIT_", extra="forbid")

    # synthetic corpus
    n_categories: int = Field(default=10, ge=2)
    image_size: int = 64
    train_fonts: int = Field(default=200, ge=0)
    val_fonts: int = Field(default=25, ge=0)
    test_fonts: int = Field(default=25, ge=0)
    mode: SynthMode = SynthMode.A
    fonts_per_family: int = Field(default=1, ge=1)
    shapes: List[str] = Field(default_factory=lambda: list(SHAPE_NAMES))
    fixed_gap: Optional[float] = None

    # kerning model training
    model: ModelKind = ModelKind.SETWISE
    features: FeatureKind = FeatureKind.ENCODER
    lr: Optional[float] = Field(default=None, gt=0)
    batch_size: int = Field(default=64, ge=1)
    patience: int = Field(default=100, ge=1)
    max_epochs: int = Field(default=2000, ge=1)
    seed: int = Field(default=0, ge=0)
    d_model: int = Field(default=32, ge=2)
    n_heads: int = Field(default=2, ge=1)
    ffn_dim: int = Field(default=64, ge=1)
    n_layers: int = Field(default=1, ge=1)
    max_tokens: int = Field(default=4096, ge=1)
    pairwise_hidden: Tuple[int, int] = (512, 256)

    # encoder pretraining
    feature_dim: int = Field(default=128, ge=1)
    encoder_channels: Tuple[int, int, int, int] = (16, 32, 64, 128)
    encoder_lr: float = Field(default=1e-3, gt=0)
    encoder_batch_size: int = Field(default=64, ge=1)
    encoder_patience: int = Field(default=5, ge=1)
    encoder_max_epochs: int = Field(default=50, ge=1)
    encoder_holdout_fraction: float = Field(default=0.1, gt=0, lt=1)

    # paths and runtime
    corpus: Optional[str] = None
    encoder: Optional[str] = None
    threads: int = Field(default=1, ge=1)
    float_mode: str = Field(default="float32", pattern="^float(32|64)$")
    log_level: str = "INFO"
    log_file: Optional[str] = None

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            n_categories=self.n_categories,
            image_size=self.image_size,
            train_fonts=self.train_fonts,
            val_fonts=self.val_fonts,
            test_fonts=self.test_fonts,
            mode=self.mode,
            seed=self.seed,
            fonts_per_family=self.fonts_per_family,
            shapes=self.shapes,
            fixed_gap=self.fixed_gap,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            model=self.model,
            features=self.features,
            lr=self.lr,
            batch_size=self.batch_size,
            patience=self.patience,
            max_epochs=self.max_epochs,
            seed=self.seed,
            d_model=self.d_model,
            n_heads=self.n_heads,
            ffn_dim=self.ffn_dim,
            n_layers=self.n_layers,
            max_tokens=self.max_tokens,
            pairwise_hidden=self.pairwise_hidden,
        )

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            feature_dim=self.feature_dim,
            channels=self.encoder_channels,
            lr=self.encoder_lr,
            batch_size=self.encoder_batch_size,
            patience=self.encoder_patience,
            max_epochs=self.encoder_max_epochs,
            holdout_fraction=self.encoder_holdout_fraction,
            seed=self.seed,
        )

    def effective(self) -> Dict[str, Any]:
        """Plain values with model-dependent defaults resolved."""
        values = self.model_dump(mode="json")
        values["lr"] = self.train_config().learning_rate
        return values


def _first_error(error: ValidationError) -> str:
    first = error.errors()[0]
    where = ".".join(str(part) for part in first["loc"]) or "config"
    return f"{where}: {first['msg']}"


def build_run_config(file_values: Mapping[str, Any], flags: Mapping[str, Any]) -> RunConfig:
    """
    Resolve a RunConfig with flags over environment over file values.

    Raises:
        ConfigError: On unknown keys or invalid values
    """
    file_values = dict(file_values)

    class _ResolvedRunConfig(RunConfig):
        @classmethod
        def settings_customise_sources(
            cls,
            settings_cls: Type[BaseSettings],
            init_settings: PydanticBaseSettingsSource,
            env_settings: PydanticBaseSettingsSource,
            dotenv_settings: PydanticBaseSettingsSource,
            file_secret_settings: PydanticBaseSettingsSource,
        ) -> Tuple[PydanticBaseSettingsSource, ...]:
            return init_settings, env_settings, InitSettingsSource(settings_cls, init_kwargs=file_values)

    try:
        return _ResolvedRunConfig(**{k: v for k, v in flags.items() if v is not None})
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {_first_error(e)}") from None


class ConfigManager:
    """Loads defaults and user configuration files and echoes the effective result."""

    def __init__(self, config_dir: Optional[PathLike] = None):
        """
        Initialise configuration manager.

        Args:
            config_dir: Directory holding defaults.json and logging.json
                (defaults to KERNKIT_CONFIG_DIR or the repository's config/)
        """
        if config_dir is None:
            config_dir = os.getenv("KERNKIT_CONFIG_DIR", str(DEFAULT_CONFIG_DIR))
        self.config_dir = Path(config_dir)
        self.defaults_file = self.config_dir / "defaults.json"
        self.logging_file = self.config_dir / "logging.json"

    def _load_object(self, path: Path) -> Dict[str, Any]:
        data = load_json(path)
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must hold a JSON object")
        return data

    def get_defaults(self) -> Dict[str, Any]:
        if self.defaults_file.exists():
            return self._load_object(self.defaults_file)
        return {}

    def load(self, user_file: Optional[PathLike] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
        """
        Resolve the run configuration.

        Args:
            user_file: Optional JSON file with flat RunConfig keys
            overrides: Values from command-line flags (None entries are ignored)

        Returns:
            Validated RunConfig
        """
        values = self.get_defaults()
        if user_file is not None:
            user_values = self._load_object(Path(user_file))
            unknown = sorted(set(user_values) - set(RunConfig.model_fields))
            if unknown:
                raise ConfigError(f"unknown configuration keys in {user_file}: {', '.join(unknown)}")
            values.update(user_values)
        return build_run_config(values, overrides or {})

    def save_effective(self, cfg: RunConfig, out_dir: PathLike) -> Path:
        """Write effective_config.json into ``out_dir``."""
        path = Path(out_dir) / EFFECTIVE_CONFIG_NAME
        save_json(path, cfg.effective())
        return path

    def setup_logging(self, level: Optional[str] = None, log_file: Optional[PathLike] = None) -> None:
        """
        Install the logging configuration.

        Console output goes to stderr; ``log_file`` adds a JSON file handler.
        KERNKIT_LOG_CONFIG names an alternative dictConfig file.
        """
        path = Path(os.getenv("KERNKIT_LOG_CONFIG", str(self.logging_file)))
        if path.exists():
            with open(path, "r", encoding="utf-8") as f:
                config = json.load(f)
        else:
            config = {
                "version": 1,
                "disable_existing_loggers": False,
                "formatters": {"default": {"format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s"}},
                "handlers": {"console": {"class": "logging.StreamHandler", "formatter": "default",
                                         "stream": "ext://sys.stderr"}},
                "root": {"level": "INFO", "handlers": ["console"]},
            }
        if log_file:
            config.setdefault("formatters", {})["json"] = {
                "class": "pythonjsonlogger.json.JsonFormatter",
                "format": "%(asctime)s %(name)s %(levelname)s %(message)s",
            }
            config["handlers"]["file"] = {
                "class": "logging.handlers.RotatingFileHandler",
                "formatter": "json",
                "filename": str(log_file),
                "maxBytes": 10485760,
                "backupCount": 5,
            }
            config["root"]["handlers"] = [*config["root"].get("handlers", []), "file"]
        if level:
            config["root"]["level"] = level.upper()
        logging.config.dictConfig(config)
