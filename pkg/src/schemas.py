import configparser
import copy
import io
import math
import os
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .services.exwave.config import CONFIG
from .services.exwave.diffraction import PropagationGeometry
from .services.exwave.exceptions import ConfigError
from .services.exwave.training import TRAIN_MODES, TrainConfig


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeometryConfig(Section):
    wavelength: float = Field(gt=0)
    pitch: float = Field(gt=0)
    spacing: float = Field(gt=0)

    @field_validator("wavelength", "pitch", "spacing")
    @classmethod
    def finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return value


class NetworkConfig(Section):
    layers: int = Field(ge=1)
    side: int = Field(ge=5)
    mode: str

    @field_validator("mode")
    @classmethod
    def known_mode(cls, value: str) -> str:
        if value not in TRAIN_MODES:
            raise ValueError(f"unknown mode '{value}', expected one of {TRAIN_MODES}")
        return value


class TrainingConfig(Section):
    epochs: int = Field(ge=1)
    batch_size: int = Field(ge=1)
    learning_rate: float = Field(gt=0)
    adam_beta1: float = Field(ge=0, lt=1)
    adam_beta2: float = Field(ge=0, lt=1)
    adam_eps: float = Field(gt=0)
    seed: int = Field(ge=0)
    num_threads: int = Field(ge=1)


class DataConfig(Section):
    dataset: Literal["mnist", "fashion_mnist"]
    data_root: str
    dataset_dir: str = ""
    train_limit: Optional[int] = Field(default=None, ge=1)
    test_limit: Optional[int] = Field(default=None, ge=1)

    @field_validator("train_limit", "test_limit", mode="before")
    @classmethod
    def blank_is_unlimited(cls, value):
        if isinstance(value, str) and value.strip().lower() in ("", "none", "all"):
            return None
        return value

    @model_validator(mode="after")
    def per_dataset_dir(self) -> "DataConfig":
        """An unset dataset_dir becomes data_root/<dataset>."""
        if not self.dataset_dir.strip():
            self.dataset_dir = os.path.join(self.data_root, self.dataset)
        return self


class OutputConfig(Section):
    out_dir: str
    render_phase_maps: bool
    render_epochs: str

    @field_validator("render_epochs")
    @classmethod
    def epoch_list(cls, value: str) -> str:
        for item in value.split(","):
            if item.strip() and (not item.strip().isdigit()):
                raise ValueError(f"'{item}' is not an epoch number")
        return value

    def epochs(self) -> List[int]:
        return sorted({int(item) for item in self.render_epochs.split(",") if item.strip()})


class FetchConfig(Section):
    timeout: float = Field(gt=0)
    max_attempts: int = Field(ge=1)
    retry_wait: float = Field(ge=0)


class GradCheckConfig(Section):
    side: int = Field(ge=5, le=16)
    layers: int = Field(ge=1)
    hop_pitches: float = Field(gt=0)
    step: float = Field(gt=0)
    tolerance: float = Field(gt=0)
    abs_floor: float = Field(ge=0)


def _ini_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunConfig(Section):
    geometry: GeometryConfig
    network: NetworkConfig
    training: TrainingConfig
    data: DataConfig
    output: OutputConfig
    fetch: FetchConfig
    gradcheck: GradCheckConfig

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.training.epochs,
            batch_size=self.training.batch_size,
            learning_rate=self.training.learning_rate,
            adam_beta1=self.training.adam_beta1,
            adam_beta2=self.training.adam_beta2,
            adam_eps=self.training.adam_eps,
            master_seed=self.training.seed,
            ablation_mode=self.network.mode,
            dataset=self.data.dataset,
            layer_count=self.network.layers,
            side=self.network.side,
        )

    def propagation_geometry(self, n: int = None) -> PropagationGeometry:
        return PropagationGeometry(
            n=n or self.network.side,
            pitch=self.geometry.pitch,
            wavelength=self.geometry.wavelength,
            spacing=self.geometry.spacing,
        )

    def to_ini(self) -> str:
        """Resolved configuration in the same INI layout it was read from."""
        parser = configparser.ConfigParser(interpolation=None)
        for section, values in self.model_dump().items():
            parser[section] = {key: _ini_value(value) for key, value in values.items()}
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()


def default_settings() -> Dict[str, Dict]:
    return {section: copy.deepcopy(CONFIG[section]) for section in RunConfig.model_fields}


def load_run_config(path: str = None, overrides: Dict[str, Dict] = None) -> RunConfig:
    """CONFIG defaults, then the INI file, then flag overrides (flag wins)."""
    settings = default_settings()
    if path:
        if not os.path.isfile(path):
            raise ConfigError(f"Config file {path} does not exist")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as f:
                parser.read_file(f)
        except configparser.Error as e:
            raise ConfigError(f"Cannot parse {path}: {e}") from e
        if parser.defaults():
            raise ConfigError(f"{path}: keys outside a section are not allowed")
        for section in parser.sections():
            if section not in settings:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, value in parser.items(section):
                if key not in settings[section]:
                    raise ConfigError(f"{path}: unknown key '{key}' in [{section}]")
                settings[section][key] = value

    for section, values in (overrides or {}).items():
        for key, value in values.items():
            if value is not None:
                settings[section][key] = value

    try:
        return RunConfig.model_validate(settings)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e
