"""
Experiment configuration.

Configs are flat `key=value` text files with dotted sections:

    # config/train.cfg
    steps=2000
    optimizer.lr=1e-3
    model.arch=fully_invres
    model.levels=3
    loss.w_kl=0.1

Every key has a default, so an empty file is a valid config.
"""
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..autodiff import StoragePolicy
from ..data import SamplerConfig
from ..losses import LossWeights
from ..models import ModelSpec
from ..tensor import Precision

logger = logging.getLogger(__name__)

NULL_VALUES = {"", "none", "null"}


class ConfigError(ValueError):
    """Raised for unknown keys, malformed lines or invalid values."""


class AdamConfig(BaseModel):
    lr: float = Field(2e-4, gt=0.0, description="Learning rate")
    beta1: float = Field(0.9, ge=0.0, lt=1.0, description="First-moment decay")
    beta2: float = Field(0.999, ge=0.0, lt=1.0, description="Second-moment decay")
    eps: float = Field(1e-8, gt=0.0, description="Denominator epsilon")

    model_config = ConfigDict(extra="forbid")


class DataConfig(BaseModel):
    """Where training volumes come from."""
    path: Optional[Path] = Field(None, description="Dataset directory; synthetic data is generated when unset")
    preset: Optional[str] = Field(None, description="Synthetic preset (iseg, brats)")
    num_volumes: int = Field(4, ge=1, description="Generated volumes when no path is given")
    size: int = Field(32, ge=16, description="Generated volume extent")
    seed: int = Field(0, description="Generator seed")
    held_out_patches: int = Field(4, ge=0, description="Patches scored after training")

    model_config = ConfigDict(extra="forbid")


class TrainConfig(BaseModel):
    """A complete training run."""
    model: ModelSpec = Field(default_factory=ModelSpec)
    optimizer: AdamConfig = Field(default_factory=AdamConfig)
    loss: LossWeights = Field(default_factory=LossWeights)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    data: DataConfig = Field(default_factory=DataConfig)

    steps: int = Field(100, ge=1, description="Optimizer steps")
    batch_size: int = Field(1, ge=1, description="Patches per step")
    seed: int = Field(0, description="Run seed (parameter init and sampling)")
    precision: Precision = Field(Precision.F32, description="Tensor precision")
    storage_policy: StoragePolicy = Field(StoragePolicy.INVERTIBLE, description="Activation storage regime")
    checkpoint_every: int = Field(0, ge=0, description="Checkpoint cadence in steps (0: final only)")
    clip_grad_norm: Optional[float] = Field(None, gt=0.0, description="Global gradient norm limit")
    vae_only: bool = Field(False, description="Update only the VAE branch with L2 + KL")
    resume_from: Optional[Path] = Field(None, description="Checkpoint to start from")
    log_every: int = Field(10, ge=1, description="Step summary cadence")
    prefetch: bool = Field(True, description="Sample patches on a background thread")
    output_dir: Optional[Path] = Field(None, description="Checkpoints and reports")

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _check_consistency(self) -> "TrainConfig":
        if self.sampler.patch_size != self.model.patch_size:
            raise ValueError(
                f"sampler.patch_size {self.sampler.patch_size} differs from model.patch_size {self.model.patch_size}"
            )
        if self.vae_only and not self.model.vae:
            raise ValueError("vae_only requires model.vae=true")
        return self

    def resolved_spec(self) -> ModelSpec:
        """The model spec with the run's precision and seed applied."""
        return self.model.model_copy(update={"precision": self.precision, "seed": self.seed})


# ============================================
# key=value parsing
# ============================================

def _set_dotted(tree: Dict[str, Any], key: str, value: Any, line_no: int) -> None:
    parts = key.split(".")
    node = tree
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"line {line_no}: '{key}' nests under scalar key '{part}'")
        node = child
    if parts[-1] in node:
        raise ConfigError(f"line {line_no}: duplicate key '{key}'")
    node[parts[-1]] = value


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Any]:
    """Parse key=value lines into a nested dict of strings (None for null values)."""
    tree: Dict[str, Any] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected key=value, got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{line_no}: empty key")
        _set_dotted(tree, key, None if value.lower() in NULL_VALUES else value, line_no)
    return tree


def config_from_dict(tree: Dict[str, Any], source: str = "<config>") -> TrainConfig:
    try:
        return TrainConfig.model_validate(tree)
    except ValidationError as exc:
        raise ConfigError(f"Invalid config {source}:\n{exc}") from exc


def load_config(path: Union[str, Path], overrides: Optional[Iterable[str]] = None) -> TrainConfig:
    """
    Load a config file, applying `key=value` overrides on top.

    Raises:
        FileNotFoundError: If the file does not exist
        ConfigError: On malformed lines, unknown keys or invalid values
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if overrides:
        text = _merge_overrides(text, overrides)
    config = config_from_dict(parse_config_text(text, str(path)), str(path))
    logger.info(f"Loaded config {path}: {config.model.arch.value}, {config.steps} steps, {config.storage_policy.value}")
    return config


def _merge_overrides(text: str, overrides: Iterable[str]) -> str:
    overrides = list(overrides)
    overridden = {item.split("=", 1)[0].strip() for item in overrides}
    kept = [
        line for line in text.splitlines()
        if line.split("#", 1)[0].split("=", 1)[0].strip() not in overridden
    ]
    return "\n".join(kept + list(overrides))


def _flatten(prefix: str, value: Any, out: Dict[str, str]) -> None:
    if isinstance(value, dict):
        for key, item in value.items():
            _flatten(f"{prefix}.{key}" if prefix else key, item, out)
    elif isinstance(value, list):
        out[prefix] = ",".join(str(v) for v in value) if value else "none"
    else:
        out[prefix] = "none" if value is None else str(value).lower() if isinstance(value, bool) else str(value)


# Overridden by the top-level seed and precision in resolved_spec.
SHADOWED_MODEL_KEYS = {"precision", "seed"}


def dump_config(config: TrainConfig) -> str:
    """Serialize to key=value text; load_config reads it back to the same run."""
    flat: Dict[str, str] = {}
    _flatten("", config.model_dump(mode="json", exclude={"model": SHADOWED_MODEL_KEYS}), flat)
    return "\n".join(f"{key}={value}" for key, value in flat.items()) + "\n"
