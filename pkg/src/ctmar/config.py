"""Run configuration schema, presets, and validation.

Configs are plain JSON documents mirrored by frozen dataclasses. Parsing
is strict: unknown keys and wrong types are rejected with the full key
path, and the resolved document is echoed into every run directory so a
run can be reproduced from its own output.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .losses import PRESETS, LossWeights
from .training import TrainConfig

__all__ = [
    "ConfigError",
    "GeometrySection",
    "DatasetSection",
    "TrainingSection",
    "EvaluationSection",
    "RunConfig",
    "config_from_dict",
    "config_to_dict",
    "preset_config",
    "load_config",
    "train_config_from",
    "resolve_data_root",
    "DATA_ROOT_ENV",
]

DATA_ROOT_ENV = "CTMAR_DATA_ROOT"

_SPECTRA = ("polychromatic", "monochromatic")


class ConfigError(ValueError):
    """Schema violation; message carries the offending key path."""


@dataclass(frozen=True)
class GeometrySection:
    image_size: int = 64
    num_views: int = 160
    pixel_spacing: float = 1.0


@dataclass(frozen=True)
class DatasetSection:
    root: str | None = None
    train_artifact: int = 200
    train_clean: int = 100
    test_cases: int = 50
    test_clean: int = 25
    incident_photons: float = 1.0e6
    spectrum: str = "polychromatic"


@dataclass(frozen=True)
class TrainingSection:
    preset: str = "synthetic"
    epochs: int = 50
    learning_rate: float = 2.0e-4
    generator_depth: int = 3
    generator_base: int = 16
    use_attention: bool = True
    attention_reduction: int = 8
    discriminator_base: int = 32
    discriminator_layers: int = 3


@dataclass(frozen=True)
class EvaluationSection:
    include_baselines: bool = True


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    intensity_window: tuple[float, float] = (0.0, 0.08)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)


def _coerce(value: Any, annotation: Any, path: str) -> Any:
    if annotation in (int, "int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected integer, got {value!r}")
        return value
    if annotation in (float, "float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected number, got {value!r}")
        return float(value)
    if annotation in (bool, "bool"):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected boolean, got {value!r}")
        return value
    if annotation in (str, "str"):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected string, got {value!r}")
        return value
    if annotation in ("str | None", "Optional[str]"):
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{path}: expected string or null, got {value!r}")
        return value
    if annotation in ("tuple[float, float]",):
        if (
            not isinstance(value, (list, tuple))
            or len(value) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
        ):
            raise ConfigError(f"{path}: expected a pair of numbers, got {value!r}")
        return (float(value[0]), float(value[1]))
    raise ConfigError(f"{path}: unsupported annotation {annotation!r}")


def _build_section(cls: type, data: Any, path: str) -> Any:
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {data!r}")
    spec = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in spec:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown config key: {where}")
    kwargs = {}
    for name, fld in spec.items():
        if name not in data:
            continue
        where = f"{path}.{name}" if path else name
        ann = fld.type
        if isinstance(ann, type) and dataclasses.is_dataclass(ann):
            kwargs[name] = _build_section(ann, data[name], where)
        elif ann in ("GeometrySection", "DatasetSection", "TrainingSection", "EvaluationSection"):
            kwargs[name] = _build_section(globals()[ann], data[name], where)
        else:
            kwargs[name] = _coerce(data[name], ann, where)
    return cls(**kwargs)


def _validate(config: RunConfig) -> RunConfig:
    lo, hi = config.intensity_window
    if hi <= lo:
        raise ConfigError("intensity_window: upper bound must exceed lower bound")
    if config.geometry.image_size < 8:
        raise ConfigError("geometry.image_size: must be at least 8")
    if config.geometry.num_views < 1:
        raise ConfigError("geometry.num_views: must be positive")
    if config.dataset.spectrum not in _SPECTRA:
        raise ConfigError(
            f"dataset.spectrum: expected one of {list(_SPECTRA)}, got {config.dataset.spectrum!r}"
        )
    if config.training.preset not in PRESETS:
        raise ConfigError(
            f"training.preset: expected one of {sorted(PRESETS)}, got {config.training.preset!r}"
        )
    if config.training.epochs < 1:
        raise ConfigError("training.epochs: must be positive")
    if config.training.learning_rate <= 0:
        raise ConfigError("training.learning_rate: must be positive")
    size = config.geometry.image_size
    if size % (2**config.training.generator_depth) != 0:
        raise ConfigError(
            "training.generator_depth: image size "
            f"{size} is not divisible by 2^{config.training.generator_depth}"
        )
    if (
        config.training.use_attention
        and config.training.generator_base % config.training.attention_reduction != 0
    ):
        raise ConfigError(
            "training.attention_reduction: must divide generator_base "
            f"({config.training.generator_base} % {config.training.attention_reduction} != 0)"
        )
    return config


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    return _validate(_build_section(RunConfig, data, ""))


def config_to_dict(config: RunConfig) -> dict[str, Any]:
    out = dataclasses.asdict(config)
    out["intensity_window"] = list(config.intensity_window)
    return out


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def preset_config(name: str) -> RunConfig:
    """Named hyperparameter regimes.

    ``real`` and ``synthetic`` carry the two published loss-weight settings
    at nominal scale; ``toy`` is the desk-scale regime used by the
    acceptance run (64 px, 200+100 training images, depth-3 generator).
    """
    if name == "toy":
        return RunConfig()
    if name in ("real", "synthetic"):
        return RunConfig(
            geometry=GeometrySection(image_size=128, num_views=360),
            dataset=DatasetSection(
                train_artifact=500, train_clean=300, test_cases=50, test_clean=50
            ),
            training=TrainingSection(
                preset=name,
                epochs=200,
                generator_depth=4,
                generator_base=32,
                discriminator_base=64,
                discriminator_layers=4,
            ),
        )
    raise ConfigError(f"preset: expected one of ['real', 'synthetic', 'toy'], got {name!r}")


def load_config(
    config_path: str | Path | None = None,
    preset: str | None = None,
    seed: int | None = None,
) -> RunConfig:
    """Resolve preset defaults, JSON overrides, and a seed override, in order."""
    base = config_to_dict(preset_config(preset) if preset else RunConfig())
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            overrides = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(overrides, dict):
            raise ConfigError(f"config file {path} must contain a JSON object")
        base = _deep_merge(base, overrides)
    if seed is not None:
        base["seed"] = seed
    return config_from_dict(base)


def train_config_from(config: RunConfig) -> TrainConfig:
    t = config.training
    return TrainConfig(
        preset=t.preset,
        epochs=t.epochs,
        learning_rate=t.learning_rate,
        generator_depth=t.generator_depth,
        generator_base=t.generator_base,
        use_attention=t.use_attention,
        attention_reduction=t.attention_reduction,
        discriminator_base=t.discriminator_base,
        discriminator_layers=t.discriminator_layers,
        intensity_window=config.intensity_window,
        seed=config.seed,
    )


def loss_weights_from(config: RunConfig) -> LossWeights:
    return PRESETS[config.training.preset]


def resolve_data_root(config: RunConfig) -> Path:
    """Dataset location: explicit config value, else the environment default."""
    if config.dataset.root:
        return Path(config.dataset.root)
    env = os.environ.get(DATA_ROOT_ENV)
    if env:
        return Path(env)
    raise ConfigError(
        f"dataset.root: not set and {DATA_ROOT_ENV} is not defined; "
        "point it at a directory produced by the synth subcommand"
    )
