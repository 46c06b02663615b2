"""Run configuration: one flat dataclass, a key = value file, and overrides.

Example file::

    # small image run
    input_mode = images
    epochs = 3
    hidden_dim = 64
    level_weights = 1, 1, 0.5
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from core.architectures.base import UnifiedModelConfig
from core.generate import GeneratorConfig
from core.losses import LossOptions
from core.nn import DEFAULT_DROPOUT, DEFAULT_L2_FACTOR
from core.taxonomy import CategoryTree
from core.train import TrainOptions

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


class ConfigError(ValueError):
    """Raised for unknown keys or values that do not parse."""
    pass


@dataclass
class RunConfig:
    """Every setting of a command run; config-file keys are these field names."""
    command: str = ""
    # paths
    data_dir: str = "data"
    tree: str = "data/tree.tsv"
    manifest: str = "data/manifest.tsv"
    checkpoint: str = "model.ckpt"
    pipeline: str = "pipeline"
    report: str = "report.json"
    audit_report: str = "audit.json"
    compare: str = ""
    inputs: str = ""
    # model
    variant: str = "final"
    hidden_dim: int = 1024
    backbone_dim: int | None = None
    encoder_stages: int = 0
    directions: str = "both"
    dropout: float = DEFAULT_DROPOUT
    l2_factor: float = DEFAULT_L2_FACTOR
    # training
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 10
    seed: int = 7
    train_fraction: float = 0.75
    augment_probability: float = 0.5
    attribute_weighting: str = "inverse_frequency"
    bce_negative_weighting: bool = False
    level_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    # evaluation
    threshold: float = 0.75
    split: str = "test"
    oracle_category: bool = False
    slices: str = ""
    full_scale: bool = False
    # synthetic data
    products: int = 10_000
    genders: int = 1
    families: int = 2
    categories: int = 8
    sub_categories: int = 20
    attributes: int = 15
    imbalance: float = 1.0
    attribute_rate: float = 0.3
    max_attributes: int = 5
    missingness: float = 0.0
    noise: float = 0.5
    input_mode: str = "features"
    feature_dim: int = 64
    image_size: int = 32
    workers: int = 4

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            products=self.products,
            genders=self.genders,
            families=self.families,
            categories=self.categories,
            sub_categories=self.sub_categories,
            attributes=self.attributes,
            imbalance=self.imbalance,
            attribute_rate=self.attribute_rate,
            max_attributes=self.max_attributes,
            missingness=self.missingness,
            noise=self.noise,
            input_mode=self.input_mode,
            feature_dim=self.feature_dim,
            image_size=self.image_size,
            seed=self.seed,
            workers=self.workers,
        )

    def loss_options(self) -> LossOptions:
        return LossOptions(
            attribute_weighting=self.attribute_weighting,
            bce_negative_weighting=self.bce_negative_weighting,
            level_weights=self.level_weights,
        )

    def train_options(self) -> TrainOptions:
        return TrainOptions(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            augment_probability=self.augment_probability,
            seed=self.seed,
            workers=self.workers,
            loss=self.loss_options(),
        )

    def model_config(self, sizes: tuple[int, int, int], variant: str | None = None) -> UnifiedModelConfig:
        n_categories, n_sub_categories, n_attributes = sizes
        backbone_dim = self.backbone_dim
        if backbone_dim is None:
            backbone_dim = self.feature_dim
        return UnifiedModelConfig(
            backbone_dim=backbone_dim,
            hidden_dim=self.hidden_dim,
            n_categories=n_categories,
            n_sub_categories=n_sub_categories,
            n_attributes=n_attributes,
            variant=variant or self.variant,
            dropout=self.dropout,
            l2_factor=self.l2_factor,
            directions=self.directions,
            input_mode=self.input_mode,
            feature_dim=self.feature_dim,
            encoder_stages=self.encoder_stages,
            image_size=self.image_size,
        )

    def model_config_for(self, tree: CategoryTree, variant: str | None = None) -> UnifiedModelConfig:
        return self.model_config(
            (len(tree.categories), len(tree.sub_categories), len(tree.attributes)), variant
        )

    @property
    def slice_ids(self) -> list[str]:
        return _split_list(self.slices)

    @property
    def compare_paths(self) -> list[str]:
        return _split_list(self.compare)


def _split_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def parse_value(key: str, type_name: str, raw: str):
    """Parse ``raw`` for a field whose annotation is ``type_name``."""
    text = raw.strip()
    try:
        if type_name == "int":
            return int(text)
        if type_name == "float":
            return float(text)
        if type_name == "bool":
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if type_name == "int | None":
            return None if text.lower() in ("", "none") else int(text)
        if type_name.startswith("tuple[float"):
            values = tuple(float(part) for part in text.split(","))
            if len(values) != 3:
                raise ValueError(f"expected three comma-separated numbers, got {len(values)}")
            return values
    except ValueError as e:
        raise ConfigError(f"Invalid value for {key}: {e}") from e
    return text


_FIELD_TYPES = {f.name: str(f.type) for f in fields(RunConfig)}


def apply_overrides(config: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """A copy of ``config`` with string overrides parsed and applied."""
    changes = {}
    for key, raw in overrides.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"Unknown config key {key!r}")
        changes[key] = parse_value(key, _FIELD_TYPES[key], raw)
    return replace(config, **changes)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value', got {raw.strip()!r}")
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    return apply_overrides(base or RunConfig(), parse_config_text(text, str(path)))


def parse_assignment(text: str) -> tuple[str, str]:
    """Split a ``key=value`` command-line override."""
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"Expected key=value, got {text!r}")
    return key.strip(), value.strip()
