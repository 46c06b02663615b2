"""Unified hierarchical model and its two ablation variants.

Data flow of the final model::

    inputs → encoder → three per-level projections (dense + ReLU)
           → message propagation block
               down: category latent feeds sub-category and attribute levels
               up:   sub-category and attribute latents feed the category level
               merge: per level, Dropout(ReLU(Dense(down + up)))
           → per-level output MLP (dense + ReLU → dense)
           → softmax (category, sub-category) / sigmoid (attributes)

Every level keeps an intra-level dense layer in both directions, so the block
holds 6 intra-level, 4 inter-level and 3 merge dense layers. There is no edge
between the sub-category and attribute levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from core.architectures import build_variant, register_architecture
from core.architectures.base import LEVEL_KEYS, Architecture, ArchitectureError, UnifiedModelConfig
from core.architectures.encoder import build_encoder, encoder_stage_counts
from core.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from core.models import ForwardOutput, LevelLatents, LevelLogits
from core.nn import DenseLayer, Mode, Parameter, dropout
from core.tensor import Tensor, add, relu, sigmoid, softmax, sum_of

# Trainable parameters of a full ResNet-50 without its classifier, used only
# when reporting the parameter count of the full-scale configuration.
RESNET50_PARAMETERS = 23_587_712

# Dense layers per level in the no_mp variant; 5 + 4 + 4 = 13 matches the block.
CHAIN_DEPTHS = {"cat": 5, "sub": 4, "attr": 4}


@register_architecture
class UnifiedModel(Architecture):
    """The final unified model with the bidirectional propagation block."""

    variant = "final"

    def __init__(self, config: UnifiedModelConfig, rng: np.random.Generator):
        super().__init__(config)
        config.validate()
        d = config.hidden_dim
        self._build_encoder(rng)
        self.projections = {
            level: DenseLayer(f"project.{level}", config.encoder_dim, d, rng, config.l2_factor)
            for level in LEVEL_KEYS
        }
        self.block_layers: list[DenseLayer] = []
        self.down: dict[str, DenseLayer] | None = None
        self.up: dict[str, DenseLayer] | None = None
        self._build_block(rng)
        self.hidden = {level: DenseLayer(f"head.{level}.hidden", d, d, rng) for level in LEVEL_KEYS}
        self.classifiers = {
            level: DenseLayer(f"head.{level}.out", d, n, rng)
            for level, n in config.level_sizes().items()
        }

    @property
    def name(self) -> str:
        return "Final model"

    def _build_encoder(self, rng: np.random.Generator) -> None:
        self.encoder = build_encoder(self.config, rng)

    def _block_dense(self, name: str, rng: np.random.Generator) -> DenseLayer:
        d = self.config.hidden_dim
        layer = DenseLayer(name, d, d, rng, self.config.l2_factor)
        self.block_layers.append(layer)
        return layer

    def _build_block(self, rng: np.random.Generator) -> None:
        directions = self.config.directions
        if directions in ("both", "down"):
            self.down = {
                key: self._block_dense(f"down.{key}", rng)
                for key in ("cat", "sub", "attr", "cat_to_sub", "cat_to_attr")
            }
        if directions in ("both", "up"):
            self.up = {
                key: self._block_dense(f"up.{key}", rng)
                for key in ("cat", "sub", "attr", "sub_to_cat", "attr_to_cat")
            }
        self.merge = {level: self._block_dense(f"merge.{level}", rng) for level in LEVEL_KEYS}

    # -- stages ------------------------------------------------------------

    def encode(self, inputs: np.ndarray) -> LevelLatents:
        """Backbone features, one (shared) tensor per level."""
        features = self.encoder(inputs)
        return LevelLatents(features, features, features)

    def project_levels(self, features: Tensor | LevelLatents) -> LevelLatents:
        if isinstance(features, Tensor):
            features = LevelLatents(features, features, features)
        return LevelLatents(
            cat=relu(self.projections["cat"](features.cat)),
            sub=relu(self.projections["sub"](features.sub)),
            attr=relu(self.projections["attr"](features.attr)),
        )

    def message_pass_down(self, z: LevelLatents) -> LevelLatents:
        if self.down is None:
            raise ArchitectureError(f"{self.name} has no downward propagation")
        down = self.down
        return LevelLatents(
            cat=relu(down["cat"](z.cat)),
            sub=relu(add(down["sub"](z.sub), down["cat_to_sub"](z.cat))),
            attr=relu(add(down["attr"](z.attr), down["cat_to_attr"](z.cat))),
        )

    def message_pass_up(self, z: LevelLatents) -> LevelLatents:
        if self.up is None:
            raise ArchitectureError(f"{self.name} has no upward propagation")
        up = self.up
        return LevelLatents(
            cat=relu(sum_of([up["cat"](z.cat), up["sub_to_cat"](z.sub), up["attr_to_cat"](z.attr)])),
            sub=relu(up["sub"](z.sub)),
            attr=relu(up["attr"](z.attr)),
        )

    def merge_directions(
        self,
        down: LevelLatents | None,
        up: LevelLatents | None,
        mode: Mode = "eval",
        rng: np.random.Generator | None = None,
    ) -> LevelLatents:
        merged = {}
        for level in LEVEL_KEYS:
            parts = [getattr(latents, level) for latents in (down, up) if latents is not None]
            y = relu(self.merge[level](sum_of(parts)))
            merged[level] = dropout(y, self.config.dropout, mode, rng)
        return LevelLatents(**merged)

    def propagate(self, z: LevelLatents, mode: Mode, rng: np.random.Generator | None) -> LevelLatents:
        down = self.message_pass_down(z) if self.down is not None else None
        up = self.message_pass_up(z) if self.up is not None else None
        return self.merge_directions(down, up, mode, rng)

    def output_heads(self, y: LevelLatents) -> LevelLogits:
        logits = {
            level: self.classifiers[level](relu(self.hidden[level](getattr(y, level))))
            for level in LEVEL_KEYS
        }
        return LevelLogits(**logits)

    def forward(
        self,
        inputs: np.ndarray,
        mode: Mode = "eval",
        rng: np.random.Generator | None = None,
    ) -> ForwardOutput:
        z = self.project_levels(self.encode(inputs))
        logits = self.output_heads(self.propagate(z, mode, rng))
        return ForwardOutput(
            logits=logits,
            cat_probs=softmax(logits.cat),
            sub_probs=softmax(logits.sub),
            attr_scores=sigmoid(logits.attr),
        )

    # -- bookkeeping -------------------------------------------------------

    def encoder_parameters(self) -> list[Parameter]:
        return self.encoder.parameters()

    def dense_layers(self) -> list[DenseLayer]:
        return [
            *self.projections.values(),
            *self.block_layers,
            *self.hidden.values(),
            *self.classifiers.values(),
        ]

    def parameters(self) -> list[Parameter]:
        return [*self.encoder_parameters(), *(p for layer in self.dense_layers() for p in layer.parameters())]

    def regularized_layers(self) -> list[DenseLayer]:
        return [*self.projections.values(), *self.block_layers]


@register_architecture
class NoMessagePassingModel(UnifiedModel):
    """Ablation: the block is replaced by independent per-level dense chains.

    Chain depths 5/4/4 keep the dense-layer count and parameter total of the
    final model's block.
    """

    variant = "no_mp"

    @property
    def name(self) -> str:
        return "No message passing"

    def _build_block(self, rng: np.random.Generator) -> None:
        self.chains = {
            level: [self._block_dense(f"chain.{level}.{i}", rng) for i in range(depth)]
            for level, depth in CHAIN_DEPTHS.items()
        }

    def propagate(self, z: LevelLatents, mode: Mode, rng: np.random.Generator | None) -> LevelLatents:
        out = {}
        for level, chain in self.chains.items():
            x = getattr(z, level)
            for layer in chain:
                x = relu(layer(x))
            out[level] = dropout(x, self.config.dropout, mode, rng)
        return LevelLatents(**out)


@register_architecture
class IndependentBackboneModel(UnifiedModel):
    """Ablation: the last encoder stage is trained separately for each level."""

    variant = "backbone_indep"

    @property
    def name(self) -> str:
        return "Independent backbone"

    def _build_encoder(self, rng: np.random.Generator) -> None:
        super()._build_encoder(rng)
        if not self.encoder.stages:
            raise ArchitectureError("backbone_indep needs an encoder with at least one stage")
        last = len(self.encoder.stages) - 1
        self.level_stages = {
            level: self.encoder.new_stage(last, f"encoder.{level}.stage{last}", rng)
            for level in LEVEL_KEYS
        }
        # the shared trunk keeps every stage but the last
        self.encoder.stages = self.encoder.stages[:last]

    def encode(self, inputs: np.ndarray) -> LevelLatents:
        encoder = self.encoder
        trunk = encoder.run(encoder.prepare(inputs), encoder.stages)
        return LevelLatents(**{
            level: encoder.finish(encoder.apply_stage(stage, trunk))
            for level, stage in self.level_stages.items()
        })

    def encoder_parameters(self) -> list[Parameter]:
        return [
            *self.encoder.parameters(),
            *(p for stage in self.level_stages.values() for p in stage.parameters()),
        ]


@dataclass
class ParameterCount:
    """Closed-form trainable parameter counts.

    Attributes:
        stages: Ordered per-stage counts of the head (everything after the
            encoder)
        encoder: Parameters of the trainable encoder
    """
    stages: dict[str, int] = field(default_factory=dict)
    encoder: int = 0

    @property
    def head(self) -> int:
        return sum(self.stages.values())

    @property
    def total(self) -> int:
        return self.encoder + self.head

    def with_backbone(self, backbone_parameters: int = RESNET50_PARAMETERS) -> int:
        """Head plus an external backbone of the given size."""
        return self.head + backbone_parameters

    def to_dict(self) -> dict[str, int]:
        return {**self.stages, "encoder": self.encoder, "head": self.head, "total": self.total}


def count_parameters(config: UnifiedModelConfig) -> ParameterCount:
    """Count parameters without building the model."""
    d = config.hidden_dim
    square = DenseLayer.count(d, d)

    encoder_stages = encoder_stage_counts(config)
    encoder = sum(encoder_stages)
    if config.variant == "backbone_indep":
        if not encoder_stages:
            raise ArchitectureError("backbone_indep needs an encoder with at least one stage")
        encoder += 2 * encoder_stages[-1]
    elif config.variant not in ("final", "no_mp"):
        raise ArchitectureError(f"Cannot count parameters of variant {config.variant!r}")

    stages = {"projections": 3 * DenseLayer.count(config.encoder_dim, d)}
    if config.variant == "no_mp":
        stages["dense_chains"] = sum(CHAIN_DEPTHS.values()) * square
    else:
        if config.directions in ("both", "down"):
            stages["propagate_down"] = 5 * square
        if config.directions in ("both", "up"):
            stages["propagate_up"] = 5 * square
        stages["merge"] = 3 * square
    stages["hidden"] = 3 * square
    stages["classifiers"] = sum(DenseLayer.count(d, n) for n in config.level_sizes().values())
    return ParameterCount(stages=stages, encoder=encoder)


def save_model(path: str | Path, model: UnifiedModel, extra: dict[str, str] | None = None) -> None:
    config = {"kind": "unified", **model.config.to_config(), **(extra or {})}
    save_checkpoint(path, model.parameters(), config)


def load_model(path: str | Path) -> tuple[UnifiedModel, dict[str, str]]:
    """Rebuild a unified model from a checkpoint; returns (model, stored config)."""
    checkpoint = load_checkpoint(path)
    if checkpoint.config.get("kind") != "unified":
        raise CheckpointError(f"{path} is not a unified model checkpoint")
    config = UnifiedModelConfig.from_config(checkpoint.config)
    model = build_variant(config, np.random.default_rng(0))
    checkpoint.load_into(model.parameters())
    return model, checkpoint.config
