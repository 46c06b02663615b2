"""Abstract base class and shared configuration for trainable architectures."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, fields
from typing import Literal

import numpy as np

from core.models import ForwardOutput, InputMode
from core.nn import DEFAULT_DROPOUT, DEFAULT_L2_FACTOR, DenseLayer, Mode, Parameter

Directions = Literal["both", "down", "up"]

LEVEL_KEYS = ("cat", "sub", "attr")

IMAGE_CHANNELS = (8, 16, 32)


class ArchitectureError(ValueError):
    """Raised for an unknown variant or an inconsistent model configuration."""
    pass


@dataclass
class UnifiedModelConfig:
    """Shape and regularization of a unified model.

    Attributes:
        backbone_dim: Width of the encoder output. In feature mode with no
            encoder stages the encoder is the identity, so this must equal
            feature_dim.
        hidden_dim: Width d of every latent, block and hidden head layer
        n_categories, n_sub_categories, n_attributes: Output sizes, taken
            from the category tree
        variant: Registered architecture name
        dropout: Rate of the dropout after the block's final dense layers
        l2_factor: L2 factor of projections and block dense layers
        directions: Which propagation directions the block builds
        input_mode: "features" (vectors) or "images" (H×W×3 rasters)
        feature_dim: Input vector width in feature mode
        encoder_stages: Dense+ReLU stages of the feature encoder
        image_size: Side of square input rasters in image mode
    """
    backbone_dim: int = 2048
    hidden_dim: int = 1024
    n_categories: int = 64
    n_sub_categories: int = 95
    n_attributes: int = 75
    variant: str = "final"
    dropout: float = DEFAULT_DROPOUT
    l2_factor: float = DEFAULT_L2_FACTOR
    directions: Directions = "both"
    input_mode: InputMode = "features"
    feature_dim: int = 2048
    encoder_stages: int = 0
    image_size: int = 32

    @property
    def encoder_dim(self) -> int:
        """Width of the features the projections consume."""
        if self.input_mode == "images":
            side = self.image_size // 8
            return IMAGE_CHANNELS[-1] * side * side
        return self.backbone_dim

    def level_sizes(self) -> dict[str, int]:
        return {"cat": self.n_categories, "sub": self.n_sub_categories, "attr": self.n_attributes}

    def validate(self) -> None:
        for name in ("hidden_dim", "n_categories", "n_sub_categories", "n_attributes", "backbone_dim"):
            if getattr(self, name) < 1:
                raise ArchitectureError(f"{name} must be at least 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ArchitectureError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.l2_factor < 0:
            raise ArchitectureError(f"l2_factor must be nonnegative, got {self.l2_factor}")
        if self.directions not in ("both", "down", "up"):
            raise ArchitectureError(f"directions must be both, down or up, got {self.directions!r}")
        if self.input_mode == "features":
            if self.encoder_stages < 0:
                raise ArchitectureError("encoder_stages cannot be negative")
            if self.encoder_stages == 0 and self.feature_dim != self.backbone_dim:
                raise ArchitectureError(
                    f"With no encoder stages the backbone is the identity, so backbone_dim "
                    f"({self.backbone_dim}) must equal feature_dim ({self.feature_dim})"
                )
        elif self.input_mode == "images":
            if self.image_size < 8 or self.image_size % 8:
                raise ArchitectureError(f"image_size must be a positive multiple of 8, got {self.image_size}")
        else:
            raise ArchitectureError(f"Unknown input mode {self.input_mode!r}")

    def to_config(self) -> dict[str, str]:
        """Flat string form stored in checkpoint headers."""
        return {f"model.{key}": str(value) for key, value in asdict(self).items()}

    @classmethod
    def from_config(cls, config: dict[str, str]) -> UnifiedModelConfig:
        kwargs = {}
        for f in fields(cls):
            raw = config.get(f"model.{f.name}")
            if raw is None:
                continue
            if f.type == "int":
                kwargs[f.name] = int(raw)
            elif f.type == "float":
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = raw
        return cls(**kwargs)


class Architecture(ABC):
    """A trainable network mapping a batch of inputs to per-level outputs.

    Implementations are registered via the @register_architecture decorator
    in core/architectures/__init__.py and looked up by their ``variant``.
    """

    variant: str = ""

    def __init__(self, config: UnifiedModelConfig):
        self.config = config

    @property
    @abstractmethod
    def name(self) -> str:
        """Human-readable name used in report tables."""
        pass

    @abstractmethod
    def forward(
        self,
        inputs: np.ndarray,
        mode: Mode = "eval",
        rng: np.random.Generator | None = None,
    ) -> ForwardOutput:
        """Run a batch through the network.

        Args:
            inputs: (batch, feature_dim) floats or (batch, H, W, 3) uint8
            mode: "train" activates dropout, which then needs ``rng``
            rng: Generator for dropout masks

        Returns:
            ForwardOutput with logits and per-level probabilities
        """
        pass

    @abstractmethod
    def parameters(self) -> list[Parameter]:
        pass

    @abstractmethod
    def regularized_layers(self) -> list[DenseLayer]:
        """Dense layers whose weights enter the L2 penalty."""
        pass

    @property
    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())
