"""Backbones mapping raw inputs to a feature vector per product.

Feature mode feeds precomputed vectors through zero or more dense+ReLU
stages. Image mode runs a small convolutional encoder over H×W×3 rasters:
three stages of 3×3 convolution, ReLU and 2×2 average pooling.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from core.architectures.base import IMAGE_CHANNELS, ArchitectureError, UnifiedModelConfig
from core.nn import Conv2dLayer, DenseLayer, Parameter, conv_block, dense_forward
from core.tensor import ShapeError, Tensor, relu, reshape


class Encoder(ABC):
    """A stack of stages, run in order, followed by a final reshaping step."""

    def __init__(self, name: str):
        self.name = name
        self.stages: list = []

    @property
    @abstractmethod
    def output_dim(self) -> int:
        pass

    @abstractmethod
    def prepare(self, inputs: np.ndarray) -> Tensor:
        """Check and convert a raw input batch."""
        pass

    @abstractmethod
    def apply_stage(self, stage, x: Tensor) -> Tensor:
        pass

    @abstractmethod
    def new_stage(self, index: int, name: str, rng: np.random.Generator):
        """A freshly initialized stage shaped like stage ``index``."""
        pass

    def finish(self, x: Tensor) -> Tensor:
        return x

    def run(self, x: Tensor, stages) -> Tensor:
        for stage in stages:
            x = self.apply_stage(stage, x)
        return x

    def __call__(self, inputs: np.ndarray) -> Tensor:
        return self.finish(self.run(self.prepare(inputs), self.stages))

    def parameters(self) -> list[Parameter]:
        return [p for stage in self.stages for p in stage.parameters()]


class FeatureEncoder(Encoder):
    """Identity (no stages) or dense+ReLU stages of width ``width``."""

    def __init__(self, name: str, feature_dim: int, width: int, n_stages: int, rng: np.random.Generator):
        super().__init__(name)
        self.feature_dim = feature_dim
        self.width = width
        self.stages = [
            DenseLayer(f"{name}.stage{i}", feature_dim if i == 0 else width, width, rng)
            for i in range(n_stages)
        ]

    @property
    def output_dim(self) -> int:
        return self.width if self.stages else self.feature_dim

    def prepare(self, inputs: np.ndarray) -> Tensor:
        if inputs.ndim != 2 or inputs.shape[1] != self.feature_dim:
            raise ShapeError(f"expected feature batch of shape (batch, {self.feature_dim}), got {inputs.shape}")
        return Tensor(inputs)

    def apply_stage(self, stage: DenseLayer, x: Tensor) -> Tensor:
        return relu(dense_forward(stage, x))

    def new_stage(self, index: int, name: str, rng: np.random.Generator) -> DenseLayer:
        template = self.stages[index]
        return DenseLayer(name, template.n_in, template.n_out, rng)


class ImageEncoder(Encoder):
    """Three conv stages with channels (8, 16, 32); output is flattened."""

    def __init__(self, name: str, image_size: int, rng: np.random.Generator, channels=IMAGE_CHANNELS):
        super().__init__(name)
        self.image_size = image_size
        self.channels = tuple(channels)
        widths = (3, *self.channels)
        self.stages = [
            Conv2dLayer(f"{name}.stage{i}", widths[i], widths[i + 1], rng)
            for i in range(len(self.channels))
        ]

    @property
    def output_dim(self) -> int:
        side = self.image_size >> len(self.channels)
        return self.channels[-1] * side * side

    def prepare(self, inputs: np.ndarray) -> Tensor:
        expected = (self.image_size, self.image_size, 3)
        if inputs.ndim != 4 or inputs.shape[1:] != expected:
            raise ShapeError(f"expected image batch of shape (batch, {', '.join(map(str, expected))}), got {inputs.shape}")
        # NHWC uint8 -> NCHW in [0, 1]
        return Tensor(np.transpose(inputs.astype(np.float64) / 255.0, (0, 3, 1, 2)))

    def apply_stage(self, stage: Conv2dLayer, x: Tensor) -> Tensor:
        return conv_block(stage, x)

    def new_stage(self, index: int, name: str, rng: np.random.Generator) -> Conv2dLayer:
        template = self.stages[index]
        return Conv2dLayer(name, template.channels_in, template.channels_out, rng)

    def finish(self, x: Tensor) -> Tensor:
        return reshape(x, (x.shape[0], -1))


def build_encoder(config: UnifiedModelConfig, rng: np.random.Generator, name: str = "encoder") -> Encoder:
    if config.input_mode == "images":
        return ImageEncoder(name, config.image_size, rng)
    if config.input_mode == "features":
        return FeatureEncoder(name, config.feature_dim, config.backbone_dim, config.encoder_stages, rng)
    raise ArchitectureError(f"Unknown input mode {config.input_mode!r}")


def encoder_stage_counts(config: UnifiedModelConfig) -> list[int]:
    """Parameter count of each encoder stage, in order."""
    if config.input_mode == "images":
        widths = (3, *IMAGE_CHANNELS)
        return [Conv2dLayer.count(widths[i], widths[i + 1]) for i in range(len(IMAGE_CHANNELS))]
    counts = []
    for i in range(config.encoder_stages):
        n_in = config.feature_dim if i == 0 else config.backbone_dim
        counts.append(DenseLayer.count(n_in, config.backbone_dim))
    return counts
