"""Core data models for products, model outputs and predictions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from core.tensor import Tensor

InputMode = Literal["features", "images"]

# Marker in Predictions index arrays for products a pipeline could not route
UNCOVERED = -1


@dataclass(frozen=True)
class ProductRecord:
    """One labelled product.

    Attributes:
        product_id: Unique identifier within a manifest
        category_id: Category label
        sub_category_id: Sub-category label (its parent is category_id)
        attribute_ids: Annotated attributes, possibly empty
        hidden_attribute_ids: Every attribute actually present, when known.
            Annotations are always a subset of it.
        payload_ref: Where the input lives, ``<sidecar file>:<row>``

    Example:
        >>> ProductRecord(
        ...     product_id="p0001",
        ...     category_id="dress",
        ...     sub_category_id="day-dress",
        ...     attribute_ids=frozenset({"floral"}),
        ...     hidden_attribute_ids=frozenset({"floral", "midi"}),
        ...     payload_ref="features.f64:0",
        ... )
    """
    product_id: str
    category_id: str
    sub_category_id: str
    attribute_ids: frozenset[str] = frozenset()
    hidden_attribute_ids: frozenset[str] | None = None
    payload_ref: str = ""

    @property
    def truth_attribute_ids(self) -> frozenset[str]:
        """Hidden truth when the record carries it, annotations otherwise."""
        if self.hidden_attribute_ids is None:
            return self.attribute_ids
        return self.hidden_attribute_ids


@dataclass
class DatasetManifest:
    """Product records plus their decoded inputs.

    ``inputs[i]`` is the payload of ``records[i]``: a feature vector of
    shape (dim,) in feature mode, an (H, W, 3) uint8 raster in image mode.
    """
    records: list[ProductRecord]
    inputs: np.ndarray
    input_mode: InputMode = "features"

    def __post_init__(self):
        if len(self.records) != len(self.inputs):
            raise ValueError(
                f"Manifest has {len(self.records)} records but {len(self.inputs)} input rows"
            )

    def __len__(self) -> int:
        return len(self.records)

    @property
    def product_ids(self) -> list[str]:
        return [r.product_id for r in self.records]

    @property
    def has_hidden_truth(self) -> bool:
        return bool(self.records) and all(r.hidden_attribute_ids is not None for r in self.records)

    def subset(self, indices) -> DatasetManifest:
        indices = np.asarray(indices, dtype=np.int64)
        return DatasetManifest(
            records=[self.records[i] for i in indices],
            inputs=self.inputs[indices],
            input_mode=self.input_mode,
        )


@dataclass
class LevelLatents:
    """Per-level latent batch (batch × d each) inside the unified model."""
    cat: Tensor
    sub: Tensor
    attr: Tensor


@dataclass
class LevelLogits:
    """Raw per-level outputs: softmax for cat/sub, sigmoid for attr."""
    cat: Tensor
    sub: Tensor
    attr: Tensor


@dataclass
class ForwardOutput:
    logits: LevelLogits
    cat_probs: Tensor
    sub_probs: Tensor
    attr_scores: Tensor


@dataclass
class Predictions:
    """Per-product predictions as tree indices.

    Attributes:
        category: Predicted category index per product
        sub_category: Predicted sub-category index, UNCOVERED where no
            specialist was available
        category_confidence: Probability of the predicted category
        sub_category_confidence: Probability of the predicted sub-category
            (0 where uncovered)
        attribute_scores: (n, n_attributes) sigmoid scores; 0 where the
            attribute was not scored
        covered: Whether downstream levels were predicted for the product
    """
    category: np.ndarray
    sub_category: np.ndarray
    category_confidence: np.ndarray
    sub_category_confidence: np.ndarray
    attribute_scores: np.ndarray
    covered: np.ndarray | None = None

    def __post_init__(self):
        if self.covered is None:
            self.covered = np.ones(len(self.category), dtype=bool)

    def __len__(self) -> int:
        return len(self.category)

    @property
    def coverage(self) -> float:
        return float(self.covered.mean()) if len(self) else 0.0

    def subset(self, indices) -> Predictions:
        indices = np.asarray(indices, dtype=np.int64)
        return Predictions(
            category=self.category[indices],
            sub_category=self.sub_category[indices],
            category_confidence=self.category_confidence[indices],
            sub_category_confidence=self.sub_category_confidence[indices],
            attribute_scores=self.attribute_scores[indices],
            covered=self.covered[indices],
        )

    @classmethod
    def concatenate(cls, parts: list[Predictions]) -> Predictions:
        return cls(
            category=np.concatenate([p.category for p in parts]),
            sub_category=np.concatenate([p.sub_category for p in parts]),
            category_confidence=np.concatenate([p.category_confidence for p in parts]),
            sub_category_confidence=np.concatenate([p.sub_category_confidence for p in parts]),
            attribute_scores=np.concatenate([p.attribute_scores for p in parts]),
            covered=np.concatenate([p.covered for p in parts]),
        )
