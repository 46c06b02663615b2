"""Inverse-frequency weighted losses for the three predicted levels."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np

from core.models import ForwardOutput
from core.tensor import ShapeError, Tensor, add_constant, log, multiply, scale, sum_all, sum_of

logger = logging.getLogger(__name__)

AttributeWeighting = Literal["inverse_frequency", "positive_balance"]


class WeightError(ValueError):
    """Raised when class weights cannot be computed from the given frequencies."""
    pass


@dataclass
class ClassWeights:
    """Per-class positive weights for each predicted level."""
    category: np.ndarray
    sub_category: np.ndarray
    attribute: np.ndarray


@dataclass
class LevelTargets:
    """Training targets for a batch.

    Attributes:
        category: (batch,) category indices
        sub_category: (batch,) sub-category indices
        attributes: (batch, n_attributes) 0/1 annotation matrix
    """
    category: np.ndarray
    sub_category: np.ndarray
    attributes: np.ndarray

    def __len__(self) -> int:
        return len(self.category)

    def subset(self, indices) -> LevelTargets:
        return LevelTargets(self.category[indices], self.sub_category[indices], self.attributes[indices])


@dataclass
class LossOptions:
    """Choices the loss definition leaves open.

    Attributes:
        attribute_weighting: "inverse_frequency" normalizes 1/f to mean 1 like
            the multi-class levels; "positive_balance" uses (1 - f) / f so
            positives and negatives of each label carry equal total weight
        bce_negative_weighting: Also weight the negative BCE term
        level_weights: Multipliers of the category, sub-category and
            attribute losses in the total
    """
    attribute_weighting: AttributeWeighting = "inverse_frequency"
    bce_negative_weighting: bool = False
    level_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)


def class_weights(frequencies, multiclass: bool = True) -> np.ndarray:
    """Inverse-frequency weights normalized to mean 1.

    ``w_c = (1 / f_c) / mean_j(1 / f_j)``

    Raises:
        WeightError: If a frequency is not positive, or multi-class
            frequencies do not sum to 1.
    """
    f = np.asarray(frequencies, dtype=np.float64)
    if f.ndim != 1 or f.size == 0:
        raise WeightError(f"Expected a non-empty vector of frequencies, got shape {f.shape}")
    bad = np.flatnonzero(~(np.isfinite(f) & (f > 0)))
    if bad.size:
        raise WeightError(
            f"Class {int(bad[0])} has frequency {f[bad[0]]}; drop the class or smooth its count"
        )
    if multiclass and abs(f.sum() - 1.0) > 1e-9:
        raise WeightError(f"Multi-class frequencies must sum to 1, got {f.sum()}")
    inverse = 1.0 / f
    return inverse / inverse.mean()


def positive_balance_weights(frequencies) -> np.ndarray:
    """Per-label positive weights (1 - f) / f for multi-label levels."""
    f = np.asarray(frequencies, dtype=np.float64)
    bad = np.flatnonzero(~((f > 0) & (f < 1)))
    if bad.size:
        raise WeightError(f"Label {int(bad[0])} has positive rate {f[bad[0]]}; it must be in (0, 1)")
    return (1.0 - f) / f


def smoothed_frequencies(counts, n_samples: int, multiclass: bool = True) -> np.ndarray:
    """Laplace-smoothed frequencies: (c + 1) / (N + C) or, per label, (c + 1) / (N + 2)."""
    counts = np.asarray(counts, dtype=np.float64)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        logger.warning("%d of %d classes have no training examples; smoothing their counts", missing.size, counts.size)
    if multiclass:
        return (counts + 1.0) / (n_samples + counts.size)
    return (counts + 1.0) / (n_samples + 2.0)


def weights_from_targets(
    targets: LevelTargets,
    sizes: tuple[int, int, int],
    options: LossOptions | None = None,
) -> ClassWeights:
    """Class weights from the label counts of a training set."""
    options = options or LossOptions()
    n = len(targets)
    n_categories, n_sub_categories, _ = sizes
    category = class_weights(
        smoothed_frequencies(np.bincount(targets.category, minlength=n_categories), n)
    )
    sub_category = class_weights(
        smoothed_frequencies(np.bincount(targets.sub_category, minlength=n_sub_categories), n)
    )
    attribute_freq = smoothed_frequencies(targets.attributes.sum(axis=0), n, multiclass=False)
    if options.attribute_weighting == "positive_balance":
        attribute = positive_balance_weights(attribute_freq)
    elif options.attribute_weighting == "inverse_frequency":
        attribute = class_weights(attribute_freq, multiclass=False)
    else:
        raise WeightError(f"Unknown attribute weighting {options.attribute_weighting!r}")
    return ClassWeights(category, sub_category, attribute)


def weighted_ce(probs: Tensor, targets: np.ndarray, weights: np.ndarray) -> Tensor:
    """Batch mean of ``-w[t] · log(max(p[t], 1e-12))``."""
    targets = np.asarray(targets, dtype=np.int64)
    batch, n_classes = probs.shape
    if targets.shape != (batch,) or len(weights) != n_classes:
        raise ShapeError(
            f"weighted_ce: probs {probs.shape}, targets {targets.shape}, weights {np.shape(weights)}"
        )
    coefficients = np.zeros(probs.shape)
    coefficients[np.arange(batch), targets] = np.asarray(weights)[targets] / batch
    return scale(sum_all(multiply(log(probs), coefficients)), -1.0)


def weighted_bce(
    scores: Tensor,
    targets: np.ndarray,
    weights: np.ndarray,
    negative_weighting: bool = False,
) -> Tensor:
    """Mean over batch and labels of ``-[w·t·log s + (1 - t)·log(1 - s)]``.

    With ``negative_weighting`` the negative term is weighted by ``w`` too.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != scores.shape or len(weights) != scores.shape[-1]:
        raise ShapeError(
            f"weighted_bce: scores {scores.shape}, targets {targets.shape}, weights {np.shape(weights)}"
        )
    weights = np.asarray(weights, dtype=np.float64)
    positive = targets * weights / targets.size
    negative = (1.0 - targets) / targets.size
    if negative_weighting:
        negative = negative * weights
    complement = add_constant(scale(scores, -1.0), 1.0)
    return scale(
        sum_of([sum_all(multiply(log(scores), positive)), sum_all(multiply(log(complement), negative))]),
        -1.0,
    )


def total_loss(
    l_cat: Tensor,
    l_sub: Tensor,
    l_attr: Tensor,
    l2: Tensor,
    level_weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> Tensor:
    terms = [scale(loss, w) for loss, w in zip((l_cat, l_sub, l_attr), level_weights)]
    return sum_of([*terms, l2])


def model_loss(
    output: ForwardOutput,
    targets: LevelTargets,
    weights: ClassWeights,
    l2: Tensor,
    options: LossOptions | None = None,
) -> tuple[Tensor, dict[str, float]]:
    """Total training loss of a unified model plus its parts as floats."""
    options = options or LossOptions()
    l_cat = weighted_ce(output.cat_probs, targets.category, weights.category)
    l_sub = weighted_ce(output.sub_probs, targets.sub_category, weights.sub_category)
    l_attr = weighted_bce(
        output.attr_scores, targets.attributes, weights.attribute, options.bce_negative_weighting
    )
    total = total_loss(l_cat, l_sub, l_attr, l2, options.level_weights)
    parts = {
        "category": l_cat.item(),
        "sub_category": l_sub.item(),
        "attribute": l_attr.item(),
        "l2": l2.item(),
    }
    return total, parts
