"""Evaluation metrics and prediction audits.

Attribute inputs are dense matrices: ``scores`` is (n_products, n_labels)
and truth/prediction sets are boolean matrices of the same shape. Label id
is the column index, which is also the tie-break order everywhere.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from sklearn.metrics import precision_recall_fscore_support

from core.taxonomy import ATTRIBUTE, CATEGORY, CategoryTree

DEFAULT_THRESHOLD = 0.75
LOW_CONFIDENCE_FLOOR = 0.5


def accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    if y_true.size == 0:
        raise ValueError("accuracy needs at least one product")
    return float(np.mean(y_true == np.asarray(y_pred)))


def overall_prf(y_true, y_pred) -> tuple[float, float, float]:
    """Per-class precision, recall and F1 averaged with true-class support weights.

    Classes that only ever appear as predictions have zero support and so
    zero weight. The weighted F1 need not lie between OP and OR.
    """
    y_true = np.asarray(y_true)
    if y_true.size == 0:
        raise ValueError("overall_prf needs at least one product")
    precision, recall, f1, _ = precision_recall_fscore_support(
        y_true, np.asarray(y_pred), average="weighted", zero_division=0
    )
    return float(precision), float(recall), float(f1)


def top_k_sets(scores: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Boolean matrix marking each row's top-k labels (ties: lower label id first)."""
    n, n_labels = scores.shape
    labels = np.broadcast_to(np.arange(n_labels), scores.shape)
    chosen = np.zeros(scores.shape, dtype=bool)
    for i in range(n):
        order = np.lexsort((labels[i], -scores[i]))
        chosen[i, order[:k[i]]] = True
    return chosen


def at_k_per_product(scores: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-product P@k and R@k with k = |truth|, for products with k > 0.

    Returns (precision, recall, included) where ``included`` marks the rows
    the two arrays describe.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    k = truth.sum(axis=1)
    included = k > 0
    top = top_k_sets(scores[included], k[included])
    hits = (top & truth[included]).sum(axis=1)
    precision = hits / top.sum(axis=1)
    recall = hits / truth[included].sum(axis=1)
    return precision, recall, included


def at_k(scores: np.ndarray, truth: np.ndarray) -> tuple[float | None, float | None, float | None]:
    """Macro-averaged P@k, R@k, F1@k; None when no product has a true label."""
    precision, recall, included = at_k_per_product(scores, truth)
    if not included.any():
        return None, None, None
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(denom), where=denom > 0)
    return float(precision.mean()), float(recall.mean()), float(f1.mean())


def average_precision(scores: np.ndarray, truth: np.ndarray) -> float | None:
    """Micro AP over all (product, label) pairs; None without positives.

    Pairs are ranked by score descending, then label id ascending, then
    negatives before positives, so the value does not depend on product
    order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    n_positive = int(truth.sum())
    if n_positive == 0:
        return None
    labels = np.broadcast_to(np.arange(scores.shape[1]), scores.shape).ravel()
    positive = truth.ravel()
    order = np.lexsort((positive, labels, -scores.ravel()))
    ranked = positive[order]
    hits = np.cumsum(ranked)
    ranks = np.arange(1, ranked.size + 1)
    return float(np.sum(hits[ranked] / ranks[ranked]) / n_positive)


def threshold_predict(scores: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Labels whose score is strictly greater than ``threshold``."""
    if not 0.0 <= threshold < 1.0:
        raise ValueError(f"threshold must be in [0, 1), got {threshold}")
    return np.asarray(scores) > threshold


def mean_predicted_attributes(predicted: np.ndarray) -> float:
    predicted = np.asarray(predicted, dtype=bool)
    if predicted.size == 0 or len(predicted) == 0:
        return 0.0
    return float(predicted.sum(axis=1).mean())


def attribute_recall(predicted: np.ndarray, truth: np.ndarray) -> float | None:
    """Micro recall Σ|pred ∩ truth| / Σ|truth|."""
    truth = np.asarray(truth, dtype=bool)
    total = int(truth.sum())
    if total == 0:
        return None
    return float((np.asarray(predicted, dtype=bool) & truth).sum() / total)


def attribute_precision(predicted: np.ndarray, truth: np.ndarray) -> float | None:
    """Micro precision Σ|pred ∩ truth| / Σ|pred|."""
    predicted = np.asarray(predicted, dtype=bool)
    total = int(predicted.sum())
    if total == 0:
        return None
    return float((predicted & np.asarray(truth, dtype=bool)).sum() / total)


@dataclass
class AttributeOutcomes:
    """Counts of thresholded attribute predictions by outcome.

    Attributes:
        correct: Predicted and annotated
        incorrect: Predicted but absent from the hidden truth
        recovered: Predicted, missing from annotations, present in hidden truth
        low_confidence: Annotated, scored above 0.5 but not above the threshold
    """
    correct: int = 0
    incorrect: int = 0
    recovered: int = 0
    low_confidence: int = 0

    def to_dict(self) -> dict[str, int]:
        return {
            "correct": self.correct,
            "incorrect": self.incorrect,
            "recovered": self.recovered,
            "low_confidence": self.low_confidence,
        }


def attribute_outcomes(
    scores: np.ndarray,
    annotations: np.ndarray,
    hidden: np.ndarray,
    threshold: float = DEFAULT_THRESHOLD,
) -> AttributeOutcomes:
    scores = np.asarray(scores, dtype=np.float64)
    annotations = np.asarray(annotations, dtype=bool)
    hidden = np.asarray(hidden, dtype=bool)
    predicted = threshold_predict(scores, threshold)
    return AttributeOutcomes(
        correct=int((predicted & annotations).sum()),
        incorrect=int((predicted & ~hidden).sum()),
        recovered=int((predicted & hidden & ~annotations).sum()),
        low_confidence=int((annotations & (scores > LOW_CONFIDENCE_FLOOR) & (scores <= threshold)).sum()),
    )


@dataclass
class CooccurrenceAudit:
    """Predicted pairs that contradict the category tree.

    Attributes:
        rate: inconsistent / total, 0 when there are no pairs
        total: Number of (category, sub-category) and (category, attribute)
            pairs examined
        pairs: (category id, other id, count) per distinct inconsistent pair,
            most frequent first
    """
    rate: float
    total: int
    inconsistent: int
    pairs: list[tuple[str, str, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "total": self.total,
            "inconsistent": self.inconsistent,
            "pairs": [{"category": c, "other": o, "count": n} for c, o, n in self.pairs],
        }


def tree_relations(tree: CategoryTree) -> tuple[np.ndarray, np.ndarray]:
    """(parent category index per sub-category, category × attribute attachment matrix)."""
    sub_parent = np.array(
        [tree.index(CATEGORY, tree.parent(s)) for s in tree.sub_categories], dtype=np.int64
    )
    attached = np.zeros((len(tree.categories), len(tree.attributes)), dtype=bool)
    for c, category in enumerate(tree.categories):
        for attribute in tree.attributes_of(category):
            attached[c, tree.index(ATTRIBUTE, attribute)] = True
    return sub_parent, attached


def audit_cooccurrence(
    category: np.ndarray,
    sub_category: np.ndarray,
    attributes: np.ndarray,
    tree: CategoryTree,
) -> CooccurrenceAudit:
    """Fraction of predicted pairs violating the tree.

    Products with a negative (uncovered) sub-category index contribute no
    pairs.
    """
    category = np.asarray(category, dtype=np.int64)
    sub_category = np.asarray(sub_category, dtype=np.int64)
    attributes = np.asarray(attributes, dtype=bool)
    covered = sub_category >= 0
    category, sub_category, attributes = category[covered], sub_category[covered], attributes[covered]

    sub_parent, attached = tree_relations(tree)
    bad_sub = sub_parent[sub_category] != category
    bad_attr = attributes & ~attached[category]

    counter: Counter[tuple[str, str]] = Counter()
    categories, subs, attrs = tree.categories, tree.sub_categories, tree.attributes
    for i in np.flatnonzero(bad_sub):
        counter[(categories[category[i]], subs[sub_category[i]])] += 1
    for i, a in zip(*np.nonzero(bad_attr)):
        counter[(categories[category[i]], attrs[a])] += 1

    total = int(len(category) + attributes.sum())
    inconsistent = int(bad_sub.sum() + bad_attr.sum())
    pairs = sorted(((c, o, n) for (c, o), n in counter.items()), key=lambda p: (-p[2], p[0], p[1]))
    return CooccurrenceAudit(
        rate=inconsistent / total if total else 0.0,
        total=total,
        inconsistent=inconsistent,
        pairs=pairs,
    )
