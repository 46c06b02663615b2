"""Per-product prediction rows with family and gender inferred from the tree."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from core.metrics import DEFAULT_THRESHOLD, threshold_predict
from core.models import UNCOVERED, Predictions
from core.taxonomy import CategoryTree

TSV_HEADER = "id\tcategory\tsub_category\tfamily\tgender\tcategory_confidence\tsub_category_confidence\tattributes"


@dataclass
class PredictionRow:
    """Predictions for one product.

    Attributes:
        product_id: Product identifier
        category: Predicted category id
        sub_category: Predicted sub-category id, None when uncovered
        family: Family inferred from the predicted sub-category, or from
            the predicted category when uncovered
        gender: Gender of that family
        category_confidence: Probability of the predicted category
        sub_category_confidence: Probability of the predicted sub-category
        attributes: (attribute id, score) for scores above the threshold,
            highest first
    """
    product_id: str
    category: str
    sub_category: str | None
    family: str
    gender: str
    category_confidence: float
    sub_category_confidence: float
    attributes: list[tuple[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.product_id,
            "category": self.category,
            "sub_category": self.sub_category,
            "family": self.family,
            "gender": self.gender,
            "category_confidence": self.category_confidence,
            "sub_category_confidence": self.sub_category_confidence,
            "attributes": [{"id": a, "score": s} for a, s in self.attributes],
        }

    def to_line(self) -> str:
        attributes = ",".join(f"{a}:{s:.4f}" for a, s in self.attributes)
        return "\t".join([
            self.product_id,
            self.category,
            self.sub_category or "-",
            self.family,
            self.gender,
            f"{self.category_confidence:.4f}",
            f"{self.sub_category_confidence:.4f}",
            attributes,
        ])


def prediction_rows(
    predictions: Predictions,
    tree: CategoryTree,
    product_ids: list[str],
    threshold: float = DEFAULT_THRESHOLD,
) -> list[PredictionRow]:
    if len(product_ids) != len(predictions):
        raise ValueError(f"{len(product_ids)} product ids for {len(predictions)} predictions")
    chosen = threshold_predict(predictions.attribute_scores, threshold)
    categories, subs, attributes = tree.categories, tree.sub_categories, tree.attributes
    rows = []
    for i, product_id in enumerate(product_ids):
        category = categories[predictions.category[i]]
        sub = predictions.sub_category[i]
        if sub == UNCOVERED:
            family, gender = tree.category_ancestors(category)
        else:
            _, family, gender = tree.infer_ancestors(subs[sub])
        scores = predictions.attribute_scores[i]
        # ties keep tree order
        picked = sorted(np.flatnonzero(chosen[i]), key=lambda a: (-scores[a], a))
        rows.append(PredictionRow(
            product_id=product_id,
            category=category,
            sub_category=None if sub == UNCOVERED else subs[sub],
            family=family,
            gender=gender,
            category_confidence=float(predictions.category_confidence[i]),
            sub_category_confidence=float(predictions.sub_category_confidence[i]),
            attributes=[(attributes[a], float(scores[a])) for a in picked],
        ))
    return rows
