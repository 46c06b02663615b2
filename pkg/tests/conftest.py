"""Shared test helpers."""

import numpy as np
import pytest

from core.models import DatasetManifest, Predictions, ProductRecord
from core.taxonomy import CategoryTree, parse_tree

# gender → family → category → sub-category, attributes attached to categories
TOY_TREE = """\
gender\twomen\tWomen\t
family\tclothing\tClothing\twomen
family\taccessories\tAccessories\twomen
category\tdress\tDresses\tclothing
category\ttop\tTops\tclothing
category\tbag\tBags\taccessories
sub-category\tday-dress\tDay dresses\tdress
sub-category\tparty-dress\tParty dresses\tdress
sub-category\tt-shirt\tT-shirts\ttop
sub-category\tblouse\tBlouses\ttop
sub-category\thandbag\tHandbags\tbag
attribute\tsleeveless\tSleeveless\tdress,top
attribute\tfloral\tFloral\tdress
attribute\tleather\tLeather\tbag
"""

# (category, sub-category, annotated attributes, hidden truth)
TOY_ROWS = [
    ("dress", "day-dress", {"floral"}, {"floral", "sleeveless"}),
    ("dress", "party-dress", {"sleeveless"}, {"sleeveless"}),
    ("top", "t-shirt", set(), {"sleeveless"}),
    ("top", "blouse", {"sleeveless"}, {"sleeveless"}),
    ("bag", "handbag", {"leather"}, {"leather"}),
    ("bag", "handbag", set(), set()),
]


def make_tree(text: str = TOY_TREE) -> CategoryTree:
    return parse_tree(text)


def make_records(rows, hidden: bool = True) -> list[ProductRecord]:
    """Build ProductRecords from (category, sub-category, attributes, truth) rows."""
    records = []
    for i, (category, sub_category, attributes, truth) in enumerate(rows):
        records.append(ProductRecord(
            product_id=f"p{i:03d}",
            category_id=category,
            sub_category_id=sub_category,
            attribute_ids=frozenset(attributes),
            hidden_attribute_ids=frozenset(truth) if hidden else None,
            payload_ref=f"features.f64:{i}",
        ))
    return records


def make_manifest(rows=TOY_ROWS, dim: int = 4, seed: int = 0, hidden: bool = True) -> DatasetManifest:
    """A feature-mode manifest with random inputs."""
    inputs = np.random.default_rng(seed).normal(size=(len(rows), dim))
    return DatasetManifest(records=make_records(rows, hidden), inputs=inputs)


def perfect_predictions(manifest: DatasetManifest, tree: CategoryTree, attribute_score: float = 0.9) -> Predictions:
    """Predictions that reproduce the manifest's labels exactly."""
    n = len(manifest)
    scores = np.zeros((n, len(tree.attributes)))
    for i, record in enumerate(manifest.records):
        for attribute in record.attribute_ids:
            scores[i, tree.attributes.index(attribute)] = attribute_score
    return Predictions(
        category=np.array([tree.categories.index(r.category_id) for r in manifest.records]),
        sub_category=np.array([tree.sub_categories.index(r.sub_category_id) for r in manifest.records]),
        category_confidence=np.ones(n),
        sub_category_confidence=np.ones(n),
        attribute_scores=scores,
    )


@pytest.fixture
def tree():
    return make_tree()


@pytest.fixture
def manifest():
    return make_manifest()
