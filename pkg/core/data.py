"""Dataset manifests: reading, writing, label encoding, splits and statistics.

A manifest is a tab-separated text file, one product per line::

    id  payload-ref  category  sub-category  attributes  [hidden-attributes]

``payload-ref`` is ``<sidecar file>:<row>`` with the sidecar path relative to
the manifest. Attribute lists are comma-joined and may be empty. The optional
sixth column holds the attributes actually present (generated data only).
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from core.losses import LevelTargets
from core.models import DatasetManifest, ProductRecord
from core.payloads import PayloadError, codec_for_mode, detect_codec, detect_codec_by_content
from core.taxonomy import ATTRIBUTE, CATEGORY, SUB_CATEGORY, CategoryTree, TaxonomyError

logger = logging.getLogger(__name__)


class ManifestError(ValueError):
    """Raised for malformed manifest lines or manifests that contradict a tree."""
    pass


def _join(ids) -> str:
    return ",".join(sorted(ids))


def _split_ids(text: str) -> frozenset[str]:
    return frozenset(part.strip() for part in text.split(",") if part.strip())


def write_manifest(path: str | Path, manifest: DatasetManifest) -> Path:
    """Write the manifest and its payload sidecar; returns the sidecar path."""
    path = Path(path)
    codec = codec_for_mode(manifest.input_mode)
    sidecar = path.with_suffix(codec.SUFFIX)
    sidecar.write_bytes(codec.encode(manifest.inputs))

    lines = []
    for row, record in enumerate(manifest.records):
        fields = [
            record.product_id,
            f"{sidecar.name}:{row}",
            record.category_id,
            record.sub_category_id,
            _join(record.attribute_ids),
        ]
        if record.hidden_attribute_ids is not None:
            fields.append(_join(record.hidden_attribute_ids))
        lines.append("\t".join(fields))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return sidecar


def read_sidecar(path: str | Path):
    """Decode a payload sidecar; returns (codec, array)."""
    path = Path(path)
    try:
        content = path.read_bytes()
    except OSError as e:
        raise PayloadError(f"Cannot read payload sidecar {path}: {e}") from e
    codec = detect_codec(path.name) or detect_codec_by_content(content, path.name)
    if codec is None:
        raise PayloadError(f"Unrecognised payload sidecar format: {path}")
    return codec, codec.decode(content)


def parse_payload_ref(ref: str) -> tuple[str, int]:
    name, sep, row = ref.rpartition(":")
    if not sep or not name:
        raise PayloadError(f"Payload reference {ref!r} is not of the form <file>:<row>")
    try:
        return name, int(row)
    except ValueError:
        raise PayloadError(f"Payload reference {ref!r} has a non-integer row") from None


def read_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ManifestError(f"Cannot read manifest {path}: {e}") from e

    records = []
    seen = set()
    for line_no, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.startswith("#"):
            continue
        parts = raw.split("\t")
        if len(parts) not in (5, 6):
            raise ManifestError(f"{path}:{line_no}: expected 5 or 6 tab-separated fields, got {len(parts)}")
        product_id = parts[0].strip()
        if product_id in seen:
            raise ManifestError(f"{path}:{line_no}: duplicate product id {product_id!r}")
        seen.add(product_id)
        records.append(ProductRecord(
            product_id=product_id,
            payload_ref=parts[1].strip(),
            category_id=parts[2].strip(),
            sub_category_id=parts[3].strip(),
            attribute_ids=_split_ids(parts[4]),
            hidden_attribute_ids=_split_ids(parts[5]) if len(parts) == 6 else None,
        ))

    sidecars = {}
    rows = []
    for record in records:
        name, row = parse_payload_ref(record.payload_ref)
        if name not in sidecars:
            sidecars[name] = read_sidecar(path.parent / name)
        codec, array = sidecars[name]
        if not 0 <= row < len(array):
            raise PayloadError(f"Payload reference {record.payload_ref!r} is out of range ({len(array)} rows)")
        rows.append((name, row))

    modes = {codec.INPUT_MODE for codec, _ in sidecars.values()}
    if len(modes) > 1:
        raise PayloadError(f"Manifest mixes payload formats: {', '.join(sorted(modes))}")
    input_mode = modes.pop() if modes else "features"
    if rows:
        inputs = np.stack([sidecars[name][1][row] for name, row in rows])
    else:
        inputs = np.zeros((0, 0))
    return DatasetManifest(records=records, inputs=inputs, input_mode=input_mode)


def check_against_tree(manifest: DatasetManifest, tree: CategoryTree) -> list[str]:
    """Problems making the manifest unusable with the tree (empty when fine)."""
    problems = []
    for record in manifest.records:
        try:
            ok, pairs = tree.is_consistent(
                record.category_id, record.sub_category_id, record.truth_attribute_ids
            )
        except TaxonomyError as e:
            problems.append(f"{record.product_id}: {e}")
            continue
        if not record.attribute_ids <= record.truth_attribute_ids:
            problems.append(f"{record.product_id}: annotations are not a subset of the hidden truth")
        if not ok:
            listed = ", ".join(f"({a}, {b})" for a, b in pairs)
            problems.append(f"{record.product_id}: inconsistent with the tree: {listed}")
    return problems


def encode_labels(manifest: DatasetManifest, tree: CategoryTree) -> LevelTargets:
    """Tree indices for category/sub-category and a 0/1 annotation matrix."""
    n = len(manifest)
    attributes = np.zeros((n, len(tree.attributes)))
    for i, record in enumerate(manifest.records):
        for attribute in record.attribute_ids:
            attributes[i, tree.index(ATTRIBUTE, attribute)] = 1.0
    return LevelTargets(
        category=np.array([tree.index(CATEGORY, r.category_id) for r in manifest.records], dtype=np.int64),
        sub_category=np.array([tree.index(SUB_CATEGORY, r.sub_category_id) for r in manifest.records], dtype=np.int64),
        attributes=attributes,
    )


def attribute_matrix(manifest: DatasetManifest, tree: CategoryTree, hidden: bool = False) -> np.ndarray:
    """Boolean (n, n_attributes) matrix of annotated (or hidden-truth) attributes."""
    matrix = np.zeros((len(manifest), len(tree.attributes)), dtype=bool)
    for i, record in enumerate(manifest.records):
        ids = record.truth_attribute_ids if hidden else record.attribute_ids
        for attribute in ids:
            matrix[i, tree.index(ATTRIBUTE, attribute)] = True
    return matrix


def split_indices(manifest: DatasetManifest, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified split by sub-category.

    Each sub-category with m ≥ 2 products sends round(fraction · m) of them
    (at least one, at most m - 1) to train. Smaller groups go to train.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train fraction must be in (0, 1), got {train_fraction}")
    groups: dict[str, list[int]] = defaultdict(list)
    for i, record in enumerate(manifest.records):
        groups[record.sub_category_id].append(i)

    rng = np.random.default_rng(seed)
    train, test = [], []
    for sub_category in sorted(groups):
        members = np.array(groups[sub_category])
        if len(members) < 2:
            logger.warning(
                "Sub-category %s has %d product(s); placing it in the training split",
                sub_category, len(members),
            )
            train.extend(members)
            continue
        members = rng.permutation(members)
        n_train = int(np.floor(train_fraction * len(members) + 0.5))
        n_train = min(max(n_train, 1), len(members) - 1)
        train.extend(members[:n_train])
        test.extend(members[n_train:])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(test, dtype=np.int64))


def split(manifest: DatasetManifest, train_fraction: float = 0.75, seed: int = 7) -> tuple[DatasetManifest, DatasetManifest]:
    train, test = split_indices(manifest, train_fraction, seed)
    logger.info("Split %d products into %d train / %d test", len(manifest), len(train), len(test))
    return manifest.subset(train), manifest.subset(test)


@dataclass
class Summary:
    mean: float
    max: int
    min: int

    @classmethod
    def of(cls, counts) -> Summary:
        counts = list(counts)
        if not counts:
            return cls(0.0, 0, 0)
        return cls(float(np.mean(counts)), int(max(counts)), int(min(counts)))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "max": self.max, "min": self.min}


@dataclass
class DatasetStats:
    """Products per level (over labels that occur) and attributes per product."""
    n_products: int
    products_per_category: Summary
    products_per_sub_category: Summary
    products_per_attribute: Summary
    attributes_per_product: Summary

    def rows(self) -> list[tuple[str, Summary]]:
        return [
            ("Products per category", self.products_per_category),
            ("Products per sub-category", self.products_per_sub_category),
            ("Products per attribute", self.products_per_attribute),
            ("Attributes per product", self.attributes_per_product),
        ]

    def to_dict(self) -> dict:
        return {
            "n_products": self.n_products,
            "products_per_category": self.products_per_category.to_dict(),
            "products_per_sub_category": self.products_per_sub_category.to_dict(),
            "products_per_attribute": self.products_per_attribute.to_dict(),
            "attributes_per_product": self.attributes_per_product.to_dict(),
        }


def stats(manifest: DatasetManifest) -> DatasetStats:
    categories = Counter(r.category_id for r in manifest.records)
    sub_categories = Counter(r.sub_category_id for r in manifest.records)
    attributes = Counter(a for r in manifest.records for a in r.attribute_ids)
    return DatasetStats(
        n_products=len(manifest),
        products_per_category=Summary.of(categories.values()),
        products_per_sub_category=Summary.of(sub_categories.values()),
        products_per_attribute=Summary.of(attributes.values()),
        attributes_per_product=Summary.of(len(r.attribute_ids) for r in manifest.records),
    )
