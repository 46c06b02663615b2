"""Synthetic hierarchical product datasets.

The tree is built deterministically from the counts: genders, families and
categories are dealt round-robin to their parents, every category gets at
least one sub-category, and each attribute attaches to one or two
categories. Sub-category popularity follows a power law p ∝ rank^-α; the
first ``sub_categories`` products cover every sub-category once.

Inputs are built from shared prototypes so that labels are recoverable:

* features: category prototype + sub-category offset + one offset per
  present attribute + Gaussian noise
* images: background colour per category, a shape per sub-category and a
  small marker per attribute, drawn with Pillow, plus pixel noise

Every product draws from its own generator, seeded by (seed, product index),
so results do not depend on the number of workers.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from core.data import write_manifest
from core.models import DatasetManifest, InputMode, ProductRecord
from core.taxonomy import ATTRIBUTE, CATEGORY, FAMILY, GENDER, SUB_CATEGORY, CategoryTree, Node, dump_tree

logger = logging.getLogger(__name__)

_PROTOTYPE_STREAM = 0
_PRODUCT_STREAM = 1

SUB_OFFSET_SCALE = 0.5
ATTRIBUTE_OFFSET_SCALE = 0.5
SHAPES = ("ellipse", "rectangle", "triangle", "cross")


class GeneratorError(ValueError):
    """Raised for generator settings that cannot produce a dataset."""
    pass


@dataclass
class GeneratorConfig:
    """Settings of a synthetic dataset.

    Attributes:
        products: Number of products N
        genders, families, categories, sub_categories, attributes: Tree shape
        imbalance: Power-law exponent α over sub-category ranks (0 = uniform)
        attribute_rate: Probability that each attribute attached to a
            product's category is present
        max_attributes: Upper bound on attributes per product
        missingness: Probability that a present attribute is left out of
            the annotations
        noise: Feature noise standard deviation (image mode: pixel noise
            is 64·noise grey levels)
        input_mode: "features" or "images"
        feature_dim: Feature vector width
        image_size: Side of square images, a multiple of 8
        seed: Master seed
        workers: Threads generating products
    """
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
    input_mode: InputMode = "features"
    feature_dim: int = 64
    image_size: int = 32
    seed: int = 7
    workers: int = 4

    def validate(self) -> None:
        for name in ("products", "genders", "families", "categories", "sub_categories",
                     "attributes", "feature_dim", "workers"):
            if getattr(self, name) < 1:
                raise GeneratorError(f"{name} must be at least 1, got {getattr(self, name)}")
        if not (self.genders <= self.families <= self.categories <= self.sub_categories):
            raise GeneratorError(
                "Each level needs at least as many nodes as the level above it "
                f"(got {self.genders}/{self.families}/{self.categories}/{self.sub_categories})"
            )
        if self.sub_categories > self.products:
            raise GeneratorError(
                f"Cannot cover {self.sub_categories} sub-categories with only {self.products} products"
            )
        for name in ("attribute_rate", "missingness"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise GeneratorError(f"{name} must be in [0, 1], got {value}")
        if self.imbalance < 0 or self.noise < 0 or self.max_attributes < 0:
            raise GeneratorError("imbalance, noise and max_attributes must be nonnegative")
        if self.input_mode not in ("features", "images"):
            raise GeneratorError(f"Unknown input mode {self.input_mode!r}")
        if self.input_mode == "images" and (self.image_size < 8 or self.image_size % 8):
            raise GeneratorError(f"image_size must be a positive multiple of 8, got {self.image_size}")


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def build_tree(config: GeneratorConfig) -> CategoryTree:
    genders = [f"gender-{i}" for i in range(config.genders)]
    families = [f"family-{i}" for i in range(config.families)]
    categories = [f"category-{i:02d}" for i in range(config.categories)]
    sub_categories = [f"sub-{i:03d}" for i in range(config.sub_categories)]
    attributes = [f"attr-{i:02d}" for i in range(config.attributes)]

    nodes = [Node(GENDER, g, f"Gender {i}") for i, g in enumerate(genders)]
    nodes += [Node(FAMILY, f, f"Family {i}", (genders[i % len(genders)],)) for i, f in enumerate(families)]
    nodes += [Node(CATEGORY, c, f"Category {i}", (families[i % len(families)],)) for i, c in enumerate(categories)]
    nodes += [
        Node(SUB_CATEGORY, s, f"Sub-category {i}", (categories[i % len(categories)],))
        for i, s in enumerate(sub_categories)
    ]

    rng = stream_rng(config.seed, _PROTOTYPE_STREAM, 0)
    for i, a in enumerate(attributes):
        links = [categories[i % len(categories)]]
        if len(categories) > 1 and rng.random() < 0.3:
            others = [c for c in categories if c != links[0]]
            links.append(others[rng.integers(len(others))])
        nodes.append(Node(ATTRIBUTE, a, f"Attribute {i}", tuple(links)))
    return CategoryTree(nodes)


def sub_category_probabilities(n: int, imbalance: float) -> np.ndarray:
    """Power law over ranks 1..n: p_r ∝ r^-α."""
    weights = np.arange(1, n + 1, dtype=np.float64) ** -imbalance
    return weights / weights.sum()


@dataclass
class Prototypes:
    """Shared generative parameters, one row per tree node of each level."""
    category: np.ndarray
    sub_category: np.ndarray
    attribute: np.ndarray


def make_prototypes(config: GeneratorConfig, tree: CategoryTree) -> Prototypes:
    """Feature mode: vectors; image mode: RGB colours (uint8 triples)."""
    rng = stream_rng(config.seed, _PROTOTYPE_STREAM, 1)
    n_cat, n_sub, n_attr = len(tree.categories), len(tree.sub_categories), len(tree.attributes)
    if config.input_mode == "features":
        dim = config.feature_dim
        return Prototypes(
            category=rng.standard_normal((n_cat, dim)),
            sub_category=SUB_OFFSET_SCALE * rng.standard_normal((n_sub, dim)),
            attribute=ATTRIBUTE_OFFSET_SCALE * rng.standard_normal((n_attr, dim)),
        )
    return Prototypes(
        category=rng.integers(0, 256, size=(n_cat, 3)),
        sub_category=rng.integers(0, 256, size=(n_sub, 3)),
        attribute=rng.integers(0, 256, size=(n_attr, 3)),
    )


def _marker_box(index: int, size: int) -> tuple[int, int, int, int]:
    """Fixed spot for attribute ``index`` along the image border."""
    cell = max(size // 8, 2)
    per_side = size // cell
    side, slot = divmod(index, per_side)
    offset = slot * cell
    x, y = [(offset, 0), (size - cell, offset), (offset, size - cell), (0, offset)][side % 4]
    return x, y, x + cell - 1, y + cell - 1


def draw_product(
    size: int,
    background: np.ndarray,
    shape: str,
    shape_colour: np.ndarray,
    markers: list[tuple[int, np.ndarray]],
    rng: np.random.Generator,
    noise: float,
) -> np.ndarray:
    image = Image.new("RGB", (size, size), tuple(int(v) for v in background))
    draw = ImageDraw.Draw(image)
    jitter = rng.integers(-2, 3, size=2)
    cx, cy = size // 2 + int(jitter[0]), size // 2 + int(jitter[1])
    r = size // 4
    fill = tuple(int(v) for v in shape_colour)
    if shape == "ellipse":
        draw.ellipse((cx - r, cy - r, cx + r, cy + r), fill=fill)
    elif shape == "rectangle":
        draw.rectangle((cx - r, cy - r, cx + r, cy + r), fill=fill)
    elif shape == "triangle":
        draw.polygon([(cx, cy - r), (cx - r, cy + r), (cx + r, cy + r)], fill=fill)
    else:
        w = max(r // 3, 1)
        draw.rectangle((cx - r, cy - w, cx + r, cy + w), fill=fill)
        draw.rectangle((cx - w, cy - r, cx + w, cy + r), fill=fill)
    for index, colour in markers:
        draw.rectangle(_marker_box(index, size), fill=tuple(int(v) for v in colour))

    pixels = np.asarray(image, dtype=np.float64)
    if noise > 0:
        pixels = pixels + rng.normal(0.0, 64.0 * noise, size=pixels.shape)
    return np.clip(np.rint(pixels), 0, 255).astype(np.uint8)


def generate(config: GeneratorConfig) -> tuple[CategoryTree, DatasetManifest]:
    """Build a tree and a manifest of ``config.products`` labelled products.

    Raises:
        GeneratorError: If the configuration is infeasible
    """
    config.validate()
    tree = build_tree(config)
    prototypes = make_prototypes(config, tree)
    probabilities = sub_category_probabilities(config.sub_categories, config.imbalance)
    n_sub = config.sub_categories

    sub_parent = [tree.index(CATEGORY, tree.parent(s)) for s in tree.sub_categories]
    attached = [[tree.index(ATTRIBUTE, a) for a in tree.attributes_of(c)] for c in tree.categories]
    sub_rank_within = {}
    for s, sub_id in enumerate(tree.sub_categories):
        siblings = tree.sub_categories_of(tree.parent(sub_id))
        sub_rank_within[s] = siblings.index(sub_id)

    def make_product(i: int) -> tuple[ProductRecord, np.ndarray]:
        rng = stream_rng(config.seed, _PRODUCT_STREAM, i)
        s = i if i < n_sub else int(rng.choice(n_sub, p=probabilities))
        c = sub_parent[s]

        present = [a for a in attached[c] if rng.random() < config.attribute_rate]
        if len(present) > config.max_attributes:
            present = sorted(rng.choice(present, size=config.max_attributes, replace=False).tolist())
        annotated = [a for a in present if rng.random() >= config.missingness]

        if config.input_mode == "features":
            vector = prototypes.category[c] + prototypes.sub_category[s]
            for a in present:
                vector = vector + prototypes.attribute[a]
            payload = vector + config.noise * rng.standard_normal(config.feature_dim)
        else:
            payload = draw_product(
                config.image_size,
                prototypes.category[c],
                SHAPES[sub_rank_within[s] % len(SHAPES)],
                prototypes.sub_category[s],
                [(a, prototypes.attribute[a]) for a in present],
                rng,
                config.noise,
            )

        attributes = tree.attributes
        record = ProductRecord(
            product_id=f"p{i:06d}",
            category_id=tree.categories[c],
            sub_category_id=tree.sub_categories[s],
            attribute_ids=frozenset(attributes[a] for a in annotated),
            hidden_attribute_ids=frozenset(attributes[a] for a in present),
        )
        return record, payload

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        products = list(pool.map(make_product, range(config.products)))

    records = [record for record, _ in products]
    inputs = np.stack([payload for _, payload in products])
    logger.info(
        "Generated %d products over %d categories, %d sub-categories and %d attributes",
        len(records), len(tree.categories), len(tree.sub_categories), len(tree.attributes),
    )
    return tree, DatasetManifest(records=records, inputs=inputs, input_mode=config.input_mode)


def save_dataset(directory: str | Path, tree: CategoryTree, manifest: DatasetManifest) -> tuple[Path, Path]:
    """Write ``tree.tsv`` and ``manifest.tsv`` (plus its sidecar) into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tree_path = directory / "tree.tsv"
    manifest_path = directory / "manifest.tsv"
    dump_tree(tree, tree_path)
    write_manifest(manifest_path, manifest)
    return tree_path, manifest_path
