"""Pipeline baseline: a generic category model routing each product to
per-category specialist models.

Each model follows one template: encoder → dense(hidden) + ReLU →
dense(n_outputs) → softmax (multiclass) or sigmoid (multilabel). A category
with no sub-category specialist is uncovered: its products get a category
prediction only. Attribute specialists are one multilabel model per category.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from core.architectures.base import ArchitectureError, UnifiedModelConfig
from core.architectures.encoder import build_encoder
from core.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from core.models import UNCOVERED, Predictions
from core.nn import DenseLayer, Parameter
from core.taxonomy import ATTRIBUTE, SUB_CATEGORY, CategoryTree
from core.tensor import Tensor, relu, sigmoid, softmax

Kind = Literal["multiclass", "multilabel"]

PIPELINE_FILE = "pipeline.tsv"
CATEGORY_FILE = "category.ckpt"


class TemplateModel:
    """A single-output-level classifier.

    Attributes:
        kind: "multiclass" (softmax) or "multilabel" (independent sigmoids)
        labels: Tree ids of the output columns, in order
    """

    def __init__(
        self,
        labels: list[str] | int,
        kind: Kind,
        config: UnifiedModelConfig,
        rng: np.random.Generator,
        name: str = "template",
    ):
        if isinstance(labels, int):
            labels = [str(i) for i in range(labels)]
        if not labels:
            raise ArchitectureError("A template model needs at least one output")
        if kind not in ("multiclass", "multilabel"):
            raise ArchitectureError(f"Unknown template kind {kind!r}")
        self.labels = list(labels)
        self.kind = kind
        self.config = config
        self.encoder = build_encoder(config, rng, name=f"{name}.encoder")
        self.hidden = DenseLayer(f"{name}.hidden", config.encoder_dim, config.hidden_dim, rng)
        self.out = DenseLayer(f"{name}.out", config.hidden_dim, len(self.labels), rng)

    @property
    def n_outputs(self) -> int:
        return len(self.labels)

    def logits(self, inputs: np.ndarray) -> Tensor:
        return self.out(relu(self.hidden(self.encoder(inputs))))

    def forward(self, inputs: np.ndarray) -> Tensor:
        logits = self.logits(inputs)
        return softmax(logits) if self.kind == "multiclass" else sigmoid(logits)

    def parameters(self) -> list[Parameter]:
        return [*self.encoder.parameters(), *self.hidden.parameters(), *self.out.parameters()]

    def regularized_layers(self) -> list[DenseLayer]:
        return []


def template_model(
    labels: list[str] | int,
    kind: Kind,
    config: UnifiedModelConfig,
    rng: np.random.Generator,
) -> TemplateModel:
    config.validate()
    return TemplateModel(labels, kind, config, rng)


@dataclass
class PipelineSpec:
    """A category model plus specialists keyed by category id."""
    category_model: TemplateModel
    sub_models: dict[str, TemplateModel] = field(default_factory=dict)
    attribute_models: dict[str, TemplateModel] = field(default_factory=dict)
    uncovered: set[str] = field(default_factory=set)

    def is_covered(self, category_id: str, tree: CategoryTree) -> bool:
        if category_id in self.uncovered or category_id not in self.sub_models:
            return False
        return category_id in self.attribute_models or not tree.attributes_of(category_id)

    def validate(self, tree: CategoryTree) -> None:
        """Every category must be routed or explicitly uncovered."""
        if self.category_model.labels != tree.categories:
            raise ArchitectureError("The category model's outputs do not match the tree's categories")
        for category in tree.categories:
            if category not in self.sub_models and category not in self.uncovered:
                raise ArchitectureError(f"Category {category!r} has no specialist and is not marked uncovered")
        for category, model in self.sub_models.items():
            if set(model.labels) - set(tree.sub_categories_of(category)):
                raise ArchitectureError(f"Specialist for {category!r} predicts sub-categories of another category")
        for category, model in self.attribute_models.items():
            if set(model.labels) - set(tree.attributes_of(category)):
                raise ArchitectureError(f"Attribute specialist for {category!r} predicts unattached attributes")


def pipeline_predict(
    spec: PipelineSpec,
    tree: CategoryTree,
    inputs: np.ndarray,
    oracle_categories: np.ndarray | None = None,
) -> Predictions:
    """Predict all levels by routing on the (predicted or given) category.

    Args:
        oracle_categories: Ground-truth category indices; when given, the
            category model is bypassed and treated as always right.
    """
    n = len(inputs)
    if oracle_categories is not None:
        category = np.asarray(oracle_categories, dtype=np.int64)
        category_confidence = np.ones(n)
    else:
        probs = spec.category_model.forward(inputs).data
        category = np.argmax(probs, axis=1)
        category_confidence = probs[np.arange(n), category]

    sub_category = np.full(n, UNCOVERED, dtype=np.int64)
    sub_confidence = np.zeros(n)
    attribute_scores = np.zeros((n, len(tree.attributes)))
    covered = np.zeros(n, dtype=bool)

    categories = tree.categories
    for c in np.unique(category):
        category_id = categories[c]
        if not spec.is_covered(category_id, tree):
            continue
        rows = np.flatnonzero(category == c)
        batch = inputs[rows]
        covered[rows] = True

        specialist = spec.sub_models[category_id]
        probs = specialist.forward(batch).data
        local = np.argmax(probs, axis=1)
        global_index = np.array([tree.index(SUB_CATEGORY, label) for label in specialist.labels])
        sub_category[rows] = global_index[local]
        sub_confidence[rows] = probs[np.arange(len(rows)), local]

        attribute_model = spec.attribute_models.get(category_id)
        if attribute_model is not None:
            columns = [tree.index(ATTRIBUTE, label) for label in attribute_model.labels]
            attribute_scores[np.ix_(rows, columns)] = attribute_model.forward(batch).data

    return Predictions(
        category=category,
        sub_category=sub_category,
        category_confidence=category_confidence,
        sub_category_confidence=sub_confidence,
        attribute_scores=attribute_scores,
        covered=covered,
    )


def save_template(path: str | Path, model: TemplateModel, extra: dict[str, str] | None = None) -> None:
    config = {
        "kind": "template",
        "template.kind": model.kind,
        "template.labels": ",".join(model.labels),
        **model.config.to_config(),
        **(extra or {}),
    }
    save_checkpoint(path, model.parameters(), config)


def load_template(path: str | Path) -> TemplateModel:
    checkpoint = load_checkpoint(path)
    if checkpoint.config.get("kind") != "template":
        raise CheckpointError(f"{path} is not a template model checkpoint")
    labels = checkpoint.config["template.labels"].split(",")
    model = TemplateModel(
        labels,
        checkpoint.config["template.kind"],
        UnifiedModelConfig.from_config(checkpoint.config),
        np.random.default_rng(0),
    )
    checkpoint.load_into(model.parameters())
    return model


def save_pipeline(directory: str | Path, spec: PipelineSpec, extra: dict[str, str] | None = None) -> None:
    """Write every model checkpoint plus the pipeline.tsv route map.

    ``extra`` (run metadata such as the training seed) goes into the
    category model's header.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [f"category\t{CATEGORY_FILE}"]
    save_template(directory / CATEGORY_FILE, spec.category_model, extra)
    for category, model in spec.sub_models.items():
        filename = f"sub_category-{category}.ckpt"
        save_template(directory / filename, model)
        lines.append(f"sub_category\t{category}\t{filename}")
    for category, model in spec.attribute_models.items():
        filename = f"attribute-{category}.ckpt"
        save_template(directory / filename, model)
        lines.append(f"attribute\t{category}\t{filename}")
    for category in sorted(spec.uncovered):
        lines.append(f"uncovered\t{category}")
    (directory / PIPELINE_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_pipeline(directory: str | Path, tree: CategoryTree) -> PipelineSpec:
    directory = Path(directory)
    try:
        text = (directory / PIPELINE_FILE).read_text(encoding="utf-8")
    except OSError as e:
        raise CheckpointError(f"Cannot read pipeline spec in {directory}: {e}") from e

    category_model = None
    sub_models: dict[str, TemplateModel] = {}
    attribute_models: dict[str, TemplateModel] = {}
    uncovered: set[str] = set()
    for line in text.splitlines():
        if not line.strip():
            continue
        parts = line.split("\t")
        if parts[0] == "category" and len(parts) == 2:
            category_model = load_template(directory / parts[1])
        elif parts[0] == "sub_category" and len(parts) == 3:
            sub_models[parts[1]] = load_template(directory / parts[2])
        elif parts[0] == "attribute" and len(parts) == 3:
            attribute_models[parts[1]] = load_template(directory / parts[2])
        elif parts[0] == "uncovered" and len(parts) == 2:
            uncovered.add(parts[1])
        else:
            raise CheckpointError(f"Malformed pipeline line: {line!r}")
    if category_model is None:
        raise CheckpointError(f"{directory / PIPELINE_FILE} names no category model")

    spec = PipelineSpec(category_model, sub_models, attribute_models, uncovered)
    try:
        spec.validate(tree)
    except ArchitectureError as e:
        raise CheckpointError(f"Pipeline in {directory} does not fit the tree: {e}") from e
    return spec
