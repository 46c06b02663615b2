"""Training loops for unified models and pipeline specialists.

Randomness is split into independent streams derived from one seed, so a run
is reproducible bit for bit: parameter initialization, batch shuffling,
dropout masks and augmentation each draw from their own generator.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from core.architectures import build_variant
from core.architectures.base import Architecture, UnifiedModelConfig
from core.architectures.baseline import Kind, PipelineSpec, TemplateModel, template_model
from core.augment import augment_batch
from core.data import encode_labels
from core.losses import (
    ClassWeights,
    LevelTargets,
    LossOptions,
    class_weights,
    model_loss,
    positive_balance_weights,
    smoothed_frequencies,
    weighted_bce,
    weighted_ce,
    weights_from_targets,
)
from core.models import DatasetManifest
from core.nn import AdamState, adam_step, l2_penalty
from core.taxonomy import ATTRIBUTE, SUB_CATEGORY, CategoryTree
from core.tensor import Tape, Tensor, check_gradients, sum_of

logger = logging.getLogger(__name__)

STREAMS = ("init", "shuffle", "dropout", "augment")


@dataclass
class TrainOptions:
    """Optimization settings.

    Attributes:
        epochs: Passes over the training set
        batch_size: Products per Adam step
        learning_rate: Adam step size
        augment_probability: Chance that an image is transformed (image mode)
        seed: Seed of every random stream
        workers: Threads training pipeline specialists
        loss: Loss weighting options
    """
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.001
    augment_probability: float = 0.5
    seed: int = 7
    workers: int = 1
    loss: LossOptions = field(default_factory=LossOptions)


@dataclass
class EpochStats:
    """Training-set figures of one epoch (accuracies measured in train mode)."""
    epoch: int
    loss: float
    category_accuracy: float
    sub_category_accuracy: float

    def log_line(self) -> str:
        return f"{self.epoch}\t{self.loss:.6f}\t{self.category_accuracy:.6f}\t{self.sub_category_accuracy:.6f}"


def training_streams(seed: int, *key: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed, spawn_key=key).spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children)}


def batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _batch_inputs(inputs: np.ndarray, rows: np.ndarray, input_mode: str, options: TrainOptions, rng) -> np.ndarray:
    batch = inputs[rows]
    if input_mode == "images" and options.augment_probability > 0:
        batch = augment_batch(batch, options.augment_probability, rng)
    return batch


StepFn = Callable[[np.ndarray, np.ndarray, np.random.Generator], tuple[Tensor, np.ndarray, np.ndarray | None]]


def _fit(
    params,
    step: StepFn,
    inputs: np.ndarray,
    input_mode: str,
    options: TrainOptions,
    streams: dict[str, np.random.Generator],
    label: str,
) -> list[EpochStats]:
    """Shared epoch loop; ``step`` returns (loss, category hits, sub-category hits)."""
    if options.batch_size < 1 or options.epochs < 1:
        raise ValueError("batch_size and epochs must be at least 1")
    n = len(inputs)
    state = AdamState(learning_rate=options.learning_rate)
    history = []
    for epoch in range(1, options.epochs + 1):
        total, cat_hits, sub_hits = 0.0, 0, 0
        for rows in batches(n, options.batch_size, streams["shuffle"]):
            x = _batch_inputs(inputs, rows, input_mode, options, streams["augment"])
            with Tape() as tape:
                loss, cat_correct, sub_correct = step(x, rows, streams["dropout"])
                grads = tape.gradients(loss, {p.name: p.tensor for p in params})
            adam_step(state, params, grads)
            total += loss.item() * len(rows)
            cat_hits += int(cat_correct.sum())
            sub_hits += int(sub_correct.sum()) if sub_correct is not None else 0
        stats = EpochStats(epoch, total / n, cat_hits / n, sub_hits / n)
        logger.info(
            "%s epoch %d/%d: loss %.4f, category accuracy %.4f, sub-category accuracy %.4f",
            label, epoch, options.epochs, stats.loss, stats.category_accuracy, stats.sub_category_accuracy,
        )
        history.append(stats)
    return history


def build_model(config: UnifiedModelConfig, seed: int) -> Architecture:
    return build_variant(config, training_streams(seed)["init"])


def train_unified(
    model: Architecture,
    manifest: DatasetManifest,
    tree: CategoryTree,
    options: TrainOptions | None = None,
) -> list[EpochStats]:
    """Train all three levels end to end."""
    options = options or TrainOptions()
    streams = training_streams(options.seed)
    targets = encode_labels(manifest, tree)
    sizes = (len(tree.categories), len(tree.sub_categories), len(tree.attributes))
    weights = weights_from_targets(targets, sizes, options.loss)
    params = model.parameters()
    logger.info("Training %s (%d parameters) on %d products", model.name, model.num_parameters, len(manifest))

    def step(x, rows, rng):
        batch = targets.subset(rows)
        output = model.forward(x, "train", rng)
        loss, _ = model_loss(output, batch, weights, l2_penalty(model.regularized_layers()), options.loss)
        cat_correct = np.argmax(output.cat_probs.data, axis=1) == batch.category
        sub_correct = np.argmax(output.sub_probs.data, axis=1) == batch.sub_category
        return loss, cat_correct, sub_correct

    return _fit(params, step, manifest.inputs, manifest.input_mode, options, streams, model.name)


def template_weights(labels: np.ndarray, n_outputs: int, kind: Kind, options: LossOptions) -> np.ndarray:
    n = len(labels)
    if kind == "multiclass":
        return class_weights(smoothed_frequencies(np.bincount(labels, minlength=n_outputs), n))
    frequencies = smoothed_frequencies(labels.sum(axis=0), n, multiclass=False)
    if options.attribute_weighting == "positive_balance":
        return positive_balance_weights(frequencies)
    return class_weights(frequencies, multiclass=False)


def train_template(
    model: TemplateModel,
    inputs: np.ndarray,
    labels: np.ndarray,
    input_mode: str,
    options: TrainOptions,
    streams: dict[str, np.random.Generator],
) -> list[EpochStats]:
    """Train one template model on class indices or a 0/1 label matrix."""
    weights = template_weights(labels, model.n_outputs, model.kind, options.loss)

    def step(x, rows, rng):
        probs = model.forward(x)
        if model.kind == "multiclass":
            loss = weighted_ce(probs, labels[rows], weights)
            correct = np.argmax(probs.data, axis=1) == labels[rows]
        else:
            loss = weighted_bce(probs, labels[rows], weights, options.loss.bce_negative_weighting)
            correct = np.zeros(len(rows), dtype=bool)
        regularized = model.regularized_layers()
        if regularized:
            loss = sum_of([loss, l2_penalty(regularized)])
        return loss, correct, None

    return _fit(model.parameters(), step, inputs, input_mode, options, streams, f"template {model.kind}")


def train_pipeline(
    manifest: DatasetManifest,
    tree: CategoryTree,
    config: UnifiedModelConfig,
    options: TrainOptions | None = None,
) -> PipelineSpec:
    """Train the category model and one specialist pair per category.

    Categories without training products are marked uncovered. Specialists
    only see products of their own category.
    """
    options = options or TrainOptions()
    targets = encode_labels(manifest, tree)
    streams = training_streams(options.seed)
    category_model = template_model(tree.categories, "multiclass", config, streams["init"])
    train_template(category_model, manifest.inputs, targets.category, manifest.input_mode, options, streams)

    def train_specialists(c: int) -> tuple[str, TemplateModel | None, TemplateModel | None]:
        category_id = tree.categories[c]
        rows = np.flatnonzero(targets.category == c)
        if len(rows) == 0:
            return category_id, None, None
        inputs = manifest.inputs[rows]
        local_streams = training_streams(options.seed, 1, c)
        sub_labels = tree.sub_categories_of(category_id)
        sub_model = TemplateModel(sub_labels, "multiclass", config, local_streams["init"], name="sub_category")
        local = {tree.index(SUB_CATEGORY, s): i for i, s in enumerate(sub_labels)}
        sub_targets = np.array([local[s] for s in targets.sub_category[rows]], dtype=np.int64)
        train_template(sub_model, inputs, sub_targets, manifest.input_mode, options, local_streams)

        attribute_model = None
        attribute_labels = tree.attributes_of(category_id)
        if attribute_labels:
            attribute_model = TemplateModel(
                attribute_labels, "multilabel", config, local_streams["init"], name="attribute"
            )
            columns = [tree.index(ATTRIBUTE, a) for a in attribute_labels]
            attribute_targets = targets.attributes[np.ix_(rows, columns)]
            train_template(attribute_model, inputs, attribute_targets, manifest.input_mode, options, local_streams)
        return category_id, sub_model, attribute_model

    with ThreadPoolExecutor(max_workers=max(options.workers, 1)) as pool:
        results = list(pool.map(train_specialists, range(len(tree.categories))))

    spec = PipelineSpec(category_model)
    for category_id, sub_model, attribute_model in results:
        if sub_model is None:
            logger.warning("Category %s has no training products; marking it uncovered", category_id)
            spec.uncovered.add(category_id)
            continue
        spec.sub_models[category_id] = sub_model
        if attribute_model is not None:
            spec.attribute_models[category_id] = attribute_model
    spec.validate(tree)
    return spec


def write_training_log(path: str | Path, history: list[EpochStats]) -> None:
    lines = ["epoch\tloss\tcat_acc\tsub_acc", *(stats.log_line() for stats in history)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def gradient_check(
    model: Architecture,
    inputs: np.ndarray,
    targets: LevelTargets,
    weights: ClassWeights,
    options: LossOptions | None = None,
    dropout_seed: int = 0,
) -> dict[str, float]:
    """Max relative error of tape gradients vs finite differences, per parameter.

    The full training loss (L2 and train-mode dropout included) is checked;
    dropout masks are re-drawn from ``dropout_seed`` at every evaluation.
    """
    params = model.parameters()
    originals = {p.name: p.tensor for p in params}

    def loss_fn(tensors):
        for p in params:
            p.tensor = tensors[p.name]
        output = model.forward(inputs, "train", np.random.default_rng(dropout_seed))
        loss, _ = model_loss(output, targets, weights, l2_penalty(model.regularized_layers()), options)
        return loss

    try:
        return check_gradients(loss_fn, {p.name: p.tensor.data for p in params})
    finally:
        for p in params:
            p.tensor = originals[p.name]
