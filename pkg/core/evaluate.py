"""Orchestrator: load a dataset and trained methods, predict, and score them."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from core.architectures.base import Architecture, ArchitectureError
from core.architectures.baseline import CATEGORY_FILE, PipelineSpec, load_pipeline, pipeline_predict
from core.architectures.unified import load_model
from core.checkpoint import CheckpointError, load_checkpoint
from core.data import ManifestError, attribute_matrix, check_against_tree, encode_labels, read_manifest
from core.metrics import (
    DEFAULT_THRESHOLD,
    AttributeOutcomes,
    CooccurrenceAudit,
    at_k,
    attribute_outcomes,
    attribute_precision,
    attribute_recall,
    audit_cooccurrence,
    average_precision,
    mean_predicted_attributes,
    overall_prf,
    threshold_predict,
)
from core.models import DatasetManifest, Predictions
from core.payloads import PayloadError
from core.report import AttributeScores, EvalReport, LevelScores
from core.taxonomy import CATEGORY, FAMILY, GENDER, CategoryTree, TaxonomyError, load_tree, validate_tree

logger = logging.getLogger(__name__)

PREDICT_BATCH = 256


class EvaluationError(Exception):
    """Error while loading, predicting or scoring."""
    pass


def load_dataset(tree_path: str | Path, manifest_path: str | Path) -> tuple[CategoryTree, DatasetManifest]:
    """Load a tree and a manifest and check that they fit together.

    Raises:
        EvaluationError: If either file is unreadable, the tree is invalid,
            or a record contradicts the tree
    """
    try:
        tree = load_tree(tree_path)
    except TaxonomyError as e:
        raise EvaluationError(f"Cannot load category tree {tree_path}: {e}") from e
    violations = validate_tree(tree)
    if violations:
        listed = "; ".join(f"{v.node_id}: {v.message}" for v in violations[:5])
        raise EvaluationError(f"Category tree {tree_path} is invalid: {listed}")

    try:
        manifest = read_manifest(manifest_path)
    except (ManifestError, PayloadError) as e:
        raise EvaluationError(f"Cannot load manifest {manifest_path}: {e}") from e
    problems = check_against_tree(manifest, tree)
    if problems:
        more = f" (and {len(problems) - 5} more)" if len(problems) > 5 else ""
        raise EvaluationError(
            f"Manifest {manifest_path} does not fit the tree: {'; '.join(problems[:5])}{more}"
        )
    return tree, manifest


def predict_unified(model: Architecture, inputs: np.ndarray, batch_size: int = PREDICT_BATCH) -> Predictions:
    """Eval-mode predictions; each level takes its own argmax."""
    parts = []
    for start in range(0, len(inputs), batch_size):
        output = model.forward(inputs[start:start + batch_size], "eval")
        cat = output.cat_probs.data
        sub = output.sub_probs.data
        rows = np.arange(len(cat))
        category = np.argmax(cat, axis=1)
        sub_category = np.argmax(sub, axis=1)
        parts.append(Predictions(
            category=category,
            sub_category=sub_category,
            category_confidence=cat[rows, category],
            sub_category_confidence=sub[rows, sub_category],
            attribute_scores=output.attr_scores.data.copy(),
        ))
    if not parts:
        raise EvaluationError("Nothing to predict: the input batch is empty")
    return Predictions.concatenate(parts)


@dataclass
class Method:
    """A trained method ready to predict.

    Attributes:
        name: Row label in report tables
        predict: (inputs, oracle category indices or None) -> Predictions
        routes_categories: Whether oracle categories change its behaviour
            (pipelines only)
        input_mode: Inputs the method was trained on
        train_seed: Seed of the train/test split it was trained on, when
            the artifact records one
    """
    name: str
    predict: Callable[[np.ndarray, np.ndarray | None], Predictions]
    routes_categories: bool = False
    input_mode: str = "features"
    train_seed: int | None = None


def unified_method(model: Architecture) -> Method:
    return Method(
        model.name,
        lambda inputs, oracle: predict_unified(model, inputs),
        input_mode=model.config.input_mode,
    )


def pipeline_method(spec: PipelineSpec, tree: CategoryTree) -> Method:
    return Method(
        "Baseline",
        lambda inputs, oracle: pipeline_predict(spec, tree, inputs, oracle),
        routes_categories=True,
        input_mode=spec.category_model.config.input_mode,
    )


def load_method(path: str | Path, tree: CategoryTree, input_mode: str | None = None) -> Method:
    """A unified checkpoint file or a pipeline directory.

    Raises:
        EvaluationError: If the artifact is missing, malformed or was
            trained for another tree or input mode
    """
    path = Path(path)
    if not path.exists():
        raise EvaluationError(f"No checkpoint or pipeline at {path}")
    try:
        if path.is_dir():
            spec = load_pipeline(path, tree)
            config = spec.category_model.config
            method = pipeline_method(spec, tree)
            stored = load_checkpoint(path / CATEGORY_FILE).config
        else:
            model, stored = load_model(path)
            config = model.config
            expected = {"cat": len(tree.categories), "sub": len(tree.sub_categories), "attr": len(tree.attributes)}
            if config.level_sizes() != expected:
                raise EvaluationError(
                    f"{path} was trained for {config.level_sizes()} outputs, but the tree has {expected}"
                )
            method = unified_method(model)
    except (CheckpointError, ArchitectureError) as e:
        raise EvaluationError(f"Cannot load {path}: {e}") from e
    if "train.seed" in stored:
        method.train_seed = int(stored["train.seed"])
    if input_mode is not None and config.input_mode != input_mode:
        raise EvaluationError(f"{path} expects {config.input_mode} inputs, but the manifest holds {input_mode}")
    return method


def _level_scores(y_true: np.ndarray, y_pred: np.ndarray) -> LevelScores:
    return LevelScores(*overall_prf(y_true, y_pred))


def ancestor_indices(tree: CategoryTree, category: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Family and gender indices inferred from category indices."""
    family_of, gender_of = [], []
    for category_id in tree.categories:
        family, gender = tree.category_ancestors(category_id)
        family_of.append(tree.index(FAMILY, family))
        gender_of.append(tree.index(GENDER, gender))
    category = np.asarray(category, dtype=np.int64)
    return np.asarray(family_of)[category], np.asarray(gender_of)[category]


def attribute_scores(
    scores: np.ndarray,
    annotations: np.ndarray,
    hidden: np.ndarray | None,
    threshold: float,
) -> AttributeScores:
    predicted = threshold_predict(scores, threshold)
    if annotations.any():
        op, or_, of1 = overall_prf(annotations, predicted)
    else:
        op = or_ = of1 = None
    p_at_k, r_at_k, f1_at_k = at_k(scores, annotations)
    return AttributeScores(
        op=op,
        or_=or_,
        of1=of1,
        p_at_k=p_at_k,
        r_at_k=r_at_k,
        f1_at_k=f1_at_k,
        ap=average_precision(scores, annotations),
        mean_predicted=mean_predicted_attributes(predicted),
        mean_annotated=mean_predicted_attributes(annotations),
        precision_annotations=attribute_precision(predicted, annotations),
        recall_annotations=attribute_recall(predicted, annotations),
        precision_hidden=None if hidden is None else attribute_precision(predicted, hidden),
        recall_hidden=None if hidden is None else attribute_recall(predicted, hidden),
    )


def evaluate_predictions(
    method: str,
    predictions: Predictions,
    manifest: DatasetManifest,
    tree: CategoryTree,
    threshold: float = DEFAULT_THRESHOLD,
    oracle_category: bool = False,
    slice_id: str | None = None,
    report_coverage: bool = False,
) -> EvalReport:
    """Score predictions against the manifest's labels.

    Uncovered products are skipped; with ``report_coverage`` the covered
    fraction is recorded. ``slice_id`` restricts scoring to products whose
    true category is that id.
    """
    if len(predictions) != len(manifest):
        raise EvaluationError(f"{len(predictions)} predictions for {len(manifest)} products")
    targets = encode_labels(manifest, tree)
    rows = np.arange(len(manifest))
    if slice_id is not None:
        if slice_id not in tree.categories:
            raise EvaluationError(f"Slice {slice_id!r} is not a category of the tree")
        rows = np.flatnonzero(targets.category == tree.index(CATEGORY, slice_id))
        if rows.size == 0:
            raise EvaluationError(f"No products of category {slice_id!r} in the evaluation set")

    coverage = float(predictions.covered[rows].mean()) if report_coverage else None
    rows = rows[predictions.covered[rows]]
    if rows.size == 0:
        raise EvaluationError(f"{method} covers none of the evaluated products")

    predicted = predictions.subset(rows)
    true_category = targets.category[rows]
    true_family, true_gender = ancestor_indices(tree, true_category)
    pred_family, pred_gender = ancestor_indices(tree, predicted.category)

    annotations = attribute_matrix(manifest, tree)[rows]
    hidden = attribute_matrix(manifest, tree, hidden=True)[rows] if manifest.has_hidden_truth else None
    audit = audit_cooccurrence(
        predicted.category, predicted.sub_category,
        threshold_predict(predicted.attribute_scores, threshold), tree,
    )
    report = EvalReport(
        method=method,
        n_products=int(rows.size),
        threshold=threshold,
        category=_level_scores(true_category, predicted.category),
        sub_category=_level_scores(targets.sub_category[rows], predicted.sub_category),
        attribute=attribute_scores(predicted.attribute_scores, annotations, hidden, threshold),
        family=_level_scores(true_family, pred_family),
        gender=_level_scores(true_gender, pred_gender),
        inconsistency_rate=audit.rate,
        coverage=coverage,
        oracle_category=oracle_category,
        slice=slice_id,
    )
    logger.info(
        "%s on %d products: category OF1 %.4f, sub-category OF1 %.4f",
        method, report.n_products, report.category.of1, report.sub_category.of1,
    )
    return report


def evaluate_methods(
    methods: list[Method],
    manifest: DatasetManifest,
    tree: CategoryTree,
    threshold: float = DEFAULT_THRESHOLD,
    oracle_category: bool = False,
    slices: list[str] | None = None,
) -> list[EvalReport]:
    """One report per method on the whole set, then one per method and slice."""
    if len(manifest) == 0:
        raise EvaluationError("The evaluation set is empty")
    targets = encode_labels(manifest, tree)
    reports = []
    predictions = []
    for method in methods:
        oracle = targets.category if oracle_category and method.routes_categories else None
        predictions.append((method.predict(manifest.inputs, oracle), oracle is not None))

    for slice_id in [None, *(slices or [])]:
        for method, (predicted, used_oracle) in zip(methods, predictions):
            reports.append(evaluate_predictions(
                method.name, predicted, manifest, tree, threshold,
                oracle_category=used_oracle,
                slice_id=slice_id,
                report_coverage=method.routes_categories,
            ))
    return reports


@dataclass
class AuditResult:
    """Consistency and attribute-count audit of one method's predictions."""
    method: str
    cooccurrence: CooccurrenceAudit
    mean_predicted: float
    mean_annotated: float
    outcomes: AttributeOutcomes | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "cooccurrence": self.cooccurrence.to_dict(),
            "mean_predicted": self.mean_predicted,
            "mean_annotated": self.mean_annotated,
            "outcomes": None if self.outcomes is None else self.outcomes.to_dict(),
        }


def audit_predictions(
    method: str,
    predictions: Predictions,
    manifest: DatasetManifest,
    tree: CategoryTree,
    threshold: float = DEFAULT_THRESHOLD,
) -> AuditResult:
    covered = predictions.covered
    predicted = threshold_predict(predictions.attribute_scores, threshold)
    annotations = attribute_matrix(manifest, tree)
    outcomes = None
    if manifest.has_hidden_truth:
        outcomes = attribute_outcomes(
            predictions.attribute_scores[covered],
            annotations[covered],
            attribute_matrix(manifest, tree, hidden=True)[covered],
            threshold,
        )
    return AuditResult(
        method=method,
        cooccurrence=audit_cooccurrence(predictions.category, predictions.sub_category, predicted, tree),
        mean_predicted=mean_predicted_attributes(predicted[covered]),
        mean_annotated=mean_predicted_attributes(annotations[covered]),
        outcomes=outcomes,
    )


def render_audit(result: AuditResult, limit: int = 10) -> str:
    audit = result.cooccurrence
    lines = [
        f"Method: {result.method}",
        f"Inconsistent pairs: {audit.inconsistent} of {audit.total} ({100.0 * audit.rate:.2f}%)",
        f"Attributes per product: {result.mean_predicted:.2f} predicted, {result.mean_annotated:.2f} annotated",
    ]
    if result.outcomes is not None:
        o = result.outcomes
        lines.append(
            f"Attribute predictions: {o.correct} correct, {o.incorrect} incorrect, "
            f"{o.recovered} recovered, {o.low_confidence} low-confidence"
        )
    for category, other, count in audit.pairs[:limit]:
        lines.append(f"  {category} + {other}: {count}")
    if len(audit.pairs) > limit:
        lines.append(f"  ... {len(audit.pairs) - limit} more pairs")
    return "\n".join(lines)
