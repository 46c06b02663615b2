"""Tests for dataset loading, method loading and scoring."""

from dataclasses import replace

import numpy as np
import pytest
from tests.conftest import TOY_TREE, make_manifest, perfect_predictions

from core.architectures.base import UnifiedModelConfig
from core.architectures.baseline import PipelineSpec, TemplateModel, save_pipeline
from core.architectures.unified import UnifiedModel, save_model
from core.data import write_manifest
from core.evaluate import (
    EvaluationError,
    Method,
    ancestor_indices,
    audit_predictions,
    evaluate_methods,
    evaluate_predictions,
    load_dataset,
    load_method,
    predict_unified,
    render_audit,
)
from core.models import UNCOVERED

TOY_CONFIG = UnifiedModelConfig(
    backbone_dim=4, feature_dim=4, hidden_dim=8, n_categories=3, n_sub_categories=5, n_attributes=3,
)


def toy_model(**overrides) -> UnifiedModel:
    return UnifiedModel(replace(TOY_CONFIG, **overrides), np.random.default_rng(0))


def fixed_method(predictions, name="Fixed", routes=False, calls=None) -> Method:
    def predict(inputs, oracle):
        if calls is not None:
            calls.append(oracle)
        return predictions
    return Method(name, predict, routes_categories=routes)


class TestLoadDataset:
    def test_valid(self, manifest, tmp_path):
        (tmp_path / "tree.tsv").write_text(TOY_TREE)
        write_manifest(tmp_path / "manifest.tsv", manifest)
        tree, loaded = load_dataset(tmp_path / "tree.tsv", tmp_path / "manifest.tsv")
        assert tree.categories == ["dress", "top", "bag"]
        assert len(loaded) == 6

    def test_invalid_tree(self, manifest, tmp_path):
        (tmp_path / "tree.tsv").write_text(TOY_TREE + "category\tshoe\tShoes\taccessories\n")
        write_manifest(tmp_path / "manifest.tsv", manifest)
        with pytest.raises(EvaluationError, match="is invalid: shoe"):
            load_dataset(tmp_path / "tree.tsv", tmp_path / "manifest.tsv")

    def test_manifest_outside_tree(self, tmp_path):
        (tmp_path / "tree.tsv").write_text(TOY_TREE)
        write_manifest(tmp_path / "manifest.tsv", make_manifest([("bag", "blouse", set(), set())]))
        with pytest.raises(EvaluationError, match="does not fit the tree"):
            load_dataset(tmp_path / "tree.tsv", tmp_path / "manifest.tsv")

    def test_missing_files(self, tmp_path):
        with pytest.raises(EvaluationError, match="Cannot load category tree"):
            load_dataset(tmp_path / "tree.tsv", tmp_path / "manifest.tsv")
        (tmp_path / "tree.tsv").write_text(TOY_TREE)
        with pytest.raises(EvaluationError, match="Cannot load manifest"):
            load_dataset(tmp_path / "tree.tsv", tmp_path / "manifest.tsv")


class TestPredictUnified:
    def test_batched_matches_whole(self, manifest):
        model = toy_model()
        whole = predict_unified(model, manifest.inputs)
        batched = predict_unified(model, manifest.inputs, batch_size=4)
        np.testing.assert_array_equal(whole.category, batched.category)
        np.testing.assert_allclose(batched.attribute_scores, whole.attribute_scores)

    def test_confidences_are_argmax_probabilities(self, manifest):
        predictions = predict_unified(toy_model(), manifest.inputs)
        assert predictions.covered.all()
        assert ((predictions.category_confidence > 1 / 3 - 1e-12) & (predictions.category_confidence <= 1)).all()

    def test_empty(self):
        with pytest.raises(EvaluationError, match="empty"):
            predict_unified(toy_model(), np.zeros((0, 4)))


class TestLoadMethod:
    def test_unified_checkpoint(self, tree, tmp_path):
        save_model(tmp_path / "model.ckpt", toy_model())
        method = load_method(tmp_path / "model.ckpt", tree, "features")
        assert method.name == "Final model"
        assert not method.routes_categories
        assert method.input_mode == "features"
        assert method.train_seed is None

    def test_recorded_training_seed(self, tree, tmp_path):
        save_model(tmp_path / "model.ckpt", toy_model(), {"train.seed": "11"})
        assert load_method(tmp_path / "model.ckpt", tree).train_seed == 11

    def test_wrong_tree(self, tree, tmp_path):
        save_model(tmp_path / "model.ckpt", toy_model(n_attributes=4))
        with pytest.raises(EvaluationError, match="outputs"):
            load_method(tmp_path / "model.ckpt", tree)

    def test_wrong_input_mode(self, tree, tmp_path):
        save_model(tmp_path / "model.ckpt", toy_model())
        with pytest.raises(EvaluationError, match="expects features inputs"):
            load_method(tmp_path / "model.ckpt", tree, "images")

    def test_pipeline_directory(self, tree, tmp_path):
        rng = np.random.default_rng(0)
        spec = PipelineSpec(
            TemplateModel(tree.categories, "multiclass", TOY_CONFIG, rng),
            uncovered=set(tree.categories),
        )
        save_pipeline(tmp_path / "pipeline", spec, {"train.seed": "3"})
        method = load_method(tmp_path / "pipeline", tree)
        assert method.name == "Baseline"
        assert method.routes_categories
        assert method.train_seed == 3

    def test_missing(self, tree, tmp_path):
        with pytest.raises(EvaluationError, match="No checkpoint"):
            load_method(tmp_path / "gone.ckpt", tree)

    def test_not_a_checkpoint(self, tree, tmp_path):
        (tmp_path / "model.ckpt").write_text("hello")
        with pytest.raises(EvaluationError, match="Cannot load"):
            load_method(tmp_path / "model.ckpt", tree)


class TestEvaluatePredictions:
    def test_perfect(self, manifest, tree):
        report = evaluate_predictions("Perfect", perfect_predictions(manifest, tree), manifest, tree)
        assert report.n_products == 6
        for level in (report.category, report.sub_category, report.family, report.gender):
            assert (level.op, level.or_, level.of1) == (1.0, 1.0, 1.0)
        assert report.attribute.of1 == pytest.approx(1.0)
        assert report.attribute.ap == pytest.approx(1.0)
        assert report.inconsistency_rate == 0.0
        assert report.coverage is None

    def test_hidden_truth_scores(self, manifest, tree):
        attribute = evaluate_predictions("Perfect", perfect_predictions(manifest, tree), manifest, tree).attribute
        assert attribute.mean_predicted == pytest.approx(4 / 6)
        assert attribute.mean_annotated == pytest.approx(4 / 6)
        assert attribute.precision_hidden == 1.0
        assert attribute.recall_hidden == pytest.approx(4 / 6)
        assert attribute.recall_annotations == 1.0

    def test_no_hidden_truth(self, tree):
        manifest = make_manifest(hidden=False)
        attribute = evaluate_predictions("Perfect", perfect_predictions(manifest, tree), manifest, tree).attribute
        assert attribute.precision_hidden is None
        assert attribute.recall_hidden is None

    def test_threshold_is_strict(self, manifest, tree):
        predictions = perfect_predictions(manifest, tree, attribute_score=0.75)
        attribute = evaluate_predictions("At threshold", predictions, manifest, tree).attribute
        assert attribute.mean_predicted == 0.0

    def test_wrong_family_counts(self, manifest, tree):
        predictions = perfect_predictions(manifest, tree)
        # a dress predicted as a bag: wrong family, right gender
        predictions.category[0] = 2
        report = evaluate_predictions("One miss", predictions, manifest, tree)
        assert report.family.or_ == pytest.approx(5 / 6)
        assert report.gender.of1 == 1.0
        assert report.inconsistency_rate > 0.0

    def test_slice(self, manifest, tree):
        report = evaluate_predictions(
            "Perfect", perfect_predictions(manifest, tree), manifest, tree, slice_id="dress",
        )
        assert report.n_products == 2
        assert report.slice == "dress"

    def test_unknown_slice(self, manifest, tree):
        with pytest.raises(EvaluationError, match="not a category"):
            evaluate_predictions("P", perfect_predictions(manifest, tree), manifest, tree, slice_id="shoe")

    def test_coverage(self, manifest, tree):
        predictions = perfect_predictions(manifest, tree)
        predictions.covered = np.array([True, True, True, True, False, False])
        predictions.sub_category[4:] = UNCOVERED
        report = evaluate_predictions("Pipeline", predictions, manifest, tree, report_coverage=True)
        assert report.coverage == pytest.approx(4 / 6)
        assert report.n_products == 4

    def test_nothing_covered(self, manifest, tree):
        predictions = perfect_predictions(manifest, tree)
        predictions.covered = np.zeros(6, dtype=bool)
        with pytest.raises(EvaluationError, match="covers none"):
            evaluate_predictions("Pipeline", predictions, manifest, tree)

    def test_length_mismatch(self, manifest, tree):
        predictions = perfect_predictions(manifest, tree).subset([0, 1])
        with pytest.raises(EvaluationError, match="2 predictions for 6 products"):
            evaluate_predictions("P", predictions, manifest, tree)


class TestEvaluateMethods:
    def test_whole_set_then_slices(self, manifest, tree):
        predictions = perfect_predictions(manifest, tree)
        methods = [fixed_method(predictions, "A"), fixed_method(predictions, "B")]
        reports = evaluate_methods(methods, manifest, tree, slices=["bag"])
        assert [(r.method, r.slice) for r in reports] == [("A", None), ("B", None), ("A", "bag"), ("B", "bag")]

    def test_oracle_reaches_routing_methods_only(self, manifest, tree):
        predictions = perfect_predictions(manifest, tree)
        unified_calls, pipeline_calls = [], []
        methods = [
            fixed_method(predictions, "Unified", calls=unified_calls),
            fixed_method(predictions, "Baseline", routes=True, calls=pipeline_calls),
        ]
        reports = evaluate_methods(methods, manifest, tree, oracle_category=True)
        assert unified_calls == [None]
        assert pipeline_calls[0].tolist() == [0, 0, 1, 1, 2, 2]
        assert [r.oracle_category for r in reports] == [False, True]
        assert reports[1].coverage == 1.0

    def test_empty_set(self, manifest, tree):
        with pytest.raises(EvaluationError, match="empty"):
            evaluate_methods([], manifest.subset([]), tree)


class TestAncestors:
    def test_family_and_gender(self, tree):
        family, gender = ancestor_indices(tree, np.array([0, 1, 2]))
        assert family.tolist() == [0, 0, 1]
        assert gender.tolist() == [0, 0, 0]


class TestAudit:
    def test_perfect(self, manifest, tree):
        result = audit_predictions("Perfect", perfect_predictions(manifest, tree), manifest, tree)
        assert result.cooccurrence.total == 10
        assert result.cooccurrence.inconsistent == 0
        assert result.outcomes.to_dict() == {"correct": 4, "incorrect": 0, "recovered": 0, "low_confidence": 0}
        assert result.to_dict()["mean_predicted"] == pytest.approx(4 / 6)

    def test_recovered_attributes(self, manifest, tree):
        predictions = perfect_predictions(manifest, tree)
        # t-shirt is sleeveless in the hidden truth only
        predictions.attribute_scores[2, 0] = 0.95
        result = audit_predictions("Probe", predictions, manifest, tree)
        assert result.outcomes.recovered == 1
        assert result.mean_predicted > result.mean_annotated

    def test_render(self, manifest, tree):
        predictions = perfect_predictions(manifest, tree)
        predictions.category[4] = 0
        text = render_audit(audit_predictions("Broken", predictions, manifest, tree))
        assert text.splitlines()[0] == "Method: Broken"
        assert "Inconsistent pairs: 2 of 10 (20.00%)" in text
        assert "  dress + handbag: 1" in text
        assert "  dress + leather: 1" in text
