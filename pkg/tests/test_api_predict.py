"""Tests for api/predict.py."""

import sys
from pathlib import Path
from unittest.mock import patch

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest
from tests.conftest import TOY_TREE, make_manifest, make_tree

from api.predict import Service, app, load_service
from core.architectures.base import UnifiedModelConfig
from core.architectures.unified import UnifiedModel, save_model
from core.data import write_manifest
from core.evaluate import EvaluationError, unified_method

CONFIG = UnifiedModelConfig(
    backbone_dim=4, feature_dim=4, hidden_dim=8, n_categories=3, n_sub_categories=5, n_attributes=3,
)


@pytest.fixture
def client():
    app.config["TESTING"] = True
    with app.test_client() as c:
        yield c


@pytest.fixture
def service():
    model = UnifiedModel(CONFIG, np.random.default_rng(0))
    return Service(tree=make_tree(), method=unified_method(model), manifest=make_manifest())


class TestPredictEndpoint:
    def test_features(self, client, service):
        with patch("api.predict.load_service", return_value=service):
            response = client.post("/api/predict", json={"features": [[0.1, 0.2, 0.3, 0.4], [1, 0, 0, 0]]})
        assert response.status_code == 200
        data = response.get_json()
        assert data["method"] == "Final model"
        assert [p["id"] for p in data["predictions"]] == ["0", "1"]
        first = data["predictions"][0]
        assert first["category"] in ("dress", "top", "bag")
        assert first["gender"] == "women"
        assert set(first) == {
            "id", "category", "sub_category", "family", "gender",
            "category_confidence", "sub_category_confidence", "attributes",
        }

    def test_product_ids(self, client, service):
        with patch("api.predict.load_service", return_value=service):
            response = client.post("/api/predict", json={"product_ids": ["p004", "p001"], "threshold": 0.0})
        assert response.status_code == 200
        predictions = response.get_json()["predictions"]
        assert [p["id"] for p in predictions] == ["p004", "p001"]
        # every sigmoid score is above zero
        assert len(predictions[0]["attributes"]) == 3

    def test_unknown_product_id(self, client, service):
        with patch("api.predict.load_service", return_value=service):
            response = client.post("/api/predict", json={"product_ids": ["p999"]})
        assert response.status_code == 400
        assert "p999" in response.get_json()["error"]

    def test_product_ids_without_manifest(self, client, service):
        service.manifest = None
        with patch("api.predict.load_service", return_value=service):
            response = client.post("/api/predict", json={"product_ids": ["p000"]})
        assert response.status_code == 400
        assert "HPC_MANIFEST" in response.get_json()["error"]

    def test_ragged_features(self, client, service):
        with patch("api.predict.load_service", return_value=service):
            response = client.post("/api/predict", json={"features": [[1, 2, 3, 4], [1]]})
        assert response.status_code == 400

    def test_wrong_feature_width(self, client, service):
        """A shape error from the encoder is the caller's fault."""
        with patch("api.predict.load_service", return_value=service):
            response = client.post("/api/predict", json={"features": [[1, 2]]})
        assert response.status_code == 400
        assert "(batch, 4)" in response.get_json()["error"]

    def test_missing_inputs(self, client, service):
        with patch("api.predict.load_service", return_value=service):
            response = client.post("/api/predict", json={"threshold": 0.5})
        assert response.status_code == 400
        assert "'features' or 'product_ids'" in response.get_json()["error"]

    def test_bad_threshold(self, client):
        response = client.post("/api/predict", json={"features": [[0, 0, 0, 0]], "threshold": 1.5})
        assert response.status_code == 400
        assert "threshold" in response.get_json()["error"]

    def test_not_json(self, client):
        response = client.post("/api/predict", data="hello", content_type="text/plain")
        assert response.status_code == 400
        assert response.get_json()["error"] == "Expected a JSON object body"

    def test_service_unavailable(self, client):
        with patch("api.predict.load_service", side_effect=EvaluationError("HPC_CHECKPOINT and HPC_TREE must be set")):
            response = client.post("/api/predict", json={"features": [[0, 0, 0, 0]]})
        assert response.status_code == 500
        assert "HPC_CHECKPOINT" in response.get_json()["error"]

    def test_unexpected_error(self, client, service):
        with patch("api.predict.load_service", return_value=service):
            with patch("api.predict.prediction_rows", side_effect=RuntimeError("boom")):
                response = client.post("/api/predict", json={"features": [[0, 0, 0, 0]]})
        assert response.status_code == 500
        assert response.get_json()["error"] == "Internal error: boom"


class TestLoadService:
    @pytest.fixture(autouse=True)
    def fresh_cache(self):
        load_service.cache_clear()
        yield
        load_service.cache_clear()

    def test_from_environment(self, tmp_path, monkeypatch):
        (tmp_path / "tree.tsv").write_text(TOY_TREE)
        save_model(tmp_path / "model.ckpt", UnifiedModel(CONFIG, np.random.default_rng(0)))
        write_manifest(tmp_path / "manifest.tsv", make_manifest())
        monkeypatch.setenv("HPC_TREE", str(tmp_path / "tree.tsv"))
        monkeypatch.setenv("HPC_CHECKPOINT", str(tmp_path / "model.ckpt"))
        monkeypatch.setenv("HPC_MANIFEST", str(tmp_path / "manifest.tsv"))

        service = load_service()
        assert service.method.name == "Final model"
        assert service.manifest.product_ids[0] == "p000"
        assert load_service() is service

    def test_unset_environment(self, monkeypatch):
        monkeypatch.delenv("HPC_CHECKPOINT", raising=False)
        monkeypatch.delenv("HPC_TREE", raising=False)
        with pytest.raises(EvaluationError, match="must be set"):
            load_service()

    def test_bad_tree(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HPC_TREE", str(tmp_path / "none.tsv"))
        monkeypatch.setenv("HPC_CHECKPOINT", str(tmp_path / "model.ckpt"))
        with pytest.raises(EvaluationError, match="Cannot load category tree"):
            load_service()
