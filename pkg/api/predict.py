"""HTTP prediction endpoint for a trained model or pipeline."""

import os
import sys
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from flask import Flask, jsonify, request

# Add the project root to the path so we can import core modules
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.data import ManifestError, read_manifest
from core.evaluate import EvaluationError, Method, load_method
from core.metrics import DEFAULT_THRESHOLD
from core.models import DatasetManifest
from core.payloads import PayloadError
from core.predict import prediction_rows
from core.taxonomy import CategoryTree, TaxonomyError, load_tree

app = Flask(__name__)


@dataclass
class Service:
    tree: CategoryTree
    method: Method
    manifest: DatasetManifest | None = None


@lru_cache(maxsize=1)
def load_service() -> Service:
    """Load the artifacts named by HPC_CHECKPOINT, HPC_TREE and HPC_MANIFEST once."""
    checkpoint = os.environ.get("HPC_CHECKPOINT")
    tree_path = os.environ.get("HPC_TREE")
    if not checkpoint or not tree_path:
        raise EvaluationError("HPC_CHECKPOINT and HPC_TREE must be set")
    try:
        tree = load_tree(tree_path)
    except TaxonomyError as e:
        raise EvaluationError(f"Cannot load category tree: {e}") from e

    manifest = None
    manifest_path = os.environ.get("HPC_MANIFEST")
    if manifest_path:
        try:
            manifest = read_manifest(manifest_path)
        except (ManifestError, PayloadError) as e:
            raise EvaluationError(f"Cannot load manifest: {e}") from e

    method = load_method(checkpoint, tree, manifest.input_mode if manifest else None)
    return Service(tree=tree, method=method, manifest=manifest)


class RequestError(ValueError):
    """Raised for a request body that cannot be turned into inputs."""
    pass


def resolve_inputs(data: dict, service: Service) -> tuple[np.ndarray, list[str]]:
    if "features" in data:
        if service.method.input_mode != "features":
            raise RequestError("This model expects images; send product_ids instead of features")
        try:
            features = np.asarray(data["features"], dtype=np.float64)
        except (TypeError, ValueError):
            raise RequestError("'features' must be a list of equal-length number lists") from None
        if features.ndim != 2 or len(features) == 0:
            raise RequestError("'features' must be a non-empty list of equal-length number lists")
        return features, [str(i) for i in range(len(features))]

    if "product_ids" in data:
        if service.manifest is None:
            raise RequestError("No manifest is configured (set HPC_MANIFEST) to look up product ids")
        wanted = data["product_ids"]
        if not isinstance(wanted, list) or not wanted:
            raise RequestError("'product_ids' must be a non-empty list")
        position = {pid: i for i, pid in enumerate(service.manifest.product_ids)}
        missing = [pid for pid in wanted if pid not in position]
        if missing:
            raise RequestError(f"Unknown product ids: {', '.join(map(str, missing[:5]))}")
        rows = [position[pid] for pid in wanted]
        return service.manifest.inputs[rows], [str(pid) for pid in wanted]

    raise RequestError("Request body needs 'features' or 'product_ids'")


@app.route("/api/predict", methods=["POST"])
def predict():
    """Predict category, sub-category, attributes and inferred family/gender.

    Accepts JSON: {"features": [[...], ...]} or {"product_ids": [...]},
    with an optional "threshold".
    """
    try:
        data = request.get_json(silent=True)
        if not isinstance(data, dict):
            return jsonify({"error": "Expected a JSON object body"}), 400
        threshold = float(data.get("threshold", DEFAULT_THRESHOLD))
        if not 0.0 <= threshold < 1.0:
            return jsonify({"error": "threshold must be in [0, 1)"}), 400

        service = load_service()
        inputs, product_ids = resolve_inputs(data, service)
        predictions = service.method.predict(inputs, None)
        rows = prediction_rows(predictions, service.tree, product_ids, threshold)
        return jsonify({"method": service.method.name, "predictions": [r.to_dict() for r in rows]})

    except (RequestError, ValueError) as e:
        return jsonify({"error": str(e)}), 400
    except EvaluationError as e:
        return jsonify({"error": str(e)}), 500
    except Exception as e:
        return jsonify({"error": f"Internal error: {e}"}), 500
