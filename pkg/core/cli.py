"""Command-line entry point.

Usage::

    hpc generate [--out DIR]
    hpc train [--variant final|no_mp|backbone_indep|baseline]
    hpc evaluate [--compare PATH ...] [--slice CATEGORY ...] [--oracle-category]
    hpc predict [--inputs SIDECAR]
    hpc audit
    hpc params [--paper-defaults]
    hpc stats

Settings are resolved in order: defaults, ``--config`` file, flags, then
``--set key=value`` overrides. Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from core.architectures.base import ArchitectureError, UnifiedModelConfig
from core.architectures.baseline import save_pipeline
from core.architectures.unified import RESNET50_PARAMETERS, count_parameters, save_model
from core.checkpoint import CheckpointError
from core.config import ConfigError, RunConfig, apply_overrides, load_config, parse_assignment
from core.data import ManifestError, read_manifest, read_sidecar, split, stats
from core.evaluate import (
    EvaluationError,
    Method,
    audit_predictions,
    evaluate_methods,
    load_dataset,
    load_method,
    render_audit,
)
from core.generate import GeneratorError, generate, save_dataset
from core.losses import WeightError
from core.models import DatasetManifest
from core.nn import TrainingError
from core.payloads import PayloadError
from core.predict import TSV_HEADER, prediction_rows
from core.report import ReportError, dumps, render_reports, render_table
from core.taxonomy import TaxonomyError
from core.tensor import ContractError, ShapeError
from core.train import build_model, train_pipeline, train_unified, write_training_log

logger = logging.getLogger(__name__)

COMMANDS = ("generate", "train", "evaluate", "predict", "audit", "params", "stats")
VARIANTS = ("final", "no_mp", "backbone_indep", "baseline")

HANDLED_ERRORS = (
    EvaluationError,
    ConfigError,
    GeneratorError,
    ArchitectureError,
    CheckpointError,
    TaxonomyError,
    ManifestError,
    PayloadError,
    WeightError,
    TrainingError,
    ReportError,
    ContractError,
    ShapeError,
)

# flag dest -> RunConfig field
_FLAG_FIELDS = {
    "seed": "seed",
    "variant": "variant",
    "threshold": "threshold",
    "tree": "tree",
    "manifest": "manifest",
    "checkpoint": "checkpoint",
    "pipeline": "pipeline",
    "report": "report",
    "out": "data_dir",
    "epochs": "epochs",
    "hidden_dim": "hidden_dim",
    "input_mode": "input_mode",
    "inputs": "inputs",
    "split": "split",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Path to a key = value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="Override any config key (repeatable)")
    common.add_argument("--seed", type=int)
    common.add_argument("--variant", choices=VARIANTS)
    common.add_argument("--threshold", type=float, help="Attribute score threshold (default 0.75)")
    common.add_argument("--tree", help="Category tree file")
    common.add_argument("--manifest", help="Dataset manifest file")
    common.add_argument("--checkpoint", help="Unified model checkpoint")
    common.add_argument("--pipeline", help="Pipeline baseline directory")
    common.add_argument("--report", help="Where to write the JSON report")
    common.add_argument("--out", help="Output directory of generate")
    common.add_argument("--epochs", type=int)
    common.add_argument("--hidden-dim", type=int)
    common.add_argument("--input-mode", choices=("features", "images"))
    common.add_argument("--inputs", help="Payload sidecar to predict instead of the manifest")
    common.add_argument("--split", choices=("train", "test", "all"), help="Part of the manifest to evaluate")
    common.add_argument("--oracle-category", action="store_true",
                        help="Route the baseline with ground-truth categories")
    common.add_argument("--slice", action="append", default=[], metavar="CATEGORY",
                        help="Also report metrics restricted to one category (repeatable)")
    common.add_argument("--compare", action="append", default=[], metavar="PATH",
                        help="Checkpoint or pipeline directory to evaluate (repeatable)")
    common.add_argument("--paper-defaults", "--full-scale", dest="full_scale", action="store_true",
                        help="params: count the full-size configuration plus a ResNet-50 backbone")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(
        prog="hpc",
        description="Hierarchical product classification: generate, train, evaluate and audit.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        commands.add_parser(command, parents=[common])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {"command": args.command}
    for dest, key in _FLAG_FIELDS.items():
        value = getattr(args, dest)
        if value is not None:
            overrides[key] = str(value)
    if args.oracle_category:
        overrides["oracle_category"] = "true"
    if args.full_scale:
        overrides["full_scale"] = "true"
    if args.slice:
        overrides["slices"] = ",".join(args.slice)
    if args.compare:
        overrides["compare"] = ",".join(args.compare)
    config = apply_overrides(config, overrides)
    return apply_overrides(config, dict(parse_assignment(item) for item in args.set))


def split_seed(methods: list[Method], config: RunConfig) -> int:
    """Seed of the split the methods were trained on, else the configured seed."""
    recorded = {m.train_seed for m in methods if m.train_seed is not None}
    if len(recorded) > 1:
        raise ConfigError(f"The methods were trained on different splits (seeds {sorted(recorded)})")
    if not recorded:
        return config.seed
    seed = recorded.pop()
    if seed != config.seed:
        logger.warning("Splitting with seed %d recorded at training time instead of %d", seed, config.seed)
    return seed


def select_split(manifest: DatasetManifest, config: RunConfig, seed: int) -> DatasetManifest:
    if config.split == "all":
        return manifest
    if config.split not in ("train", "test"):
        raise ConfigError(f"split must be train, test or all, got {config.split!r}")
    train, test = split(manifest, config.train_fraction, seed)
    return train if config.split == "train" else test


def fit_to_manifest(config: RunConfig, manifest: DatasetManifest) -> RunConfig:
    """Take input mode and input shape from the data rather than the config."""
    shape = {"input_mode": manifest.input_mode}
    if manifest.input_mode == "features":
        shape["feature_dim"] = str(manifest.inputs.shape[1])
    else:
        shape["image_size"] = str(manifest.inputs.shape[1])
    fitted = apply_overrides(config, shape)
    if fitted != config:
        logger.info("Using %s inputs of shape %s from the manifest", manifest.input_mode, manifest.inputs.shape[1:])
    return fitted


def cmd_generate(config: RunConfig) -> None:
    tree, manifest = generate(config.generator_config())
    tree_path, manifest_path = save_dataset(config.data_dir, tree, manifest)
    print(f"Wrote {tree_path}")
    print(f"Wrote {manifest_path} ({len(manifest)} products)")


def cmd_train(config: RunConfig) -> None:
    tree, manifest = load_dataset(config.tree, config.manifest)
    config = fit_to_manifest(config, manifest)
    train, _ = split(manifest, config.train_fraction, config.seed)
    options = config.train_options()

    if config.variant == "baseline":
        spec = train_pipeline(train, tree, config.model_config_for(tree, "final"), options)
        save_pipeline(config.pipeline, spec, {"train.seed": str(config.seed), "train.epochs": str(config.epochs)})
        print(f"Wrote pipeline to {config.pipeline} ({len(spec.sub_models)} covered categories)")
        return

    model = build_model(config.model_config_for(tree), config.seed)
    history = train_unified(model, train, tree, options)
    save_model(config.checkpoint, model, {"train.seed": str(config.seed), "train.epochs": str(config.epochs)})
    log_path = Path(f"{config.checkpoint}.log")
    write_training_log(log_path, history)
    for epoch in history:
        print(epoch.log_line())
    print(f"Wrote {config.checkpoint} and {log_path}")


def _artifacts(config: RunConfig) -> list[str]:
    if config.compare_paths:
        return config.compare_paths
    return [config.pipeline if config.variant == "baseline" else config.checkpoint]


def cmd_evaluate(config: RunConfig) -> None:
    tree, manifest = load_dataset(config.tree, config.manifest)
    methods = [load_method(path, tree, manifest.input_mode) for path in _artifacts(config)]
    part = select_split(manifest, config, split_seed(methods, config))
    reports = evaluate_methods(
        methods, part, tree, config.threshold, config.oracle_category, config.slice_ids
    )
    Path(config.report).write_text(dumps(reports), encoding="utf-8")
    print(render_reports(reports))
    print(f"\nWrote {config.report}")


def cmd_audit(config: RunConfig) -> None:
    tree, manifest = load_dataset(config.tree, config.manifest)
    methods = [load_method(path, tree, manifest.input_mode) for path in _artifacts(config)]
    part = select_split(manifest, config, split_seed(methods, config))
    results = []
    for method in methods:
        predictions = method.predict(part.inputs, None)
        results.append(audit_predictions(method.name, predictions, part, tree, config.threshold))
    document = {"audits": [r.to_dict() for r in results]}
    Path(config.audit_report).write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print("\n\n".join(render_audit(r) for r in results))
    print(f"\nWrote {config.audit_report}")


def cmd_predict(config: RunConfig) -> None:
    tree, manifest = load_dataset(config.tree, config.manifest)
    if config.inputs:
        codec, inputs = read_sidecar(config.inputs)
        input_mode = codec.INPUT_MODE
        name = Path(config.inputs).name
        product_ids = [f"{name}:{row}" for row in range(len(inputs))]
    else:
        inputs, input_mode, product_ids = manifest.inputs, manifest.input_mode, manifest.product_ids
    artifact = config.pipeline if config.variant == "baseline" else config.checkpoint
    method = load_method(artifact, tree, input_mode)
    predictions = method.predict(inputs, None)
    print(TSV_HEADER)
    for row in prediction_rows(predictions, tree, product_ids, config.threshold):
        print(row.to_line())


def cmd_params(config: RunConfig) -> None:
    if config.variant == "baseline":
        raise ConfigError("params counts unified variants (final, no_mp, backbone_indep)")
    if config.full_scale:
        model_config = UnifiedModelConfig(variant=config.variant)
    else:
        model_config = config.model_config((config.categories, config.sub_categories, config.attributes))
    model_config.validate()
    counts = count_parameters(model_config)
    rows = [[stage, f"{count:,}"] for stage, count in counts.stages.items()]
    rows.append(["head", f"{counts.head:,}"])
    if config.full_scale:
        rows.append(["backbone (ResNet-50)", f"{RESNET50_PARAMETERS:,}"])
        rows.append(["total", f"{counts.with_backbone():,}"])
    else:
        rows.append(["encoder", f"{counts.encoder:,}"])
        rows.append(["total", f"{counts.total:,}"])
    print(render_table(f"Parameters ({model_config.variant})", ["Stage", "Parameters"], rows))


def cmd_stats(config: RunConfig) -> None:
    summary = stats(read_manifest(config.manifest))
    rows = [
        [label, f"{s.mean:.2f}", str(s.max), str(s.min)]
        for label, s in summary.rows()
    ]
    print(render_table(f"{summary.n_products} products", ["", "Mean", "Max", "Min"], rows))


HANDLERS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "audit": cmd_audit,
    "params": cmd_params,
    "stats": cmd_stats,
}


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        config = resolve_config(args)
        HANDLERS[config.command](config)
    except HANDLED_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
