"""Check tape gradients of a small unified model against finite differences.

Builds a seeded model with tiny dimensions, draws a random batch, and prints
the maximum relative error per parameter. Exits non-zero when any error
exceeds the tolerance.

Usage:
    poetry run python scripts/gradcheck.py
    poetry run python scripts/gradcheck.py --variant no_mp --hidden-dim 8
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent))

from core.architectures.base import UnifiedModelConfig  # noqa: E402
from core.losses import LevelTargets, LossOptions, weights_from_targets  # noqa: E402
from core.train import build_model, gradient_check  # noqa: E402


def random_batch(config: UnifiedModelConfig, batch: int, rng: np.random.Generator):
    inputs = rng.normal(size=(batch, config.feature_dim))
    targets = LevelTargets(
        category=rng.integers(0, config.n_categories, size=batch),
        sub_category=rng.integers(0, config.n_sub_categories, size=batch),
        attributes=(rng.random((batch, config.n_attributes)) < 0.3).astype(np.float64),
    )
    return inputs, targets


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--variant", default="final", choices=("final", "no_mp", "backbone_indep"))
    parser.add_argument("--hidden-dim", type=int, default=16)
    parser.add_argument("--feature-dim", type=int, default=8)
    parser.add_argument("--sizes", type=int, nargs=3, default=(5, 7, 6), metavar=("CAT", "SUB", "ATTR"))
    parser.add_argument("--batch", type=int, default=4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--tolerance", type=float, default=1e-4)
    args = parser.parse_args()

    config = UnifiedModelConfig(
        backbone_dim=args.feature_dim,
        feature_dim=args.feature_dim,
        hidden_dim=args.hidden_dim,
        n_categories=args.sizes[0],
        n_sub_categories=args.sizes[1],
        n_attributes=args.sizes[2],
        variant=args.variant,
    )
    model = build_model(config, args.seed)
    inputs, targets = random_batch(config, args.batch, np.random.default_rng(args.seed))
    options = LossOptions()
    weights = weights_from_targets(targets, tuple(args.sizes), options)

    errors = gradient_check(model, inputs, targets, weights, options, dropout_seed=args.seed)
    worst = max(errors.values())
    width = max(len(name) for name in errors)
    for name, error in errors.items():
        flag = "  FAIL" if error > args.tolerance else ""
        print(f"{name:<{width}}  {error:.3e}{flag}")
    print(f"\nmax relative error {worst:.3e} (tolerance {args.tolerance:.0e})")
    sys.exit(0 if worst <= args.tolerance else 1)


if __name__ == "__main__":
    main()
