"""Trainable architectures for hierarchical product classification."""

import numpy as np

from .base import Architecture, ArchitectureError, UnifiedModelConfig

# Architecture registry - import architectures here to register them
_architectures: list[type[Architecture]] = []


def register_architecture(architecture_class: type[Architecture]) -> type[Architecture]:
    """Decorator to register an architecture class."""
    _architectures.append(architecture_class)
    return architecture_class


def get_all_architectures() -> list[type[Architecture]]:
    """Return all registered architecture classes."""
    return _architectures.copy()


def get_architecture(variant: str) -> type[Architecture]:
    for architecture_class in _architectures:
        if architecture_class.variant == variant:
            return architecture_class
    known = ", ".join(a.variant for a in _architectures)
    raise ArchitectureError(f"Unknown variant {variant!r} (known: {known})")


def build_variant(config: UnifiedModelConfig, rng: np.random.Generator) -> Architecture:
    """Instantiate the architecture named by ``config.variant``."""
    config.validate()
    return get_architecture(config.variant)(config, rng)


from . import unified  # noqa: E402,F401
