"""Random image transformations applied while training in image mode.

With probability ``p`` an image gets exactly one transform, chosen uniformly
among a horizontal flip, a random crop from a 4-pixel reflective padding and
a rotation by an angle in [-15°, +15°] with nearest-neighbour resampling.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from core.tensor import ContractError

TRANSFORMS = ("flip", "crop", "rotate")
CROP_PADDING = 4
MAX_ROTATION = 15.0


def _check_image(image: np.ndarray) -> None:
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ContractError(
            f"augment expects an (H, W, 3) uint8 image, got shape {image.shape} of {image.dtype}"
        )


def pick_transform(rng: np.random.Generator, p: float = 0.5) -> str | None:
    """Name of the transform to apply, or None."""
    if not 0.0 <= p <= 1.0:
        raise ContractError(f"augmentation probability must be in [0, 1], got {p}")
    if rng.random() >= p:
        return None
    return TRANSFORMS[rng.integers(len(TRANSFORMS))]


def flip(image: np.ndarray) -> np.ndarray:
    return np.asarray(Image.fromarray(image).transpose(Image.Transpose.FLIP_LEFT_RIGHT))


def crop(image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    h, w, _ = image.shape
    padded = np.pad(image, ((CROP_PADDING, CROP_PADDING), (CROP_PADDING, CROP_PADDING), (0, 0)), mode="reflect")
    top, left = rng.integers(0, 2 * CROP_PADDING + 1, size=2)
    return padded[top:top + h, left:left + w].copy()


def rotate(image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    angle = float(rng.uniform(-MAX_ROTATION, MAX_ROTATION))
    return np.asarray(Image.fromarray(image).rotate(angle, resample=Image.Resampling.NEAREST))


def augment(image: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Randomly transformed copy of ``image`` (the image itself when untouched).

    Raises:
        ContractError: For anything but an (H, W, 3) uint8 image
    """
    image = np.asarray(image)
    _check_image(image)
    transform = pick_transform(rng, p)
    if transform is None:
        return image
    if transform == "flip":
        return flip(image)
    if transform == "crop":
        return crop(image, rng)
    return rotate(image, rng)


def augment_batch(images: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    if images.ndim != 4:
        raise ContractError(f"augment_batch expects (batch, H, W, 3) images, got shape {images.shape}")
    return np.stack([augment(image, p, rng) for image in images])
