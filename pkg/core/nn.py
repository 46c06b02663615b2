"""Trainable layers, regularization, initialization and the Adam optimizer."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from core.tensor import (
    ContractError,
    ShapeError,
    Tensor,
    add_bias,
    avg_pool2d,
    conv2d,
    matmul,
    multiply,
    relu,
    scale,
    square,
    sum_all,
    sum_of,
)

Mode = Literal["train", "eval"]

DEFAULT_L2_FACTOR = 0.0005
DEFAULT_DROPOUT = 0.3


class TrainingError(RuntimeError):
    """Raised when an optimizer step cannot be applied safely."""
    pass


@dataclass
class Parameter:
    """A named trainable tensor.

    The tensor itself is immutable; an optimizer step swaps in a new tensor.

    Attributes:
        name: Dotted name, unique within a model (e.g. "down.cat_to_sub.weight")
        tensor: Current value, always tracked for gradients
        l2_factor: Regularization factor applied by :func:`l2_penalty`
    """
    name: str
    tensor: Tensor
    l2_factor: float = 0.0

    @property
    def shape(self) -> tuple[int, ...]:
        return self.tensor.shape

    @property
    def size(self) -> int:
        return self.tensor.size

    def assign(self, value: np.ndarray) -> None:
        self.tensor = Tensor(value, requires_grad=True, name=self.name)


def init_params(
    shape: tuple[int, ...],
    rng: np.random.Generator,
    scheme: Literal["glorot_uniform", "zeros"] = "glorot_uniform",
    fan: tuple[int, int] | None = None,
) -> Tensor:
    """Initial values for a parameter tensor.

    ``glorot_uniform`` draws from U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
    Fans default to the first and last extents; convolution kernels pass
    their receptive-field fans explicitly.
    """
    if scheme == "zeros":
        return Tensor(np.zeros(shape), requires_grad=True)
    if scheme != "glorot_uniform":
        raise ValueError(f"Unknown initialization scheme: {scheme}")
    fan_in, fan_out = fan if fan is not None else (shape[0], shape[-1])
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class DenseLayer:
    """Fully connected layer: ``x @ weight + bias``.

    Attributes:
        weight: Parameter of shape (n_in, n_out)
        bias: Parameter of shape (n_out,)
        l2_factor: Factor applied to the weight (never the bias) by l2_penalty
    """

    def __init__(
        self,
        name: str,
        n_in: int,
        n_out: int,
        rng: np.random.Generator,
        l2_factor: float = 0.0,
    ):
        self.name = name
        self.n_in = n_in
        self.n_out = n_out
        self.l2_factor = l2_factor
        self.weight = Parameter(f"{name}.weight", init_params((n_in, n_out), rng), l2_factor)
        self.bias = Parameter(f"{name}.bias", init_params((n_out,), rng, "zeros"))

    def __call__(self, x: Tensor) -> Tensor:
        return dense_forward(self, x)

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]

    @staticmethod
    def count(n_in: int, n_out: int) -> int:
        return n_in * n_out + n_out

    @property
    def num_parameters(self) -> int:
        return self.count(self.n_in, self.n_out)


def dense_forward(layer: DenseLayer, x: Tensor) -> Tensor:
    if x.ndim != 2 or x.shape[1] != layer.n_in:
        raise ShapeError(
            f"{layer.name}: expected input of shape (batch, {layer.n_in}), got {x.shape}"
        )
    return add_bias(matmul(x, layer.weight.tensor), layer.bias.tensor)


class Conv2dLayer:
    """3×3 same-padded convolution used by the small image encoder."""

    def __init__(self, name: str, channels_in: int, channels_out: int, rng: np.random.Generator, kernel: int = 3):
        self.name = name
        self.channels_in = channels_in
        self.channels_out = channels_out
        self.kernel = kernel
        receptive = kernel * kernel
        self.weight = Parameter(
            f"{name}.weight",
            init_params(
                (channels_out, channels_in, kernel, kernel), rng,
                fan=(channels_in * receptive, channels_out * receptive),
            ),
        )
        self.bias = Parameter(f"{name}.bias", init_params((channels_out,), rng, "zeros"))

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight.tensor, self.bias.tensor)

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]

    @staticmethod
    def count(channels_in: int, channels_out: int, kernel: int = 3) -> int:
        return channels_out * channels_in * kernel * kernel + channels_out


def conv_block(layer: Conv2dLayer, x: Tensor) -> Tensor:
    """conv → ReLU → 2×2 average pool."""
    return avg_pool2d(relu(layer(x)), 2)


def dropout(x: Tensor, rate: float, mode: Mode, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1 - rate) at train time."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "eval" or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in train mode needs a random generator")
    keep = rng.random(x.shape) >= rate
    return multiply(x, keep / (1.0 - rate))


def l2_penalty(layers: Iterable[DenseLayer]) -> Tensor:
    """Σ over layers of ``l2_factor · Σ w²`` (weights only, no ½ factor)."""
    terms = [
        scale(sum_all(square(layer.weight.tensor)), layer.l2_factor)
        for layer in layers
        if layer.l2_factor > 0
    ]
    if not terms:
        return Tensor(0.0)
    return sum_of(terms)


@dataclass
class AdamState:
    """Adam moment estimates, keyed by parameter name."""
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    state: AdamState,
    params: Sequence[Parameter],
    grads: Mapping[str, np.ndarray],
) -> list[Parameter]:
    """Apply one bias-corrected Adam update in place and return the parameters.

    Raises:
        TrainingError: If any gradient contains NaN or infinity. No parameter
            is modified in that case.
    """
    for param in params:
        grad = grads[param.name]
        if grad.shape != param.shape:
            raise ShapeError(f"gradient for {param.name} has shape {grad.shape}, expected {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"Non-finite gradient for parameter {param.name!r}")

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t

    for param in params:
        grad = grads[param.name]
        m = state.first_moment.get(param.name)
        v = state.second_moment.get(param.name)
        if m is None:
            m = np.zeros(param.shape)
            v = np.zeros(param.shape)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[param.name] = m
        state.second_moment[param.name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        param.assign(param.tensor.data - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))

    return list(params)


def count_parameters(params: Iterable[Parameter]) -> int:
    return sum(p.size for p in params)
