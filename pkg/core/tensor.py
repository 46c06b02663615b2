"""Dense float64 tensors and a recording tape for reverse-mode gradients.

Every operation in this module computes its value eagerly with numpy. When a
:class:`Tape` is active (``with Tape() as tape:``) and at least one operand is
tracked, the operation is appended to the tape together with its backward
rule. ``tape.backward(loss)`` then walks the recorded nodes in reverse order,
visiting each node exactly once.

Tensors are immutable once built: their arrays are marked read-only, so a
finished tensor can be shared between threads. Optimizers replace parameter
tensors instead of mutating them (see :class:`core.nn.Parameter`).
"""

from __future__ import annotations

import itertools
import threading
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

_next_id = itertools.count(1)
_state = threading.local()

LOG_FLOOR = 1e-12

# A backward rule receives the gradient of the node output and a tuple telling
# which inputs need a gradient; it returns one array (or None) per input.
BackwardRule = Callable[[np.ndarray, tuple[bool, ...]], tuple[np.ndarray | None, ...]]


class ShapeError(ValueError):
    """Raised when operand shapes do not fit an operation."""
    pass


class ContractError(ValueError):
    """Raised when a caller violates an operation's preconditions."""
    pass


class Tensor:
    """A read-only float64 array, optionally tracked for gradients.

    Attributes:
        data: Row-major float64 values (read-only numpy array)
        requires_grad: Whether gradients flow to (or through) this tensor
        name: Optional label, used in error messages and gradient reports
        id: Unique integer identity used by the tape
    """

    __slots__ = ("data", "requires_grad", "name", "id")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        array = np.array(data, dtype=np.float64)
        array.setflags(write=False)
        self.data = array
        self.requires_grad = requires_grad
        self.name = name
        self.id = next(_next_id)

    @classmethod
    def _wrap(cls, array: np.ndarray) -> Tensor:
        """Build a tensor around a freshly computed array without copying it."""
        tensor = cls.__new__(cls)
        array = np.asarray(array, dtype=np.float64)
        array.setflags(write=False)
        tensor.data = array
        tensor.requires_grad = False
        tensor.name = ""
        tensor.id = next(_next_id)
        return tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: Tensor) -> Tensor:
        return add(self, other)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __mul__(self, factor: float) -> Tensor:
        return scale(self, factor)

    __rmul__ = __mul__


@dataclass(frozen=True)
class Node:
    """One recorded operation: ``output = op(*inputs)``."""
    op: str
    inputs: tuple[int, ...]
    output: int
    backward: BackwardRule


class Tape:
    """Ordered record of operations, in the order they were executed.

    Recording order is a topological order: an operation can only consume
    tensors that already exist. A tape is meant to be driven by one thread.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._tracked: set[int] = set()
        self._leaves: dict[int, Tensor] = {}

    def __enter__(self) -> Tape:
        stack = _tape_stack()
        stack.append(self)
        return self

    def __exit__(self, *exc_info) -> None:
        _tape_stack().pop()

    def tracks(self, tensor: Tensor) -> bool:
        if tensor.id in self._tracked:
            return True
        if tensor.requires_grad:
            self._tracked.add(tensor.id)
            self._leaves[tensor.id] = tensor
            return True
        return False

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward: BackwardRule) -> None:
        self.nodes.append(Node(op, tuple(t.id for t in inputs), output.id, backward))
        self._tracked.add(output.id)
        output.requires_grad = True

    def backward(self, loss: Tensor, wrt: Sequence[Tensor] = ()) -> dict[int, np.ndarray]:
        """Gradient of a scalar ``loss`` with respect to tracked leaves.

        Returns a map from tensor id to gradient for every leaf seen by this
        tape and for every tensor in ``wrt``. Leaves that the loss does not
        depend on get zeros.
        """
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

        grads: dict[int, np.ndarray] = {}
        if loss.id in self._tracked:
            grads[loss.id] = np.ones_like(loss.data)

        for node in reversed(self.nodes):
            upstream = grads.get(node.output)
            if upstream is None:
                continue
            if node.output not in self._leaves:
                del grads[node.output]
            needs = tuple(i in self._tracked for i in node.inputs)
            for input_id, needed, grad in zip(node.inputs, needs, node.backward(upstream, needs)):
                if not needed or grad is None:
                    continue
                if input_id in grads:
                    grads[input_id] = grads[input_id] + grad
                else:
                    grads[input_id] = grad

        result = {}
        for tensor in [*self._leaves.values(), *wrt]:
            grad = grads.get(tensor.id)
            result[tensor.id] = grad if grad is not None else np.zeros_like(tensor.data)
        return result

    def gradients(self, loss: Tensor, wrt: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
        """Like :meth:`backward`, keyed by the names in ``wrt``."""
        by_id = self.backward(loss, list(wrt.values()))
        return {name: by_id[tensor.id] for name, tensor in wrt.items()}


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Gradient map of ``loss`` over every tracked leaf of ``tape``."""
    return tape.backward(loss)


def _tape_stack() -> list[Tape]:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = _state.tapes = []
    return stack


def current_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def _emit(op: str, inputs: tuple[Tensor, ...], value: np.ndarray, rule: BackwardRule) -> Tensor:
    out = Tensor._wrap(value)
    tape = current_tape()
    if tape is not None:
        tracked = [tape.tracks(t) for t in inputs]
        if any(tracked):
            tape.record(op, inputs, out, rule)
    return out


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of ``a[m×k]`` and ``b[k×n]``."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    a_data, b_data = a.data, b.data

    def rule(g, needs):
        return (
            g @ b_data.T if needs[0] else None,
            a_data.T @ g if needs[1] else None,
        )

    return _emit("matmul", (a, b), a_data @ b_data, rule)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two tensors of equal shape."""
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes differ, {a.shape} vs {b.shape}")
    return _emit("add", (a, b), a.data + b.data, lambda g, needs: (g, g))


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a vector ``bias[n]`` to every row of ``x[batch×n]``."""
    if x.ndim != 2 or bias.ndim != 1 or x.shape[1] != bias.shape[0]:
        raise ShapeError(f"add_bias: cannot broadcast {bias.shape} over {x.shape}")

    def rule(g, needs):
        return g, g.sum(axis=0) if needs[1] else None

    return _emit("add_bias", (x, bias), x.data + bias.data, rule)


def sum_of(tensors: Sequence[Tensor]) -> Tensor:
    """Sum a non-empty sequence of equally shaped tensors."""
    if not tensors:
        raise ContractError("sum_of needs at least one tensor")
    total = tensors[0]
    for t in tensors[1:]:
        total = add(total, t)
    return total


# ---------------------------------------------------------------------------
# Elementwise
# ---------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    """max(x, 0); the subgradient at exactly 0 is 0."""
    mask = x.data > 0
    return _emit("relu", (x,), np.where(mask, x.data, 0.0), lambda g, needs: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    # tanh form stays finite for large |x|
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _emit("sigmoid", (x,), out, lambda g, needs: (g * out * (1.0 - out),))


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply every entry by a scalar constant."""
    factor = float(factor)
    return _emit("scale", (x,), x.data * factor, lambda g, needs: (g * factor,))


def multiply(x: Tensor, constant: np.ndarray) -> Tensor:
    """Elementwise product with a constant array of the same shape."""
    constant = np.asarray(constant, dtype=np.float64)
    if constant.shape != x.shape:
        raise ShapeError(f"multiply: shapes differ, {x.shape} vs {constant.shape}")
    return _emit("multiply", (x,), x.data * constant, lambda g, needs: (g * constant,))


def add_constant(x: Tensor, constant: float) -> Tensor:
    return _emit("add_constant", (x,), x.data + float(constant), lambda g, needs: (g,))


def square(x: Tensor) -> Tensor:
    x_data = x.data
    return _emit("square", (x,), x_data * x_data, lambda g, needs: (2.0 * x_data * g,))


def log(x: Tensor, floor: float = LOG_FLOOR) -> Tensor:
    """Natural log of ``max(x, floor)``; no gradient flows where clamped."""
    clamped = np.maximum(x.data, floor)
    active = x.data > floor

    def rule(g, needs):
        return (np.where(active, g / clamped, 0.0),)

    return _emit("log", (x,), np.log(clamped), rule)


def softmax(logits: Tensor) -> Tensor:
    """Softmax over the last axis, stabilised by subtracting the row maximum."""
    if logits.ndim == 0 or logits.shape[-1] < 1:
        raise ShapeError(f"softmax: needs at least one logit, got shape {logits.shape}")
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def rule(g, needs):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return _emit("softmax", (logits,), out, rule)


# ---------------------------------------------------------------------------
# Reductions and reshaping
# ---------------------------------------------------------------------------

def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _emit("sum", (x,), np.asarray(x.data.sum()), lambda g, needs: (np.full(shape, float(g)),))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    original = x.shape
    try:
        value = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot view {original} as {shape}") from e
    return _emit("reshape", (x,), value, lambda g, needs: (g.reshape(original),))


# ---------------------------------------------------------------------------
# Small image encoder kernels
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Same-padded, stride-1 convolution.

    Shapes: ``x[b×c×h×w]``, ``weight[o×c×k×k]`` (odd k), ``bias[o]`` →
    ``[b×o×h×w]``.
    """
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} does not fit kernel {weight.shape}")
    k = weight.shape[2]
    if k != weight.shape[3] or k % 2 == 0:
        raise ShapeError(f"conv2d: kernel must be square and odd, got {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"conv2d: bias {bias.shape} does not match {weight.shape[0]} filters")

    pad = k // 2
    _, _, h, w = x.shape
    padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(2, 3))
    w_data = weight.data
    out = np.einsum("bchwij,ocij->bohw", windows, w_data, optimize=True)
    out += bias.data[None, :, None, None]

    def rule(g, needs):
        dx = None
        if needs[0]:
            dpadded = np.zeros_like(padded)
            for i in range(k):
                for j in range(k):
                    dpadded[:, :, i:i + h, j:j + w] += np.einsum("bohw,oc->bchw", g, w_data[:, :, i, j])
            dx = dpadded[:, :, pad:pad + h, pad:pad + w]
        dw = np.einsum("bchwij,bohw->ocij", windows, g, optimize=True) if needs[1] else None
        db = g.sum(axis=(0, 2, 3)) if needs[2] else None
        return dx, dw, db

    return _emit("conv2d", (x, weight, bias), out, rule)


def avg_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping ``size×size`` average pooling over the last two axes."""
    if x.ndim != 4 or x.shape[2] % size or x.shape[3] % size:
        raise ShapeError(f"avg_pool2d: {x.shape} is not divisible into {size}x{size} windows")
    b, c, h, w = x.shape
    out = x.data.reshape(b, c, h // size, size, w // size, size).mean(axis=(3, 5))

    def rule(g, needs):
        spread = np.repeat(np.repeat(g, size, axis=2), size, axis=3)
        return (spread / (size * size),)

    return _emit("avg_pool2d", (x,), out, rule)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

def check_gradients(
    loss_fn: Callable[[Mapping[str, Tensor]], Tensor],
    params: Mapping[str, np.ndarray],
    step: float = 1e-5,
    floor: float = 1e-6,
) -> dict[str, float]:
    """Compare tape gradients with central finite differences.

    ``loss_fn`` receives a name -> Tensor mapping and must be deterministic
    (any randomness re-seeded inside it). Returns the maximum relative error
    per parameter, where relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    with Tape() as tape:
        tensors = {name: Tensor(value, requires_grad=True, name=name) for name, value in params.items()}
        loss = loss_fn(tensors)
        analytic = tape.gradients(loss, tensors)

    def evaluate(name: str, perturbed: np.ndarray) -> float:
        inputs = {n: Tensor(v, name=n) for n, v in params.items()}
        inputs[name] = Tensor(perturbed, name=name)
        return loss_fn(inputs).item()

    errors: dict[str, float] = {}
    for name, value in params.items():
        base = np.array(value, dtype=np.float64)
        worst = 0.0
        for index in np.ndindex(base.shape):
            plus = base.copy()
            plus[index] += step
            minus = base.copy()
            minus[index] -= step
            numeric = (evaluate(name, plus) - evaluate(name, minus)) / (2.0 * step)
            exact = float(analytic[name][index])
            denom = max(abs(exact), abs(numeric), floor)
            worst = max(worst, abs(exact - numeric) / denom)
        errors[name] = worst
    return errors
