"""Tests for the tensor core: ops, the tape, and finite-difference checks."""

import threading

import numpy as np
import pytest

from core.tensor import (
    ContractError,
    ShapeError,
    Tape,
    Tensor,
    add,
    add_bias,
    add_constant,
    avg_pool2d,
    check_gradients,
    conv2d,
    log,
    matmul,
    multiply,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    square,
    sum_all,
    sum_of,
)


def grad_of(fn, *arrays):
    """Tape gradients of sum_all(fn(*tensors)) for every input."""
    with Tape() as tape:
        tensors = [Tensor(a, requires_grad=True) for a in arrays]
        loss = sum_all(fn(*tensors))
        grads = tape.backward(loss, tensors)
    return [grads[t.id] for t in tensors]


class TestTensor:
    def test_data_is_read_only(self):
        t = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            t.data[0] = 5.0

    def test_copies_input(self):
        source = np.array([1.0, 2.0])
        t = Tensor(source)
        source[0] = 9.0
        assert t.data[0] == 1.0

    def test_float64(self):
        assert Tensor([1, 2, 3]).data.dtype == np.float64

    def test_item_requires_single_value(self):
        assert Tensor([[3.5]]).item() == 3.5
        with pytest.raises(ContractError):
            Tensor([1.0, 2.0]).item()

    def test_ids_are_unique(self):
        assert Tensor(1.0).id != Tensor(1.0).id


class TestShapes:
    def test_matmul_mismatch(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_add_mismatch(self):
        with pytest.raises(ShapeError):
            add(Tensor(np.ones(3)), Tensor(np.ones(4)))

    def test_add_bias_mismatch(self):
        with pytest.raises(ShapeError):
            add_bias(Tensor(np.ones((2, 3))), Tensor(np.ones(2)))

    def test_multiply_mismatch(self):
        with pytest.raises(ShapeError):
            multiply(Tensor(np.ones((2, 2))), np.ones(2))

    def test_reshape_mismatch(self):
        with pytest.raises(ShapeError):
            reshape(Tensor(np.ones(6)), (4, 2))

    def test_softmax_needs_a_logit(self):
        with pytest.raises(ShapeError):
            softmax(Tensor(np.ones((2, 0))))

    def test_sum_of_empty(self):
        with pytest.raises(ContractError):
            sum_of([])

    def test_conv_even_kernel(self):
        with pytest.raises(ShapeError):
            conv2d(Tensor(np.ones((1, 1, 4, 4))), Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones(1)))

    def test_pool_indivisible(self):
        with pytest.raises(ShapeError):
            avg_pool2d(Tensor(np.ones((1, 1, 3, 4))))


class TestValues:
    def test_softmax_rows_sum_to_one(self):
        out = softmax(Tensor([[1.0, 2.0, 3.0], [1000.0, 1000.0, 0.0]]))
        np.testing.assert_allclose(out.data.sum(axis=1), [1.0, 1.0])
        np.testing.assert_allclose(out.data[1], [0.5, 0.5, 0.0], atol=1e-12)

    def test_sigmoid_is_finite_for_large_inputs(self):
        out = sigmoid(Tensor([-1000.0, 0.0, 1000.0]))
        np.testing.assert_allclose(out.data, [0.0, 0.5, 1.0])

    def test_log_is_floored(self):
        out = log(Tensor([0.0, 1.0]))
        assert out.data[0] == pytest.approx(np.log(1e-12))
        assert out.data[1] == 0.0

    def test_relu(self):
        np.testing.assert_array_equal(relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_conv_identity_kernel(self):
        x = np.arange(16.0).reshape(1, 1, 4, 4)
        kernel = np.zeros((1, 1, 3, 3))
        kernel[0, 0, 1, 1] = 1.0
        out = conv2d(Tensor(x), Tensor(kernel), Tensor([0.5]))
        np.testing.assert_allclose(out.data, x + 0.5)

    def test_conv_same_padding(self):
        out = conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))), Tensor([0.0]))
        # corners see 4 pixels, edges 6, centre 9
        assert out.data[0, 0, 0, 0] == 4.0
        assert out.data[0, 0, 0, 1] == 6.0
        assert out.data[0, 0, 1, 1] == 9.0

    def test_avg_pool(self):
        x = np.arange(16.0).reshape(1, 1, 4, 4)
        out = avg_pool2d(Tensor(x))
        np.testing.assert_allclose(out.data[0, 0], [[2.5, 4.5], [10.5, 12.5]])


class TestTape:
    def test_no_tape_records_nothing(self):
        a = Tensor([1.0], requires_grad=True)
        out = scale(a, 2.0)
        assert out.requires_grad is False

    def test_untracked_operands_are_not_recorded(self):
        with Tape() as tape:
            scale(Tensor([1.0]), 2.0)
        assert tape.nodes == []

    def test_matmul_gradients(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(2, 3)), rng.normal(size=(3, 4))
        ga, gb = grad_of(matmul, a, b)
        np.testing.assert_allclose(ga, np.ones((2, 4)) @ b.T)
        np.testing.assert_allclose(gb, a.T @ np.ones((2, 4)))

    def test_shared_input_accumulates(self):
        (g,) = grad_of(lambda x: add(x, x), np.array([1.0, 2.0]))
        np.testing.assert_array_equal(g, [2.0, 2.0])

    def test_relu_subgradient_at_zero(self):
        (g,) = grad_of(relu, np.array([-1.0, 0.0, 1.0]))
        np.testing.assert_array_equal(g, [0.0, 0.0, 1.0])

    def test_log_no_gradient_where_clamped(self):
        (g,) = grad_of(log, np.array([0.0, 2.0]))
        np.testing.assert_allclose(g, [0.0, 0.5])

    def test_unused_leaf_gets_zeros(self):
        with Tape() as tape:
            a = Tensor([1.0, 2.0], requires_grad=True)
            b = Tensor([3.0], requires_grad=True)
            loss = sum_all(square(a))
            grads = tape.gradients(loss, {"a": a, "b": b})
        np.testing.assert_array_equal(grads["a"], [2.0, 4.0])
        np.testing.assert_array_equal(grads["b"], [0.0])

    def test_backward_needs_scalar(self):
        with Tape() as tape:
            a = Tensor([1.0, 2.0], requires_grad=True)
            out = scale(a, 2.0)
            with pytest.raises(ContractError):
                tape.backward(out)

    def test_tapes_are_per_thread(self):
        seen = []

        def worker():
            a = Tensor([1.0], requires_grad=True)
            seen.append(scale(a, 2.0).requires_grad)

        with Tape() as tape:
            thread = threading.Thread(target=worker)
            thread.start()
            thread.join()
        assert seen == [False]
        assert tape.nodes == []


class TestCheckGradients:
    def test_composite_expression(self):
        rng = np.random.default_rng(1)
        params = {
            "w": rng.normal(size=(4, 3)),
            "b": rng.normal(size=3),
        }
        x = Tensor(rng.normal(size=(5, 4)))
        target = np.eye(3)[[0, 1, 2, 0, 1]]

        def loss_fn(t):
            probs = softmax(add_bias(matmul(x, t["w"]), t["b"]))
            return scale(sum_all(multiply(log(probs), target)), -1.0)

        errors = check_gradients(loss_fn, params)
        assert max(errors.values()) < 1e-6

    def test_sigmoid_square_chain(self):
        rng = np.random.default_rng(2)
        params = {"x": rng.normal(size=(3, 2))}

        def loss_fn(t):
            return sum_all(square(add_constant(sigmoid(t["x"]), -0.25)))

        assert check_gradients(loss_fn, params)["x"] < 1e-6

    def test_conv_and_pool(self):
        rng = np.random.default_rng(3)
        params = {
            "x": rng.normal(size=(2, 2, 4, 4)),
            "w": rng.normal(size=(3, 2, 3, 3)),
            "b": rng.normal(size=3),
        }

        def loss_fn(t):
            out = avg_pool2d(conv2d(t["x"], t["w"], t["b"]))
            return sum_all(square(reshape(out, (2, 12))))

        errors = check_gradients(loss_fn, params)
        assert max(errors.values()) < 1e-6
