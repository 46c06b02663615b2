"""Tests for layers, dropout, L2 and Adam."""

import numpy as np
import pytest

from core.nn import (
    AdamState,
    Conv2dLayer,
    DenseLayer,
    Parameter,
    TrainingError,
    adam_step,
    conv_block,
    count_parameters,
    dropout,
    init_params,
    l2_penalty,
)
from core.tensor import ContractError, ShapeError, Tape, Tensor, square, sum_all


class TestInitParams:
    def test_glorot_bound(self):
        values = init_params((30, 10), np.random.default_rng(0)).data
        assert np.abs(values).max() <= np.sqrt(6.0 / 40)

    def test_glorot_variance(self):
        values = init_params((1024, 1024), np.random.default_rng(0)).data
        assert values.var() == pytest.approx(2.0 / 2048, rel=0.2)

    def test_zeros(self):
        assert not init_params((5,), np.random.default_rng(0), "zeros").data.any()

    def test_seeded(self):
        a = init_params((4, 4), np.random.default_rng(3)).data
        b = init_params((4, 4), np.random.default_rng(3)).data
        np.testing.assert_array_equal(a, b)

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            init_params((2,), np.random.default_rng(0), "he_normal")


class TestDenseLayer:
    def test_forward(self):
        layer = DenseLayer("d", 3, 2, np.random.default_rng(0))
        x = np.ones((4, 3))
        expected = x @ layer.weight.tensor.data + layer.bias.tensor.data
        np.testing.assert_allclose(layer(Tensor(x)).data, expected)

    def test_wrong_input_width(self):
        layer = DenseLayer("proj", 3, 2, np.random.default_rng(0))
        with pytest.raises(ShapeError, match="proj"):
            layer(Tensor(np.ones((4, 5))))

    def test_parameter_names_and_count(self):
        layer = DenseLayer("block.sub", 4, 5, np.random.default_rng(0))
        assert [p.name for p in layer.parameters()] == ["block.sub.weight", "block.sub.bias"]
        assert layer.num_parameters == DenseLayer.count(4, 5) == 25
        assert count_parameters(layer.parameters()) == 25


class TestConv:
    def test_block_halves_extent(self):
        layer = Conv2dLayer("c", 3, 8, np.random.default_rng(0))
        out = conv_block(layer, Tensor(np.ones((2, 3, 8, 8))))
        assert out.shape == (2, 8, 4, 4)

    def test_count(self):
        layer = Conv2dLayer("c", 3, 8, np.random.default_rng(0))
        assert count_parameters(layer.parameters()) == Conv2dLayer.count(3, 8) == 8 * 3 * 9 + 8


class TestDropout:
    def test_eval_is_identity(self):
        x = Tensor(np.ones((3, 3)))
        assert dropout(x, 0.5, "eval", None) is x

    def test_train_scales_survivors(self):
        x = Tensor(np.ones((200, 50)))
        out = dropout(x, 0.3, "train", np.random.default_rng(0)).data
        assert set(np.unique(out)) <= {0.0, 1.0 / 0.7}
        assert out.mean() == pytest.approx(1.0, abs=0.02)

    def test_million_entries(self):
        out = dropout(Tensor(np.ones(1_000_000)), 0.3, "train", np.random.default_rng(7)).data
        assert 0.99 <= out.mean() <= 1.01
        assert 0.297 <= np.mean(out == 0.0) <= 0.303

    def test_train_needs_rng(self):
        with pytest.raises(ContractError):
            dropout(Tensor(np.ones(3)), 0.3, "train", None)

    def test_rate_of_one_rejected(self):
        with pytest.raises(ContractError):
            dropout(Tensor(np.ones(3)), 1.0, "eval", None)


class TestL2Penalty:
    def test_weights_only(self):
        layer = DenseLayer("d", 2, 2, np.random.default_rng(0), l2_factor=0.5)
        layer.weight.assign(np.array([[1.0, 2.0], [0.0, 1.0]]))
        layer.bias.assign(np.array([10.0, 10.0]))
        assert l2_penalty([layer]).item() == pytest.approx(0.5 * 6.0)

    def test_unregularized_layers_give_zero(self):
        layer = DenseLayer("d", 2, 2, np.random.default_rng(0))
        assert l2_penalty([layer]).item() == 0.0

    def test_gradient(self):
        layer = DenseLayer("d", 2, 1, np.random.default_rng(0), l2_factor=0.1)
        with Tape() as tape:
            grads = tape.gradients(l2_penalty([layer]), {"w": layer.weight.tensor})
        np.testing.assert_allclose(grads["w"], 0.2 * layer.weight.tensor.data)


class TestAdam:
    def test_first_step_moves_by_learning_rate(self):
        layer = DenseLayer("d", 2, 2, np.random.default_rng(0))
        before = layer.weight.tensor.data.copy()
        grads = {"d.weight": np.array([[1.0, -2.0], [0.5, -0.1]]), "d.bias": np.zeros(2)}
        state = AdamState(learning_rate=0.01)
        adam_step(state, layer.parameters(), grads)
        np.testing.assert_allclose(
            layer.weight.tensor.data, before - 0.01 * np.sign(grads["d.weight"]), atol=1e-8
        )
        assert state.step == 1

    def test_minimizes_quadratic(self):
        layer = DenseLayer("d", 1, 1, np.random.default_rng(0))
        state = AdamState(learning_rate=0.1)
        for _ in range(500):
            with Tape() as tape:
                w = layer.weight.tensor
                loss = sum_all(square(w + Tensor([[-3.0]])))
                grads = tape.gradients(loss, {"d.weight": w})
            grads["d.bias"] = np.zeros(1)
            adam_step(state, layer.parameters(), grads)
        assert layer.weight.tensor.data[0, 0] == pytest.approx(3.0, abs=0.1)

    def test_scalar_descent(self):
        # f(w) = (w - 3)^2 from w = 0 at lr 0.05
        w = Parameter("w", Tensor(np.zeros(1), requires_grad=True))
        state = AdamState(learning_rate=0.05)
        distances = []
        for _ in range(100):
            adam_step(state, [w], {"w": 2.0 * (w.tensor.data - 3.0)})
            distances.append(abs(w.tensor.data[0] - 3.0))
        assert all(b <= a for a, b in zip(distances, distances[1:]))
        assert distances[-1] < 0.5

    def test_zero_gradient_leaves_parameters(self):
        w = Parameter("w", Tensor(np.array([1.5, -2.0]), requires_grad=True))
        state = AdamState(learning_rate=0.1)
        for _ in range(3):
            adam_step(state, [w], {"w": np.zeros(2)})
        np.testing.assert_array_equal(w.tensor.data, [1.5, -2.0])

    def test_non_finite_gradient_leaves_parameters(self):
        layer = DenseLayer("d", 2, 2, np.random.default_rng(0))
        before = layer.bias.tensor.data.copy()
        grads = {"d.weight": np.full((2, 2), np.nan), "d.bias": np.ones(2)}
        state = AdamState()
        with pytest.raises(TrainingError, match="d.weight"):
            adam_step(state, layer.parameters(), grads)
        np.testing.assert_array_equal(layer.bias.tensor.data, before)
        assert state.step == 0
