import math

import numpy as np
import pytest

from pivad.autograd import Tensor, grad_check
from pivad.exceptions import ConfigError, ShapeError
from pivad.nn import Conv1dLayer, LinearLayer, TransformerBlock, init_params, sinusoidal_encoding


def _block(seed: int = 0) -> TransformerBlock:
    block = TransformerBlock(8, heads=2)
    init_params(block, seed)
    return block


class TestInit:
    def test_same_seed_gives_identical_parameters(self):
        first, second = _block(5).param_dict(), _block(5).param_dict()
        assert first.keys() == second.keys()
        assert all(np.array_equal(first[name].data, second[name].data) for name in first)

    def test_distinct_seeds_differ(self):
        first, second = _block(5).param_dict(), _block(6).param_dict()
        assert any(not np.array_equal(first[name].data, second[name].data) for name in first)

    def test_xavier_bound_and_zero_bias(self):
        layer = LinearLayer(4, 4)
        init_params(layer, 123)
        assert np.all(np.abs(layer.weight.data) <= math.sqrt(6.0 / 8.0))
        assert np.array_equal(layer.bias.data, np.zeros(4))
        assert layer.num_parameters() == 20

    def test_layer_norm_gain_and_shift(self):
        block = _block()
        assert np.array_equal(block.norm1.gamma.data, np.ones(8))
        assert np.array_equal(block.norm2.beta.data, np.zeros(8))

    def test_values_do_not_depend_on_sibling_parameters(self):
        lone = LinearLayer(3, 2)
        init_params(lone, 9, prefix="head.")
        block = TransformerBlock(8, heads=2)
        block.add_child("head", LinearLayer(3, 2))
        init_params(block, 9)
        assert np.array_equal(lone.weight.data, block.param_dict()["head.weight"].data)

    def test_non_positive_dimensions(self):
        with pytest.raises(ConfigError):
            LinearLayer(0, 4)


class TestTransformerBlock:
    def test_zeroed_residual_branches_are_identity(self):
        block = _block(1)
        block.zero_residual_branches()
        x = np.random.default_rng(0).standard_normal((5, 8))
        assert np.array_equal(block(Tensor(x)).data, x)

    def test_single_snippet(self):
        out = _block(2)(Tensor(np.random.default_rng(1).standard_normal((1, 8))))
        assert out.shape == (1, 8)
        assert np.all(np.isfinite(out.data))

    def test_permutation_equivariance(self):
        block = _block(3)
        x = np.random.default_rng(2).standard_normal((6, 8))
        order = np.array([3, 0, 5, 1, 4, 2])
        assert np.allclose(block(Tensor(x[order])).data, block(Tensor(x)).data[order], atol=1e-12)

    def test_shape_checks(self):
        with pytest.raises(ShapeError):
            _block()(Tensor(np.ones((4, 6))))
        with pytest.raises(ConfigError):
            TransformerBlock(6, heads=4)

    def test_gradient_check_on_all_parameters(self):
        block = _block(4)
        rng = np.random.default_rng(4)
        x = Tensor(rng.uniform(-1, 1, (4, 8)), requires_grad=True)
        weights = rng.uniform(-1, 1, (4, 8))
        report = grad_check(lambda: (block(x) * weights).sum(), {"x": x, **block.param_dict()}, floor=1e-6)
        assert report.passed, report.max_relative_error


def test_conv_layer_keeps_length():
    layer = Conv1dLayer(4, 3, kernel_size=3)
    init_params(layer, 0)
    assert layer(Tensor(np.ones((7, 4)))).shape == (7, 3)


def test_sinusoidal_table():
    table = sinusoidal_encoding(5, 6)
    assert table.shape == (5, 6)
    assert np.array_equal(table[0, 0::2], np.zeros(3))
    assert np.array_equal(table[0, 1::2], np.ones(3))
