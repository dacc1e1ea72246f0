"""Activation values and closed-form derivatives against finite differences."""

import numpy as np
import pytest

from goalpinn.activations import ACTIVATIONS, activation_eval, get_activation


class TestDerivativeConsistency:
    """First and second derivatives agree with central differences of the value."""

    @pytest.mark.parametrize("name", sorted(ACTIVATIONS))
    def test_first_derivative(self, name):
        act = get_activation(name)
        x = np.linspace(-10.0, 10.0, 2001)
        _, d1, _ = act.derivatives(x, 2)
        h = 1e-6
        fd = (act(x + h) - act(x - h)) / (2.0 * h)
        scale = np.maximum(np.abs(fd), 1.0)
        assert np.max(np.abs(d1 - fd) / scale) < 1e-7

    @pytest.mark.parametrize("name", sorted(ACTIVATIONS))
    def test_second_derivative(self, name):
        act = get_activation(name)
        x = np.linspace(-10.0, 10.0, 2001)
        _, d1, d2 = act.derivatives(x, 2)
        h = 1e-6
        fd = (act.derivatives(x + h, 1)[1] - act.derivatives(x - h, 1)[1]) / (2.0 * h)
        scale = np.maximum(np.abs(fd), 1.0)
        assert np.max(np.abs(d2 - fd) / scale) < 1e-7

    @pytest.mark.parametrize("name", sorted(ACTIVATIONS))
    def test_third_derivative(self, name):
        """The reverse pass through the Laplacian channel relies on order 3."""
        act = get_activation(name)
        x = np.linspace(-6.0, 6.0, 501)
        _, _, _, d3 = act.derivatives(x, 3)
        h = 1e-6
        fd = (act.derivatives(x + h, 2)[2] - act.derivatives(x - h, 2)[2]) / (2.0 * h)
        scale = np.maximum(np.abs(fd), 1.0)
        assert np.max(np.abs(d3 - fd) / scale) < 1e-6


class TestSpotValues:
    def test_tanh_at_zero(self):
        assert activation_eval("tanh", 0.0) == (0.0, 1.0, 0.0)

    def test_tanh_saturation(self):
        value, d1, d2 = activation_eval("tanh", 20.0)
        assert abs(value - 1.0) < 1e-12
        assert abs(d1) < 1e-12
        assert abs(d2) < 1e-12

    def test_gelu_closed_form_point(self):
        value, d1, d2 = activation_eval("gelu", 0.7)
        act = get_activation("gelu")
        h = 1e-6
        fd1 = (act(0.7 + h) - act(0.7 - h)) / (2.0 * h)
        fd2 = (act(0.7 + h) - 2.0 * act(np.float64(0.7)) + act(0.7 - h)) / h**2
        assert abs(d1 - fd1) / abs(fd1) < 1e-7
        assert abs(d2 - fd2) / abs(fd2) < 1e-4  # plain second difference is noisier

    def test_array_input(self):
        value, d1, d2 = activation_eval("tanh", np.array([0.0, 1.0]))
        assert value.shape == (2,)
        assert d1[0] == 1.0

    def test_unknown_activation(self):
        with pytest.raises(ValueError, match="unknown activation"):
            get_activation("relu")
