"""Network specs, parameter layout, initialization, and checkpoints."""

import numpy as np
import pytest

from goalpinn.errors import DimensionMismatchError
from goalpinn.network import (Network, NetworkSpec, derive_frozen_adjoint, init_params,
                              layout_for, load_checkpoint, make_network, save_checkpoint)

from oracles import naive_forward


def small_specs():
    return [
        NetworkSpec(2, (7, 5), "mlp", "tanh"),
        NetworkSpec(3, (6,), "mlp", "gelu"),
        NetworkSpec(2, (6, 6, 6, 6), "resnet", "tanh"),
        NetworkSpec(5, (8, 8), "resnet", "gelu"),
    ]


class TestSpecValidation:
    def test_resnet_needs_even_layer_count(self):
        with pytest.raises(ValueError, match="even number"):
            NetworkSpec(2, (8, 8, 8), "resnet")

    def test_resnet_needs_equal_widths(self):
        with pytest.raises(ValueError, match="equal hidden widths"):
            NetworkSpec(2, (8, 16), "resnet")

    def test_unknown_architecture(self):
        with pytest.raises(ValueError, match="architecture"):
            NetworkSpec(2, (8,), "transformer")

    def test_unknown_activation(self):
        with pytest.raises(ValueError, match="unknown activation"):
            NetworkSpec(2, (8,), "mlp", "relu")

    def test_positive_dimensions(self):
        with pytest.raises(ValueError):
            NetworkSpec(0, (8,))
        with pytest.raises(ValueError):
            NetworkSpec(2, ())


class TestParameterCount:
    """Total parameters follow sum over layers of rows * (1 + cols)."""

    @pytest.mark.parametrize("spec", small_specs())
    def test_count_formula(self, spec):
        if spec.architecture == "mlp":
            widths = [spec.input_dim, *spec.hidden_widths, 1]
        else:
            widths = [spec.input_dim, spec.hidden_widths[0], *spec.hidden_widths, 1]
        expected = sum(widths[i + 1] * (1 + widths[i]) for i in range(len(widths) - 1))
        assert spec.parameter_count == expected
        assert layout_for(spec).size == expected

    def test_case1_network_size(self):
        spec = NetworkSpec(2, (64, 64, 64, 64), "resnet", "tanh")
        assert spec.parameter_count == 64 * 3 + 4 * 64 * 65 + 65


class TestLayout:
    def test_flat_index_is_bijection(self):
        spec = NetworkSpec(2, (4, 3), "mlp")
        layout = layout_for(spec)
        seen = set()
        for layer, (rows, cols) in enumerate(layout.shapes):
            for r in range(rows):
                for c in range(cols):
                    seen.add(layout.flat_index(layer, "weight", r, c))
                seen.add(layout.flat_index(layer, "bias", r))
        assert seen == set(range(layout.size))

    def test_pack_unpack_roundtrip(self, rng):
        spec = NetworkSpec(3, (5, 5, 5, 5), "resnet")
        layout = layout_for(spec)
        flat = rng.standard_normal(layout.size)
        repacked = layout.pack(layout.unpack(flat))
        assert np.array_equal(flat, repacked)

    def test_flat_index_matches_views(self, rng):
        spec = NetworkSpec(2, (4, 3), "mlp")
        layout = layout_for(spec)
        flat = rng.standard_normal(layout.size)
        w = layout.weight(flat, 1)
        assert flat[layout.flat_index(1, "weight", 2, 3)] == w[2, 3]
        b = layout.bias(flat, 1)
        assert flat[layout.flat_index(1, "bias", 2)] == b[2]

    def test_out_of_range_raises(self):
        layout = layout_for(NetworkSpec(2, (4,), "mlp"))
        with pytest.raises(IndexError):
            layout.flat_index(0, "weight", 4, 0)


class TestInitialization:
    def test_seed_determinism(self):
        spec = NetworkSpec(2, (16, 16), "mlp")
        a = init_params(spec, 42)
        b = init_params(spec, 42)
        assert np.array_equal(a, b)

    def test_different_seeds_differ(self):
        spec = NetworkSpec(2, (16, 16), "mlp")
        assert not np.array_equal(init_params(spec, 1), init_params(spec, 2))

    def test_biases_zero(self):
        spec = NetworkSpec(2, (16, 16), "mlp")
        layout = layout_for(spec)
        flat = init_params(spec, 7)
        for layer in range(layout.num_layers):
            assert np.all(layout.bias(flat, layer) == 0.0)

    def test_weight_mean_near_zero(self):
        """Symmetric draw: empirical mean within three standard errors."""
        spec = NetworkSpec(100, (100,), "mlp")
        layout = layout_for(spec)
        flat = init_params(spec, 123)
        w = layout.weight(flat, 0).ravel()
        assert len(w) == 10000
        bound = np.sqrt(6.0 / 200.0)
        stderr = bound / np.sqrt(3.0) / np.sqrt(len(w))
        assert abs(w.mean()) < 3.0 * stderr


class TestForwardValues:
    def test_zero_weights_output_bias(self):
        spec = NetworkSpec(2, (8, 8), "mlp")
        layout = layout_for(spec)
        params = np.zeros(layout.size)
        layout.bias(params, layout.num_layers - 1)[:] = 3.25
        net = Network(spec, params)
        for x in ([0.0, 0.0], [1.0, -2.0], [10.0, 10.0]):
            assert net.eval(x) == 3.25

    def test_shallow_tanh_identity_point(self):
        # x -> tanh(x): weight-in 1, weight-out 1, all biases 0
        spec = NetworkSpec(1, (1,), "mlp", "tanh")
        layout = layout_for(spec)
        params = np.zeros(layout.size)
        layout.weight(params, 0)[:] = 1.0
        layout.weight(params, 1)[:] = 1.0
        net = Network(spec, params)
        assert net.eval([0.0]) == 0.0
        assert abs(net.eval([0.5]) - np.tanh(0.5)) < 1e-15

    @pytest.mark.parametrize("spec", small_specs())
    def test_matches_naive_forward(self, spec, rng):
        net = make_network(spec, seed=9)
        net.params[:] *= 1.5
        for _ in range(5):
            x = rng.uniform(-1.0, 1.0, size=spec.input_dim)
            expected = naive_forward(spec, net.params, x)
            got = net.eval(x)
            assert abs(got - expected) <= 1e-14 * max(1.0, abs(expected))

    def test_dimension_mismatch(self):
        net = make_network(NetworkSpec(2, (4,)), 0)
        with pytest.raises(DimensionMismatchError):
            net.values(np.zeros((3, 5)))

    def test_evaluation_deterministic(self, rng):
        spec = NetworkSpec(2, (8, 8, 8, 8), "resnet", "gelu")
        net = make_network(spec, 3)
        X = rng.uniform(-1, 1, size=(50, 2))
        assert np.array_equal(net.values(X), net.values(X))


class TestFrozenAdjoint:
    def test_mask_covers_all_but_final_layer(self):
        net = make_network(NetworkSpec(2, (6, 6, 6, 6), "resnet"), 0)
        frozen = derive_frozen_adjoint(net, seed=1)
        layout = net.layout
        last = layout.num_layers - 1
        expected = np.ones(layout.size, dtype=bool)
        expected[layout.layer_slice(last)] = False
        assert np.array_equal(frozen.freeze_mask, expected)

    def test_frozen_entries_copied_bitwise(self):
        net = make_network(NetworkSpec(2, (10, 10), "mlp"), 5)
        frozen = derive_frozen_adjoint(net, seed=2)
        assert np.array_equal(frozen.params[frozen.freeze_mask],
                              net.params[frozen.freeze_mask])

    def test_final_layer_reinitialized(self):
        net = make_network(NetworkSpec(2, (10, 10), "mlp"), 5)
        frozen = derive_frozen_adjoint(net, seed=2)
        layout = net.layout
        last = layout.num_layers - 1
        assert not np.array_equal(layout.weight(frozen.params, last),
                                  layout.weight(net.params, last))
        assert np.all(layout.bias(frozen.params, last) == 0.0)

    def test_derivation_deterministic(self):
        net = make_network(NetworkSpec(2, (10, 10), "mlp"), 5)
        a = derive_frozen_adjoint(net, seed=3)
        b = derive_frozen_adjoint(net, seed=3)
        assert np.array_equal(a.params, b.params)


class TestCheckpoints:
    def test_roundtrip_bitwise(self, tmp_path, rng):
        spec = NetworkSpec(3, (6, 6), "mlp", "gelu")
        net = make_network(spec, 11)
        net.params[:] += rng.standard_normal(len(net.params)) * 1e-13  # awkward floats
        net.freeze_mask[::3] = True
        path = tmp_path / "net.json"
        save_checkpoint(net, path)
        loaded = load_checkpoint(path)
        assert loaded.spec == spec
        assert np.array_equal(loaded.params, net.params)
        assert np.array_equal(loaded.freeze_mask, net.freeze_mask)

    def test_roundtrip_preserves_evaluation(self, tmp_path, rng):
        net = make_network(NetworkSpec(2, (8, 8, 8, 8), "resnet"), 4)
        path = tmp_path / "net.json"
        save_checkpoint(net, path)
        X = rng.uniform(-1, 1, size=(20, 2))
        assert np.array_equal(load_checkpoint(path).values(X), net.values(X))
