"""Two-layer network: forward paths, losses, gradients, checkpoints."""

import math
import struct

import numpy as np
import pytest
from numpy.testing import assert_allclose

from polyprune import TwoLayerNetwork, get_activation, half_squared_error, require_smooth
from polyprune.network import CHECKPOINT_MAGIC, CHECKPOINT_VERSION


def finite_difference_grad(net, X, y, criterion, step=1e-6):
    """Central differences over every weight, one coordinate at a time."""
    grads = []
    for arr in (net.outer_, net.inner_):
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = net.loss(X, y, criterion=criterion)
            flat[i] = orig - step
            lo = net.loss(X, y, criterion=criterion)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * step)
        grads.append(g)
    return tuple(grads)


class TestActivations:
    def test_sigmoid_value(self):
        act = get_activation("sigmoid")
        assert act.fn(np.array(2.0)) == pytest.approx(0.8807970779778823, abs=1e-15)
        assert act.derivative_bound == 1.0

    def test_sigmoid_extreme_inputs_stable(self):
        act = get_activation("sigmoid")
        out = act.fn(np.array([-800.0, 800.0]))
        assert out[0] == 0.0 and out[1] == 1.0
        assert np.isfinite(act.deriv(np.array([-800.0, 800.0]))).all()

    def test_tanh_bound(self):
        assert get_activation("tanh").derivative_bound == 2.0

    def test_relu_not_smooth(self):
        act = get_activation("relu")
        assert act.derivative_bound is None
        assert not act.smooth
        with pytest.raises(ValueError, match="bounded second derivative"):
            require_smooth(act)

    def test_derivatives_match_finite_differences(self, rng):
        z = rng.standard_normal(50) * 3
        for name in ("sigmoid", "tanh"):
            act = get_activation(name)
            fd = (act.fn(z + 1e-6) - act.fn(z - 1e-6)) / 2e-6
            assert_allclose(act.deriv(z), fd, atol=1e-8)

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="gelu"):
            get_activation("gelu")


class TestForward:
    def test_single_neuron_hand_value(self):
        net = TwoLayerNetwork(n_neurons=1, random_state=0)
        net.initialize(2)
        net.inner_[0] = [1.0, 1.0]
        net.outer_[0] = 3.0
        x = np.array([1.5, 0.5])
        # sigmoid(2) frozen
        assert net.neuron_activation(0, x) == pytest.approx(
            3.0 * 0.8807970779778823, abs=1e-15
        )
        out = net.decision_function(x[None, :])
        assert out[0] == pytest.approx(3.0 * 0.8807970779778823, abs=1e-15)

    def test_forward_averages_neuron_outputs(self, small_net, small_binary):
        X = small_binary.features
        per_neuron = small_net.neuron_outputs(X)
        assert per_neuron.shape == (small_net.n_neurons, X.shape[0])
        assert_allclose(
            small_net.decision_function(X), per_neuron.mean(axis=0), atol=1e-14
        )

    def test_pruned_with_uniform_counts_matches_dense(self, small_net, small_binary):
        X = small_binary.features
        counts = np.ones(small_net.n_neurons, dtype=np.int64)
        np.testing.assert_array_equal(
            small_net.pruned_decision_function(X, counts),
            small_net.decision_function(X),
        )

    def test_pruned_scales_with_counts(self, small_net, small_binary):
        X = small_binary.features
        counts = np.zeros(small_net.n_neurons, dtype=np.int64)
        counts[3] = 4
        out = small_net.pruned_decision_function(X, counts)
        expected = small_net.outer_[3] * get_activation("sigmoid").fn(
            X @ small_net.inner_[3]
        )
        assert_allclose(out, expected, atol=1e-14)

    def test_scaled_activations_entrywise(self, small_net, small_binary):
        X = small_binary.features
        m = X.shape[0]
        phi = small_net.scaled_activations(X)
        assert phi.shape == (small_net.n_neurons, m)
        for i in (0, 5, 11):
            for j in (0, 7, 23):
                assert phi[i, j] == pytest.approx(
                    small_net.neuron_activation(i, X[j]) / math.sqrt(m), abs=1e-14
                )

    def test_sigmoid_head(self, small_binary):
        net = TwoLayerNetwork(n_neurons=8, output_head="sigmoid", random_state=1)
        net.initialize(small_binary.n_features)
        X = small_binary.features
        raw = net.decision_function(X)
        assert_allclose(net.forward(X), 1.0 / (1.0 + np.exp(-raw)), atol=1e-12)

    def test_predict_threshold(self, small_net, small_binary):
        X = small_binary.features
        preds = small_net.predict(X)
        np.testing.assert_array_equal(preds, (small_net.forward(X) >= 0.5).astype(float))


class TestLoss:
    def test_l2_matches_direct_formula(self, small_net, small_binary):
        X, y = small_binary.features, small_binary.labels
        f = small_net.forward(X)
        assert small_net.loss(X, y) == pytest.approx(
            0.5 * np.mean((f - y) ** 2), abs=1e-15
        )

    def test_bce_at_zero_logits_is_ln2(self, small_binary):
        net = TwoLayerNetwork(
            n_neurons=4, output_head="sigmoid", criterion="bce", random_state=0
        )
        net.initialize(small_binary.n_features)
        net.outer_[:] = 0.0
        X, y = small_binary.features, small_binary.labels
        assert net.loss(X, y) == pytest.approx(0.6931471805599453, abs=1e-12)

    def test_bce_stable_at_large_logits(self, small_binary):
        net = TwoLayerNetwork(
            n_neurons=4, output_head="sigmoid", criterion="bce", random_state=0
        )
        net.initialize(small_binary.n_features)
        net.outer_[:] = 1e4
        X, y = small_binary.features, small_binary.labels
        assert np.isfinite(net.loss(X, y))

    def test_dense_loss_equals_polytope_mean_loss(self, small_net, small_binary):
        # linear head + l2: network loss == half squared error of the mean
        # scaled-activation row against the scaled target.
        X, y = small_binary.features, small_binary.labels
        m = X.shape[0]
        phi = small_net.scaled_activations(X)
        y_vec = y / math.sqrt(m)
        assert small_net.loss(X, y) == pytest.approx(
            half_squared_error(phi.mean(axis=0), y_vec), abs=1e-14
        )

    def test_counts_loss_matches_pruned_forward(self, small_net, small_binary):
        X, y = small_binary.features, small_binary.labels
        counts = np.zeros(small_net.n_neurons, dtype=np.int64)
        counts[[1, 4]] = [2, 3]
        f = small_net.pruned_decision_function(X, counts)
        assert small_net.loss(X, y, counts=counts) == pytest.approx(
            0.5 * np.mean((f - y) ** 2), abs=1e-15
        )

    def test_residual_norm_unnormalized(self, small_net, small_binary):
        X, y = small_binary.features, small_binary.labels
        f = small_net.forward(X)
        assert small_net.residual_norm_squared(X, y) == pytest.approx(
            np.sum((f - y) ** 2), abs=1e-12
        )

    def test_accuracy_hand_case(self):
        net = TwoLayerNetwork(n_neurons=1, random_state=0)
        net.initialize(1)
        net.inner_[0] = [10.0]
        net.outer_[0] = 1.0
        X = np.array([[5.0], [-5.0], [5.0], [-5.0]])
        y = np.array([1.0, 0.0, 0.0, 0.0])
        # predictions: 1, 0, 1, 0 -> three of four match
        assert net.accuracy(X, y) == pytest.approx(0.75)


class TestGradients:
    @pytest.mark.parametrize(
        "activation,head,criterion",
        [
            ("sigmoid", "linear", "l2"),
            ("sigmoid", "sigmoid", "l2"),
            ("sigmoid", "sigmoid", "bce"),
            ("tanh", "linear", "l2"),
            ("tanh", "sigmoid", "bce"),
        ],
    )
    def test_analytic_matches_finite_differences(self, activation, head, criterion, rng):
        net = TwoLayerNetwork(
            n_neurons=5, activation=activation, output_head=head,
            criterion=criterion, random_state=11,
        )
        net.initialize(3)
        X = rng.standard_normal((6, 3))
        y = rng.integers(0, 2, size=6).astype(float)
        g_out, g_in = net.loss_gradient(X, y)
        fd_out, fd_in = finite_difference_grad(net, X, y, criterion)
        assert_allclose(g_out, fd_out, rtol=1e-6, atol=1e-9)
        assert_allclose(g_in, fd_in, rtol=1e-6, atol=1e-9)


class TestValidationErrors:
    def test_bce_requires_sigmoid_head(self):
        net = TwoLayerNetwork(criterion="bce", output_head="linear")
        with pytest.raises(ValueError, match="sigmoid"):
            net.initialize(4)

    def test_unknown_head(self):
        net = TwoLayerNetwork(output_head="softmax")
        with pytest.raises(ValueError):
            net.initialize(4)

    def test_nonpositive_width(self):
        net = TwoLayerNetwork(n_neurons=0)
        with pytest.raises(ValueError):
            net.initialize(4)

    def test_forward_requires_initialize(self, small_binary):
        net = TwoLayerNetwork()
        with pytest.raises(Exception):
            net.forward(small_binary.features)

    def test_bad_feature_rank(self, small_net):
        with pytest.raises(ValueError):
            small_net.forward(np.ones(6))

    def test_nonfinite_features(self, small_net):
        X = np.ones((3, 6))
        X[1, 2] = np.nan
        with pytest.raises(ValueError):
            small_net.forward(X)


class TestInit:
    def test_same_seed_same_weights(self):
        a = TwoLayerNetwork(n_neurons=16, random_state=5)
        b = TwoLayerNetwork(n_neurons=16, random_state=5)
        a.initialize(4)
        b.initialize(4)
        np.testing.assert_array_equal(a.inner_, b.inner_)
        np.testing.assert_array_equal(a.outer_, b.outer_)

    def test_different_seed_different_weights(self):
        a = TwoLayerNetwork(n_neurons=16, random_state=5)
        b = TwoLayerNetwork(n_neurons=16, random_state=6)
        a.initialize(4)
        b.initialize(4)
        assert not np.array_equal(a.inner_, b.inner_)

    def test_get_params_round_trip(self):
        net = TwoLayerNetwork(n_neurons=3, learning_rate=0.25, momentum=0.5)
        params = net.get_params()
        clone = TwoLayerNetwork(**params)
        assert clone.get_params() == params

    def test_copy_is_deep(self, small_net):
        dup = small_net.copy()
        dup.inner_[0, 0] += 1.0
        assert dup.inner_[0, 0] != small_net.inner_[0, 0]


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, small_net, small_binary):
        path = tmp_path / "net.bin"
        small_net.save(path)
        back = TwoLayerNetwork.load(path)
        np.testing.assert_array_equal(back.outer_, small_net.outer_)
        np.testing.assert_array_equal(back.inner_, small_net.inner_)
        assert back.activation == small_net.activation
        assert back.output_head == small_net.output_head
        X = small_binary.features
        np.testing.assert_array_equal(back.forward(X), small_net.forward(X))

    def test_header_layout(self, tmp_path, small_net):
        path = tmp_path / "net.bin"
        small_net.save(path)
        raw = path.read_bytes()
        assert raw[:4] == CHECKPOINT_MAGIC == b"P2LN"
        version, n, d, act_code, head_code = struct.unpack("<IQQBB", raw[4:26])
        assert version == CHECKPOINT_VERSION == 1
        assert (n, d) == (small_net.n_neurons, 6)
        assert act_code == 0 and head_code == 0
        assert len(raw) == 26 + 8 * n + 8 * n * d
        outer = np.frombuffer(raw[26 : 26 + 8 * n], dtype="<f8")
        np.testing.assert_array_equal(outer, small_net.outer_)

    def test_tanh_head_codes(self, tmp_path):
        net = TwoLayerNetwork(n_neurons=2, activation="tanh", output_head="sigmoid")
        net.initialize(3)
        path = tmp_path / "net.bin"
        net.save(path)
        raw = path.read_bytes()
        _, _, _, act_code, head_code = struct.unpack("<IQQBB", raw[4:26])
        assert act_code == 1 and head_code == 1

    def test_bad_magic(self, tmp_path, small_net):
        path = tmp_path / "net.bin"
        small_net.save(path)
        raw = bytearray(path.read_bytes())
        raw[0] = 0x58
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="magic"):
            TwoLayerNetwork.load(path)

    def test_bad_version(self, tmp_path, small_net):
        path = tmp_path / "net.bin"
        small_net.save(path)
        raw = bytearray(path.read_bytes())
        raw[4] = 9
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="version"):
            TwoLayerNetwork.load(path)

    def test_truncated(self, tmp_path, small_net):
        path = tmp_path / "net.bin"
        small_net.save(path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError, match="truncated|bytes"):
            TwoLayerNetwork.load(path)
