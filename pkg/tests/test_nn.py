import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from quanvo import oracles
from quanvo.nn import (
    MODEL_NAMES,
    Activation,
    Adam,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    LayerSpec,
    MaxPool2D,
    Sequential,
    TrainingDiverged,
    adam_step,
    build_model,
    conv2d_backward,
    conv2d_forward,
    cross_entropy,
    load_weights,
    save_weights,
    softmax,
)
from quanvo.nn.layers import same_padding
from quanvo.selftest import LAYER_KINDS, check_layer, shape_chain


class TestConvForward:
    def test_identity_kernel(self):
        x = np.array([[[[2.5]]]])
        out = conv2d_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1))
        np.testing.assert_array_equal(out, x)

    def test_ones_valid(self):
        out = conv2d_forward(np.ones((1, 3, 3, 1)), np.ones((2, 2, 1, 1)), np.zeros(1))
        np.testing.assert_array_equal(out[0, :, :, 0], np.full((2, 2), 4.0))

    @pytest.mark.parametrize("padding", ["valid", "same"])
    def test_matches_loop_oracle(self, padding):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(2, 5, 5, 3))
        w = rng.normal(size=(2, 2, 3, 4))
        b = rng.normal(size=4)
        out = conv2d_forward(x, w, b, padding)
        for i in range(2):
            np.testing.assert_allclose(out[i], oracles.conv2d_loop(x[i], w, b, padding), atol=1e-12)
        assert out.shape[1:3] == ((5, 5) if padding == "same" else (4, 4))

    def test_same_padding_is_bottom_right_for_even_kernels(self):
        assert same_padding(2) == (0, 1)
        assert same_padding(3) == (1, 1)
        x = np.zeros((1, 3, 3, 1))
        x[0, 2, 2, 0] = 1.0
        w = np.zeros((2, 2, 1, 1))
        w[0, 0, 0, 0] = 1.0
        out = conv2d_forward(x, w, np.zeros(1), "same")
        assert out[0, 2, 2, 0] == 1.0

    def test_channel_mismatch_names_shapes(self):
        with pytest.raises(ValueError, match=r"\(1, 4, 4, 2\).*\(2, 2, 3, 1\)"):
            conv2d_forward(np.zeros((1, 4, 4, 2)), np.zeros((2, 2, 3, 1)), np.zeros(1))


class TestConvBackward:
    def test_zero_upstream(self):
        rng = np.random.default_rng(1)
        x, w = rng.normal(size=(1, 4, 4, 2)), rng.normal(size=(2, 2, 2, 3))
        gx, gw, gb = conv2d_backward(x, w, np.zeros((1, 3, 3, 3)))
        assert not gx.any() and not gw.any() and not gb.any()

    def test_single_pixel_upstream_gives_patch(self):
        rng = np.random.default_rng(2)
        x, w = rng.normal(size=(1, 4, 4, 2)), rng.normal(size=(2, 2, 2, 1))
        g = np.zeros((1, 3, 3, 1))
        g[0, 1, 2, 0] = 1.0
        _, gw, gb = conv2d_backward(x, w, g)
        np.testing.assert_array_equal(gw[:, :, :, 0], x[0, 1:3, 2:4, :])
        assert gb.tolist() == [1.0]

    def test_input_grad_can_be_skipped(self):
        rng = np.random.default_rng(3)
        x, w = rng.normal(size=(1, 4, 4, 1)), rng.normal(size=(2, 2, 1, 1))
        gx, _, _ = conv2d_backward(x, w, np.ones((1, 3, 3, 1)), input_grad=False)
        assert gx is None


@pytest.mark.parametrize("kind", LAYER_KINDS)
@pytest.mark.parametrize("instance", range(5))
def test_gradient_matches_finite_differences(kind, instance):
    assert check_layer(kind, seed=instance) < 1e-6


def test_relative_error_detects_a_wrong_gradient():
    a = np.array([1.0, 2.0, 3.0])
    assert oracles.relative_error(a, a) == 0.0
    assert oracles.relative_error(a, a * 1.001) > 1e-4


class TestMaxPool:
    def test_single_window(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)
        assert MaxPool2D().forward(x).ravel().tolist() == [4.0]

    def test_constant(self):
        out = MaxPool2D().forward(np.full((1, 6, 4, 2), 3.0))
        assert out.shape == (1, 3, 2, 2) and np.all(out == 3.0)

    def test_quanv_branch_shape(self):
        assert MaxPool2D().forward(np.zeros((1, 20, 50, 4))).shape == (1, 10, 25, 4)

    def test_odd_dims_floor(self):
        assert MaxPool2D().forward(np.zeros((1, 39, 99, 4))).shape == (1, 19, 49, 4)

    def test_ties_route_to_first_max(self):
        pool = MaxPool2D()
        pool.forward(np.ones((1, 2, 2, 1)))
        g = pool.backward(np.array([[[[5.0]]]]))
        assert g[0, :, :, 0].tolist() == [[5.0, 0.0], [0.0, 0.0]]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            MaxPool2D().forward(np.zeros((1, 0, 4, 1)))


class TestSoftmaxCrossEntropy:
    def test_uniform(self):
        np.testing.assert_allclose(softmax(np.zeros((1, 2))), [[0.5, 0.5]])
        for label in (0, 1):
            assert cross_entropy(np.zeros((1, 2)), [label])[0] == pytest.approx(math.log(2))

    @given(arrays(np.float64, (3, 2), elements=st.floats(-50, 50)), st.lists(st.integers(0, 1), min_size=3, max_size=3))
    def test_properties(self, z, y):
        p = softmax(z)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert cross_entropy(z, np.array(y))[0] >= 0.0

    def test_extreme_logits_stay_finite(self):
        loss, g = cross_entropy(np.array([[1000.0, -1000.0]]), [1])
        assert loss == pytest.approx(2000.0) and np.all(np.isfinite(g))

    @pytest.mark.parametrize("bad", [[2], [-1], [0.5]])
    def test_bad_labels(self, bad):
        with pytest.raises(ValueError):
            cross_entropy(np.zeros((1, 2)), np.array(bad))


class TestDropout:
    def test_eval_identity(self):
        x = np.random.default_rng(0).normal(size=(4, 8))
        assert Dropout(0.5).forward(x, training=False) is x

    def test_inverted_scaling(self):
        out = Dropout(0.5, np.random.default_rng(0)).forward(np.ones((200, 50)), training=True)
        assert set(np.unique(out)) <= {0.0, 2.0}
        assert out.mean() == pytest.approx(1.0, abs=0.05)

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            Dropout(1.0)


class TestModels:
    def test_cnn1_chain(self):
        assert shape_chain("CNN1") == [(40, 100, 1), (39, 99, 4), (19, 49, 4), (3724,), (64,), (2,)]

    def test_qnn1_chain(self):
        assert shape_chain("QNN1") == [(20, 50, 4), (10, 25, 4), (1000,), (64,), (2,)]

    def test_qnn2_chain(self):
        assert shape_chain("QNN2") == [(20, 50, 4), (10, 25, 4), (10, 25, 16), (5, 12, 16), (960,), (64,), (2,)]

    def test_cnn2_chain(self):
        assert shape_chain("CNN2")[-4:] == [(9, 24, 16), (3456,), (64,), (2,)]

    def test_layer_lists(self):
        kinds = [ls.kind for ls in build_model("QNN1").layers]
        assert kinds == ["MaxPool2D", "Flatten", "Dense", "Activation", "Dropout", "Dense", "Activation"]
        cnn2 = build_model("cnn2").layers
        assert cnn2[0] == LayerSpec("Conv2D", filters=4, kernel=2, padding="valid")
        assert cnn2[3] == LayerSpec("Conv2D", filters=16, kernel=2, padding="same")
        assert cnn2[-1].activation == "softmax" and cnn2[-2].units == 2
        assert [ls.rate for ls in cnn2 if ls.kind == "Dropout"] == [0.5]
        assert [ls.activation for ls in cnn2 if ls.kind == "Activation"] == ["relu", "relu", "tanh", "softmax"]

    def test_unknown_model(self):
        with pytest.raises(ValueError):
            build_model("MLP")

    def test_padding_only_on_conv(self):
        with pytest.raises(ValueError):
            LayerSpec("Dense", units=3, padding="same")

    @pytest.mark.parametrize("name", MODEL_NAMES)
    def test_forward_probabilities(self, name):
        spec = build_model(name)
        model = spec.build(0)
        x = np.random.default_rng(0).uniform(size=(3, *spec.input_shape))
        p = model.predict_proba(x)
        assert p.shape == (3, 2)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_array_equal(p, model.predict_proba(x))

    def test_init_reproducible(self):
        a = build_model("CNN2").build(5).get_weights()
        b = build_model("CNN2").build(5).get_weights()
        c = build_model("CNN2").build(6).get_weights()
        assert all(x.tobytes() == y.tobytes() for x, y in zip(a, b))
        assert any(x.tobytes() != y.tobytes() for x, y in zip(a, c))

    def test_whole_model_gradient(self):
        rng = np.random.default_rng(4)
        model = Sequential([Conv2D(1, 2, 2, "same", rng), Activation("tanh"), MaxPool2D(2),
                            Flatten(), Dense(8, 2, rng)], (4, 4, 1))
        x = rng.normal(size=(3, 4, 4, 1))
        y = np.array([0, 1, 1])
        model.loss_and_grads(x, y)
        w = model.layers[0].params["w"]
        analytic = model.layers[0].grads["w"].copy()
        numeric = oracles.numerical_gradient(lambda: cross_entropy(model.logits(x), y)[0], w)
        assert oracles.relative_error(analytic, numeric) < 1e-6


def adam_scalar_reference(steps, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8, w=1.0):
    """Plain-float Adam on f(w) = w**2."""
    m = v = 0.0
    for t in range(1, steps + 1):
        g = 2 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return w


class TestAdam:
    def test_zero_gradient(self):
        p = [np.array([1.5, -2.0])]
        adam_step(p, [np.zeros(2)])
        np.testing.assert_array_equal(p[0], [1.5, -2.0])

    def test_first_step_is_lr_times_sign(self):
        p = [np.array([0.0, 0.0])]
        adam_step(p, [np.array([3.0, -0.2])], lr=1e-3)
        np.testing.assert_allclose(p[0], [-1e-3, 1e-3], rtol=1e-6)

    def test_quadratic_100_steps(self):
        w = [np.array([1.0])]
        state = None
        for _ in range(100):
            state = adam_step(w, [2 * w[0]], state)
        expected = adam_scalar_reference(100)
        assert expected == pytest.approx(0.901743598078609, abs=1e-12)
        assert w[0][0] == pytest.approx(expected, abs=1e-12)
        assert abs(w[0][0]) < 1.0

    def test_non_finite_gradient(self):
        with pytest.raises(TrainingDiverged):
            Adam().step([np.zeros(1)], [np.array([np.nan])])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            Adam().step([np.zeros(2)], [np.zeros(3)])


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = build_model("QNN2").build(3)
        save_weights(tmp_path / "w.qvwts", model)
        raw = (tmp_path / "w.qvwts").read_bytes()
        assert raw[:6] == b"QVWTS1"
        name, weights = load_weights(tmp_path / "w.qvwts")
        assert name == "QNN2"
        fresh = build_model("QNN2").build(99)
        fresh.set_weights(weights)
        x = np.random.default_rng(0).uniform(size=(2, 20, 50, 4))
        np.testing.assert_array_equal(fresh.predict_proba(x), model.predict_proba(x))

    def test_rejects_other_files(self, tmp_path):
        (tmp_path / "x").write_bytes(b"garbage")
        with pytest.raises(ValueError):
            load_weights(tmp_path / "x")

    def test_set_weights_checks_shapes(self):
        model = build_model("QNN1").build(0)
        with pytest.raises(ValueError):
            model.set_weights([np.zeros(1)])


def test_two_layer_net_separates_2d_data():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200, 2))
    y = (x[:, 0] + 0.5 * x[:, 1] > 0).astype(np.int64)
    x += np.where(y[:, None] == 1, 0.3, -0.3) * np.array([1.0, 0.5])  # widen the margin
    model = Sequential([Dense(2, 16, rng), Activation("tanh"), Dense(16, 2, rng), Activation("softmax")], (2,))
    opt = Adam()
    params = model.parameters()
    for epoch in range(200):
        for start in range(0, 200, 32):
            model.loss_and_grads(x[start:start + 32], y[start:start + 32])
            opt.step([l.params[k] for l, k in params], [l.grads[k] for l, k in params])
        if np.all(model.predict_proba(x).argmax(axis=1) == y):
            break
    assert np.all(model.predict_proba(x).argmax(axis=1) == y)
    assert epoch < 200
