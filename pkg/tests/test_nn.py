import numpy as np
import pytest

from fudnn.errors import ConfigError
from fudnn.nn import (
    Adam,
    Network,
    NetworkSpec,
    adam_step,
    default_gradcheck_spec,
    evaluate,
    grad_check,
    load_checkpoint,
    run_network_gradcheck,
    save_checkpoint,
    train_network,
)
from fudnn.nn import ops


def fd_grad(loss_fn, arr, eps=1e-6):
    """Central finite differences over every element of arr."""
    g = np.zeros_like(arr)
    flat = arr.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = loss_fn()
        flat[i] = orig - eps
        down = loss_fn()
        flat[i] = orig
        gf[i] = (up - down) / (2 * eps)
    return g


def max_rel_err(a, n):
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)))


class TestConv:
    def test_table_shape_40_kernels(self):
        x = np.zeros((1, 1, 64, 500))
        w = np.zeros((40, 1, 50))
        y, _ = ops.conv2d_forward(x, w, np.zeros(40))
        assert y.shape == (1, 40, 64, 451)

    def test_impulse_kernel_reproduces_input_slice(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 1, 4, 30))
        w = np.zeros((1, 1, 5))
        w[0, 0, 2] = 1.0
        y, _ = ops.conv2d_forward(x, w, np.zeros(1))
        np.testing.assert_allclose(y[:, 0], x[:, 0, :, 2:28], atol=1e-12)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 3, 4, 16))
        w = rng.standard_normal((5, 3, 6))
        b = rng.standard_normal(5)
        proj = rng.standard_normal((2, 5, 4, 11))
        y, cache = ops.conv2d_forward(x, w, b)
        dx, dw, db = ops.conv2d_backward(proj, cache)
        loss = lambda: float(np.sum(ops.conv2d_forward(x, w, b)[0] * proj))
        assert max_rel_err(dx, fd_grad(loss, x)) < 1e-4
        assert max_rel_err(dw, fd_grad(loss, w)) < 1e-4
        assert max_rel_err(db, fd_grad(loss, b)) < 1e-4

    def test_kernel_longer_than_input_rejected(self):
        with pytest.raises(ValueError):
            ops.conv2d_forward(np.zeros((1, 1, 2, 4)), np.zeros((1, 1, 6)), np.zeros(1))


class TestBatchNorm:
    def test_train_mode_standardizes_each_map(self):
        rng = np.random.default_rng(2)
        x = 3.0 + 2.0 * rng.standard_normal((8, 3, 4, 50))
        y, _ = ops.batchnorm_forward(
            x, np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), train=True
        )
        assert np.max(np.abs(y.mean(axis=(0, 2, 3)))) < 1e-6
        assert np.max(np.abs(y.var(axis=(0, 2, 3)) - 1.0)) < 1e-4

    def test_standardized_input_passes_through(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((16, 2, 3, 40))
        x -= x.mean(axis=(0, 2, 3), keepdims=True)
        x /= x.std(axis=(0, 2, 3), keepdims=True)
        y, _ = ops.batchnorm_forward(
            x, np.ones(2), np.zeros(2), np.zeros(2), np.ones(2), train=True, eps=1e-12
        )
        np.testing.assert_allclose(y, x, atol=1e-6)

    def test_batch_of_one_rejected_in_train_mode(self):
        with pytest.raises(ConfigError):
            ops.batchnorm_forward(
                np.zeros((1, 2, 3, 4)), np.ones(2), np.zeros(2),
                np.zeros(2), np.ones(2), train=True,
            )

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((4, 2, 3, 10))
        gamma = rng.uniform(0.5, 1.5, 2)
        beta = rng.standard_normal(2)
        proj = rng.standard_normal(x.shape)

        def loss():
            y, _ = ops.batchnorm_forward(
                x, gamma, beta, np.zeros(2), np.ones(2), train=True
            )
            return float(np.sum(y * proj))

        y, cache = ops.batchnorm_forward(
            x, gamma, beta, np.zeros(2), np.ones(2), train=True
        )
        dx, dgamma, dbeta = ops.batchnorm_backward(proj, cache)
        assert max_rel_err(dx, fd_grad(loss, x)) < 1e-4
        assert max_rel_err(dgamma, fd_grad(loss, gamma)) < 1e-4
        assert max_rel_err(dbeta, fd_grad(loss, beta)) < 1e-4

    def test_eval_uses_running_statistics(self):
        x = np.full((2, 1, 1, 4), 10.0)
        rm = np.array([10.0])
        rv = np.array([4.0])
        y, _ = ops.batchnorm_forward(x, np.ones(1), np.zeros(1), rm, rv, train=False)
        np.testing.assert_allclose(y, 0.0, atol=1e-3)


class TestElu:
    def test_values(self):
        x = np.array([-20.0, -1.0, 0.0, 2.0])
        y, _ = ops.elu_forward(x)
        assert y[2] == 0.0
        assert y[3] == 2.0
        assert abs(y[0] - (-1.0)) < 1e-8
        assert abs(y[1] - (np.expm1(-1.0))) < 1e-12

    def test_gradient(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(64)
        proj = rng.standard_normal(64)
        y, cache = ops.elu_forward(x)
        dx = ops.elu_backward(proj, cache)
        loss = lambda: float(np.sum(ops.elu_forward(x)[0] * proj))
        assert max_rel_err(dx, fd_grad(loss, x)) < 1e-6


class TestAvgPool:
    def test_table_lengths(self):
        y, _ = ops.avgpool_forward(np.zeros((1, 80, 64, 402)), 7)
        assert y.shape == (1, 80, 64, 57)
        y2, _ = ops.avgpool_forward(np.zeros((1, 80, 1, 57)), 7)
        assert y2.shape == (1, 80, 1, 8)

    def test_constant_input_preserved(self):
        y, _ = ops.avgpool_forward(np.full((1, 1, 1, 21), 3.5), 7)
        np.testing.assert_allclose(y, 3.5)

    def test_gradient(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((2, 2, 3, 17))
        proj = rng.standard_normal((2, 2, 3, 2))
        _, cache = ops.avgpool_forward(x, 7)
        dx = ops.avgpool_backward(proj, cache)
        loss = lambda: float(np.sum(ops.avgpool_forward(x, 7)[0] * proj))
        assert max_rel_err(dx, fd_grad(loss, x)) < 1e-6


class TestDepthwise:
    def test_collapses_channel_axis(self):
        y, _ = ops.depthwise_forward(
            np.zeros((1, 80, 64, 57)), np.zeros((80, 64)), np.zeros(80)
        )
        assert y.shape == (1, 80, 1, 57)

    def test_one_hot_kernel_selects_channel(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((2, 3, 6, 11))
        w = np.zeros((3, 6))
        w[:, 4] = 1.0
        y, _ = ops.depthwise_forward(x, w, np.zeros(3))
        np.testing.assert_allclose(y[:, :, 0, :], x[:, :, 4, :], atol=1e-12)

    def test_gradients(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((2, 3, 4, 9))
        w = rng.standard_normal((3, 4))
        b = rng.standard_normal(3)
        proj = rng.standard_normal((2, 3, 1, 9))
        _, cache = ops.depthwise_forward(x, w, b)
        dx, dw, db = ops.depthwise_backward(proj, cache)
        loss = lambda: float(np.sum(ops.depthwise_forward(x, w, b)[0] * proj))
        assert max_rel_err(dx, fd_grad(loss, x)) < 1e-4
        assert max_rel_err(dw, fd_grad(loss, w)) < 1e-4
        assert max_rel_err(db, fd_grad(loss, b)) < 1e-4


class TestDropout:
    def test_p_zero_is_identity(self):
        x = np.ones((4, 4))
        y, cache = ops.dropout_forward(x, 0.0, True, np.random.default_rng(0))
        assert y is x and cache is None

    def test_eval_mode_is_identity(self):
        x = np.ones((4, 4))
        y, cache = ops.dropout_forward(x, 0.5, False, None)
        assert y is x and cache is None

    def test_empirical_drop_rate(self):
        rng = np.random.default_rng(9)
        x = np.ones(100_000)
        y, _ = ops.dropout_forward(x, 0.5, True, rng)
        dropped = np.mean(y == 0)
        assert abs(dropped - 0.5) < 0.01
        kept = y[y != 0]
        np.testing.assert_allclose(kept, 2.0)

    def test_survivors_scaled_preserves_mean(self):
        rng = np.random.default_rng(10)
        x = np.ones(100_000)
        y, _ = ops.dropout_forward(x, 0.3, True, rng)
        assert abs(y.mean() - 1.0) < 0.01


class TestBiLstm:
    @staticmethod
    def params(rng, fin, hid, dtype=np.float64):
        def mat(shape):
            return rng.standard_normal(shape).astype(dtype) * 0.4
        p = {}
        for d in ("fwd", "bwd"):
            p[f"{d}_wx"] = mat((fin, 4 * hid))
            p[f"{d}_wh"] = mat((hid, 4 * hid))
            p[f"{d}_b"] = mat(4 * hid)
        return p

    def test_output_shape_8x200(self):
        rng = np.random.default_rng(11)
        p = self.params(rng, 80, 100)
        x = rng.standard_normal((1, 8, 80))
        y, _ = ops.bilstm_forward(x, p)
        assert y.shape == (1, 8, 200)

    def test_zero_weights_give_zero_output(self):
        p = {k: np.zeros_like(v) for k, v in self.params(np.random.default_rng(0), 5, 4).items()}
        x = np.random.default_rng(1).standard_normal((3, 6, 5))
        y, _ = ops.bilstm_forward(x, p)
        assert np.all(y == 0)

    def test_full_gradient_check_3_steps_4_features(self):
        rng = np.random.default_rng(12)
        fin, hid = 4, 3
        p = self.params(rng, fin, hid)
        x = rng.standard_normal((2, 3, fin))
        proj = rng.standard_normal((2, 3, 2 * hid))

        def loss():
            y, _ = ops.bilstm_forward(x, p)
            return float(np.sum(y * proj))

        y, cache = ops.bilstm_forward(x, p)
        dx, grads = ops.bilstm_backward(proj, cache)
        assert max_rel_err(dx, fd_grad(loss, x)) < 1e-4
        for name, g in grads.items():
            assert max_rel_err(g, fd_grad(loss, p[name])) < 1e-4, name


class TestDenseSoftmax:
    def test_uniform_logits_four_classes_loss_ln4(self):
        logits = np.zeros((3, 4))
        labels = np.array([0, 1, 3])
        loss, probs, _ = ops.softmax_cross_entropy(logits, labels)
        assert loss == pytest.approx(np.log(4.0), abs=1e-12)
        np.testing.assert_allclose(probs, 0.25)

    def test_probs_sum_to_one(self):
        rng = np.random.default_rng(13)
        logits = 10 * rng.standard_normal((50, 4))
        _, probs, _ = ops.softmax_cross_entropy(logits, rng.integers(0, 4, 50))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(probs > 0) and np.all(probs < 1)

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(14)
        logits = rng.standard_normal((20, 3))
        loss, _, _ = ops.softmax_cross_entropy(logits, rng.integers(0, 3, 20))
        assert loss >= 0.0

    def test_dense_and_loss_gradient(self):
        rng = np.random.default_rng(15)
        x = rng.standard_normal((4, 6))
        w = rng.standard_normal((6, 3))
        b = rng.standard_normal(3)
        labels = rng.integers(0, 3, 4)

        def loss():
            logits, _ = ops.dense_forward(x, w, b)
            return ops.softmax_cross_entropy(logits, labels)[0]

        logits, cache = ops.dense_forward(x, w, b)
        _, _, dlogits = ops.softmax_cross_entropy(logits, labels)
        dx, dw, db = ops.dense_backward(dlogits, cache)
        assert max_rel_err(dx, fd_grad(loss, x)) < 1e-6
        assert max_rel_err(dw, fd_grad(loss, w)) < 1e-6
        assert max_rel_err(db, fd_grad(loss, b)) < 1e-6


class TestAdam:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        p = np.array([1.0, -2.0, 3.0])
        m = np.zeros(3)
        v = np.zeros(3)
        adam_step(p, np.zeros(3), m, v, t=1)
        np.testing.assert_array_equal(p, [1.0, -2.0, 3.0])

    def test_first_step_matches_hand_computed_update(self):
        lr, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8
        g = np.array([0.3, -0.7, 2.0])
        p = np.zeros(3)
        m = np.zeros(3)
        v = np.zeros(3)
        adam_step(p, g, m, v, t=1, lr=lr, beta1=b1, beta2=b2, eps=eps)
        m_hand = (1 - b1) * g / (1 - b1)
        v_hand = (1 - b2) * g * g / (1 - b2)
        want = -lr * m_hand / (np.sqrt(v_hand) + eps)
        np.testing.assert_allclose(p, want, atol=1e-15)

    def test_two_runs_same_seed_bit_identical(self):
        def run():
            spec = default_gradcheck_spec()
            net = Network(spec, seed=3)
            rng = np.random.default_rng(0)
            x = rng.standard_normal((8, 1, spec.n_channels, spec.n_samples)).astype(np.float32)
            y = rng.integers(0, spec.n_classes, 8)
            train_network(net, x, y, epochs=3, batch_size=4, seed=5)
            return net.get_param_vector()

        np.testing.assert_array_equal(run(), run())


class TestNetwork:
    def test_full_size_shape_trace(self):
        spec = NetworkSpec()
        trace = spec.block_shapes()
        assert trace == [
            (1, 64, 500),
            (40, 64, 451),
            (80, 64, 402),
            (80, 64, 57),
            (80, 1, 57),
            (80, 1, 8),
            (8, 200),
            (1600,),
            (4,),
        ]

    def test_zero_batch_forward_is_finite_and_normalized(self):
        net = Network(NetworkSpec(), seed=0)
        probs = net.predict_probs(np.zeros((1, 1, 64, 500), dtype=np.float32))
        assert np.all(np.isfinite(probs))
        assert probs.sum() == pytest.approx(1.0, abs=1e-6)

    def test_incompatible_chain_rejected_at_construction(self):
        with pytest.raises(ConfigError):
            NetworkSpec(n_samples=60)  # two kernel-50 convolutions cannot fit

    def test_variant_prefixes_share_leading_blocks(self):
        names = {
            v: [l.name for l in Network(NetworkSpec(
                n_samples=500, variant=v), seed=0).layers]
            for v in ("cnn1", "cnn2", "cnn3", "fudnn")
        }
        assert names["cnn1"][:2] == names["cnn2"][:2] == names["cnn3"][:2]
        assert names["cnn2"][:5] == names["cnn3"][:5] == names["fudnn"][:5]
        assert names["cnn3"][:10] == names["fudnn"][:10]
        assert "bilstm" in names["fudnn"] and "bilstm" not in names["cnn3"]

    def test_eval_forward_is_pure(self):
        spec = default_gradcheck_spec()
        net = Network(spec, seed=1)
        x = np.random.default_rng(0).standard_normal(
            (3, 1, spec.n_channels, spec.n_samples)
        ).astype(np.float32)
        before = net.get_param_vector().copy()
        state_before = [
            (k, arr.copy()) for k, layer, n in net.state_entries()
            for arr in [layer.state[n]]
        ]
        p1 = net.predict_probs(x)
        p2 = net.predict_probs(x)
        np.testing.assert_array_equal(p1, p2)
        np.testing.assert_array_equal(net.get_param_vector(), before)
        for (k, old), (k2, layer, n) in zip(state_before, net.state_entries()):
            np.testing.assert_array_equal(old, layer.state[n])


class TestGradCheckHarness:
    def test_linear_single_layer_net_is_tight(self):
        spec = NetworkSpec(
            n_channels=3, n_samples=12, n_classes=2, variant="cnn1",
            conv1_maps=2, kernel_len=3, dropout_p=0.0,
        )
        net = Network(spec, seed=0, dtype=np.float64)
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 1, 3, 12))
        labels = rng.integers(0, 2, 2)
        err = grad_check(net, x, labels)
        assert err < 1e-7

    def test_full_downscaled_stack_passes(self):
        assert run_network_gradcheck(default_gradcheck_spec()) < 1e-4

    def test_corrupted_backward_is_detected(self):
        spec = default_gradcheck_spec()
        net = Network(spec, seed=0, dtype=np.float64)
        for layer in net.layers:
            if layer.name == "elu2":
                orig = layer.backward
                layer.backward = lambda dy: orig(dy) * 1.1
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 1, spec.n_channels, spec.n_samples))
        labels = rng.integers(0, spec.n_classes, 2)
        assert grad_check(net, x, labels) > 1e-2


class TestCheckpoint:
    def test_round_trip_restores_parameters_and_behavior(self, tmp_path):
        spec = default_gradcheck_spec()
        net = Network(spec, seed=4)
        rng = np.random.default_rng(0)
        x = rng.standard_normal((4, 1, spec.n_channels, spec.n_samples)).astype(np.float32)
        y = rng.integers(0, spec.n_classes, 4)
        train_network(net, x, y, epochs=2, batch_size=2, seed=1)
        stem = tmp_path / "model"
        save_checkpoint(net, stem, epoch=2, channel_weights=np.linspace(0, 1, spec.n_channels),
                        class_labels=["PP", "PW", "OD"])
        net2, manifest = load_checkpoint(stem)
        np.testing.assert_array_equal(net.get_param_vector(), net2.get_param_vector())
        np.testing.assert_array_equal(net.predict_probs(x), net2.predict_probs(x))
        assert manifest["epoch"] == 2
        assert manifest["class_labels"] == ["PP", "PW", "OD"]
        assert len(manifest["channel_weights"]) == spec.n_channels

    def test_blob_size_mismatch_rejected(self, tmp_path):
        from fudnn.errors import FormatError

        spec = default_gradcheck_spec()
        net = Network(spec, seed=4)
        stem = tmp_path / "model"
        save_checkpoint(net, stem)
        blob = (stem.with_suffix(".bin")).read_bytes()
        stem.with_suffix(".bin").write_bytes(blob[:-4])
        with pytest.raises(FormatError):
            load_checkpoint(stem)


class TestTrainLoop:
    def test_loss_decreases_on_separable_data(self):
        spec = NetworkSpec(
            n_channels=4, n_samples=40, n_classes=2, variant="fudnn",
            conv1_maps=2, conv2_maps=3, kernel_len=5, pool_len=2,
            lstm_hidden=4, dropout_p=0.1,
        )
        net = Network(spec, seed=0)
        rng = np.random.default_rng(2)
        n = 64
        y = np.arange(n) % 2
        t = np.arange(40) / 40.0
        x = np.zeros((n, 1, 4, 40), dtype=np.float32)
        for i in range(n):
            freq = 4.0 if y[i] else 9.0
            x[i, 0] = np.sin(2 * np.pi * freq * t) + 0.1 * rng.standard_normal((4, 40))
        hist = train_network(net, x, y, epochs=10, batch_size=8, lr=3e-3, seed=3)
        assert hist["loss"][-1] < hist["loss"][0] * 0.7
        acc, confusion, _ = evaluate(net, x, y)
        assert confusion.sum() == n

    def test_evaluate_confusion_rows_match_class_counts(self):
        spec = default_gradcheck_spec()
        net = Network(spec, seed=0)
        rng = np.random.default_rng(1)
        x = rng.standard_normal((30, 1, spec.n_channels, spec.n_samples)).astype(np.float32)
        y = np.array([i % spec.n_classes for i in range(30)])
        _, confusion, _ = evaluate(net, x, y)
        np.testing.assert_array_equal(confusion.sum(axis=1), np.bincount(y))
