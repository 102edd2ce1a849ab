"""Encoder/head forward oracles and exact optimizer update rules."""

import math

import numpy as np
import pytest

from replaycl import Encoder, SGD, Adam, TaskHead, Tensor, glorot_uniform, make_optimizer
from replaycl.losses import mse


class TestGlorot:
    def test_samples_stay_inside_the_limit(self):
        rng = np.random.default_rng(0)
        limit = math.sqrt(6.0 / (30 + 50))
        w = glorot_uniform(rng, 30, 50, (30, 50))
        assert w.shape == (30, 50)
        assert np.all(np.abs(w) <= limit)
        # uniform on +/- limit: mean near 0, spread near limit/sqrt(3)
        assert abs(w.mean()) < 0.02
        np.testing.assert_allclose(w.std(), limit / math.sqrt(3), rtol=0.1)

    def test_same_seed_same_weights(self):
        w1 = glorot_uniform(np.random.default_rng(7), 4, 3, (4, 3))
        w2 = glorot_uniform(np.random.default_rng(7), 4, 3, (4, 3))
        np.testing.assert_array_equal(w1, w2)


class TestEncoder:
    def test_forward_matches_manual_numpy(self):
        rng = np.random.default_rng(1)
        enc = Encoder(4, [6], (3,), activation="relu", rng=np.random.default_rng(2))
        x = rng.normal(size=(5, 4))
        (w1, b1), (w2, b2) = enc.layers
        h = np.maximum(x @ w1.data + b1.data, 0.0)
        expect = h @ w2.data + b2.data
        np.testing.assert_allclose(enc.forward(Tensor(x)).data, expect, rtol=1e-14)

    def test_tanh_hidden_and_affine_final(self):
        rng = np.random.default_rng(3)
        enc = Encoder(3, [4, 4], (2,), activation="tanh", rng=np.random.default_rng(4))
        x = rng.normal(size=(2, 3))
        h = x
        for w, b in enc.layers[:-1]:
            h = np.tanh(h @ w.data + b.data)
        w, b = enc.layers[-1]
        np.testing.assert_allclose(enc.forward(Tensor(x)).data, h @ w.data + b.data, rtol=1e-14)

    def test_three_axis_feature_shape_is_a_row_major_reshape(self):
        x = np.random.default_rng(5).normal(size=(3, 4))
        flat = Encoder(4, [5], (8,), rng=np.random.default_rng(6)).forward(Tensor(x)).data
        block = Encoder(4, [5], (2, 2, 2), rng=np.random.default_rng(6)).forward(Tensor(x)).data
        assert block.shape == (3, 2, 2, 2)
        np.testing.assert_array_equal(block.reshape(3, 8), flat)

    def test_parameters_lists_every_layer(self):
        enc = Encoder(3, [4, 5], (2,), rng=np.random.default_rng(0))
        params = enc.parameters()
        assert len(params) == 6
        assert all(p.requires_grad for p in params)
        assert enc.feature_dim == 2

    def test_same_rng_state_same_init(self):
        e1 = Encoder(3, [4], (2,), rng=np.random.default_rng(9))
        e2 = Encoder(3, [4], (2,), rng=np.random.default_rng(9))
        for p1, p2 in zip(e1.parameters(), e2.parameters()):
            np.testing.assert_array_equal(p1.data, p2.data)

    def test_input_validation(self):
        enc = Encoder(3, [4], (2,), rng=np.random.default_rng(0))
        with pytest.raises(ValueError, match="width mismatch"):
            enc.forward(Tensor(np.ones((2, 5))))
        with pytest.raises(ValueError, match="batch"):
            enc.forward(Tensor(np.ones(3)))
        with pytest.raises(ValueError, match="activation"):
            Encoder(3, [4], (2,), activation="gelu", rng=np.random.default_rng(0))
        with pytest.raises(ValueError, match="feature_shape"):
            Encoder(3, [4], (2, 2), rng=np.random.default_rng(0))
        with pytest.raises(ValueError, match="Generator"):
            Encoder(3, [4], (2,))


class TestTaskHead:
    def test_identity_weight_passes_features_through(self):
        head = TaskHead(3, 3, task_index=1, rng=np.random.default_rng(0))
        head.weight.data = np.eye(3)
        head.bias.data = np.zeros(3)
        x = np.random.default_rng(1).normal(size=(4, 3))
        np.testing.assert_array_equal(head.forward(Tensor(x)).data, x)

    def test_zero_weight_leaves_only_the_bias(self):
        head = TaskHead(3, 2, task_index=2, rng=np.random.default_rng(0))
        head.weight.data = np.zeros((3, 2))
        head.bias.data = np.array([0.5, -1.0])
        out = head.forward(Tensor(np.ones((5, 3)))).data
        np.testing.assert_array_equal(out, np.tile([0.5, -1.0], (5, 1)))

    def test_flattens_three_axis_features(self):
        head = TaskHead(8, 2, task_index=1, rng=np.random.default_rng(0))
        x = np.random.default_rng(2).normal(size=(3, 2, 2, 2))
        got = head.forward(Tensor(x)).data
        expect = x.reshape(3, 8) @ head.weight.data + head.bias.data
        np.testing.assert_allclose(got, expect, rtol=1e-14)

    def test_bias_starts_at_zero(self):
        head = TaskHead(4, 3, task_index=1, rng=np.random.default_rng(0))
        np.testing.assert_array_equal(head.bias.data, np.zeros(3))

    def test_validation(self):
        with pytest.raises(ValueError, match="task_index"):
            TaskHead(3, 2, task_index=0, rng=np.random.default_rng(0))
        head = TaskHead(3, 2, task_index=1, rng=np.random.default_rng(0))
        with pytest.raises(ValueError, match="width mismatch"):
            head.forward(Tensor(np.ones((2, 4))))


class TestSGD:
    def test_update_is_exact(self):
        p = Tensor([1.0], requires_grad=True)
        p.grad = np.array([1.0])
        SGD([p], lr=0.2).step()
        assert p.data[0] == 1.0 - 0.2 * 1.0

    def test_missing_grad_raises(self):
        p = Tensor([1.0], requires_grad=True)
        with pytest.raises(ValueError, match="missing"):
            SGD([p], lr=0.1).step()

    def test_descends_a_quadratic(self):
        p = Tensor([4.0], requires_grad=True)
        opt = SGD([p], lr=0.25)
        for _ in range(40):
            loss = ((p - 1.0) * (p - 1.0)).sum()
            loss.backward()
            opt.step()
            opt.zero_grad()
        np.testing.assert_allclose(p.data, [1.0], atol=1e-9)

    def test_bad_lr(self):
        with pytest.raises(ValueError, match="learning rate"):
            SGD([], lr=0.0)


class TestAdam:
    def test_first_step_matches_hand_formula(self):
        p = Tensor([2.0, -3.0], requires_grad=True)
        g = np.array([0.5, -0.2])
        p.grad = g.copy()
        opt = Adam([p], lr=0.1, betas=(0.9, 0.999), eps=1e-8)
        opt.step()
        # t=1: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
        expect = np.array([2.0, -3.0]) - 0.1 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(p.data, expect, rtol=1e-14)

    def test_trajectory_matches_independent_oracle(self):
        rng = np.random.default_rng(8)
        target = rng.normal(size=4)
        p = Tensor(np.zeros(4), requires_grad=True)
        opt = Adam([p], lr=0.05, betas=(0.8, 0.99), eps=1e-8)

        ref = np.zeros(4)
        m = np.zeros(4)
        v = np.zeros(4)
        for t in range(1, 21):
            loss = mse(p.reshape(1, 4), Tensor(target.reshape(1, 4)))
            loss.backward()
            g = p.grad.copy()
            opt.step()
            opt.zero_grad()

            g_ref = 2.0 * (ref - target) / 4.0
            np.testing.assert_allclose(g, g_ref, rtol=1e-12)
            m = 0.8 * m + 0.2 * g_ref
            v = 0.99 * v + 0.01 * g_ref * g_ref
            ref = ref - 0.05 * (m / (1 - 0.8**t)) / (np.sqrt(v / (1 - 0.99**t)) + 1e-8)
            np.testing.assert_allclose(p.data, ref, rtol=1e-12)

    def test_missing_grad_raises(self):
        p = Tensor([1.0], requires_grad=True)
        with pytest.raises(ValueError, match="missing"):
            Adam([p], lr=0.1).step()

    def test_bad_betas(self):
        with pytest.raises(ValueError, match="betas"):
            Adam([], lr=0.1, betas=(1.0, 0.999))


class TestMakeOptimizer:
    def test_dispatch(self):
        p = Tensor([1.0], requires_grad=True)
        assert isinstance(make_optimizer("sgd", [p], 0.1), SGD)
        opt = make_optimizer("adam", [p], 0.1, betas=(0.5, 0.6))
        assert isinstance(opt, Adam)
        assert opt.betas == (0.5, 0.6)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="optimizer"):
            make_optimizer("rmsprop", [], 0.1)
