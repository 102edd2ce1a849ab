"""Loss oracles: hand values, scipy cross-checks, and the shared
task/replay code path."""

import numpy as np
import pytest
from scipy.special import log_softmax

from replaycl import (
    EmptyBufferError,
    Encoder,
    ReplayItem,
    TaskHead,
    Tensor,
    cross_entropy,
    l1,
    mse,
    per_sample_losses,
    pointwise_loss,
    replay_loss,
    task_loss,
)


def _model(input_dim=4, feature_dim=3, output_dim=3, seed=0):
    enc = Encoder(input_dim, [5], (feature_dim,), rng=np.random.default_rng(seed))
    head = TaskHead(feature_dim, output_dim, task_index=1, rng=np.random.default_rng(seed + 1))
    return enc, head


class TestCrossEntropy:
    def test_uniform_logits_give_log_num_classes(self):
        logits = Tensor(np.zeros((6, 4)))
        labels = np.array([0, 1, 2, 3, 0, 2])
        assert float(cross_entropy(logits, labels).data) == pytest.approx(np.log(4), rel=1e-15)

    def test_saturated_correct_logit_gives_near_zero(self):
        logits = np.zeros((3, 5))
        labels = np.array([1, 4, 0])
        logits[np.arange(3), labels] = 50.0
        assert float(cross_entropy(Tensor(logits), labels).data) < 1e-3

    def test_matches_scipy_log_softmax(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(8, 5)) * 3.0
        labels = rng.integers(0, 5, size=8)
        expect = -log_softmax(logits, axis=1)[np.arange(8), labels].mean()
        got = float(cross_entropy(Tensor(logits), labels).data)
        np.testing.assert_allclose(got, expect, rtol=1e-12)

    def test_gradient_is_softmax_minus_onehot(self):
        rng = np.random.default_rng(1)
        logits = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        labels = np.array([2, 0, 1, 2])
        cross_entropy(logits, labels).backward()
        soft = np.exp(log_softmax(logits.data, axis=1))
        onehot = np.eye(3)[labels]
        np.testing.assert_allclose(logits.grad, (soft - onehot) / 4.0, rtol=1e-12)

    def test_label_validation(self):
        logits = Tensor(np.zeros((2, 3)))
        with pytest.raises(ValueError, match="integers"):
            cross_entropy(logits, np.array([0.0, 1.0]))
        with pytest.raises(ValueError, match="out of range"):
            cross_entropy(logits, np.array([0, 3]))
        with pytest.raises(ValueError, match="label shape"):
            cross_entropy(logits, np.array([0]))
        with pytest.raises(ValueError, match="empty"):
            cross_entropy(Tensor(np.zeros((0, 3))), np.array([], dtype=int))


class TestRegressionLosses:
    def test_mse_hand_value(self):
        pred = Tensor([[1.0, 2.0], [3.0, 4.0]])
        target = Tensor(np.zeros((2, 2)))
        assert float(mse(pred, target).data) == (1 + 4 + 9 + 16) / 4

    def test_l1_hand_value(self):
        pred = Tensor([[1.0, -2.0], [3.0, -4.0]])
        target = Tensor(np.zeros((2, 2)))
        assert float(l1(pred, target).data) == (1 + 2 + 3 + 4) / 4

    def test_identical_inputs_give_zero(self):
        a = Tensor(np.random.default_rng(0).normal(size=(3, 2)))
        assert float(mse(a, a.detach()).data) == 0.0
        assert float(l1(a, a.detach()).data) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            mse(Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 3))))
        with pytest.raises(ValueError, match="mismatch"):
            l1(Tensor(np.zeros((2, 2))), Tensor(np.zeros(2)))


class TestPointwiseDispatch:
    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown loss"):
            pointwise_loss(Tensor(np.zeros((1, 2))), np.zeros((1, 2)), "huber")

    def test_dispatch_matches_direct_calls(self):
        rng = np.random.default_rng(2)
        pred = Tensor(rng.normal(size=(3, 2)))
        target = rng.normal(size=(3, 2))
        assert float(pointwise_loss(pred, target, "mse").data) == float(
            mse(pred, Tensor(target)).data
        )
        assert float(pointwise_loss(pred, target, "l1").data) == float(
            l1(pred, Tensor(target)).data
        )


class TestTaskAndReplay:
    def test_replay_loss_equals_task_loss_on_the_same_samples(self):
        enc, head = _model()
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 4))
        y = rng.integers(0, 3, size=4)
        items = [ReplayItem(x[k], int(y[k]), task_index=1) for k in range(4)]
        direct = float(task_loss(enc, head, x, y, "cross_entropy").data)
        replayed = float(replay_loss(enc, {1: head}, items, "cross_entropy").data)
        assert direct == replayed

    def test_replay_loss_regression_targets(self):
        enc, head = _model(output_dim=2)
        rng = np.random.default_rng(4)
        x = rng.normal(size=(3, 4))
        y = rng.normal(size=(3, 2))
        items = [ReplayItem(x[k], y[k], task_index=1) for k in range(3)]
        direct = float(task_loss(enc, head, x, y, "mse").data)
        assert float(replay_loss(enc, {1: head}, items, "mse").data) == direct

    def test_replay_loss_validation(self):
        enc, head = _model()
        with pytest.raises(EmptyBufferError):
            replay_loss(enc, {1: head}, [], "cross_entropy")
        items = [
            ReplayItem(np.zeros(4), 0, task_index=1),
            ReplayItem(np.zeros(4), 0, task_index=2),
        ]
        with pytest.raises(ValueError, match="mixes"):
            replay_loss(enc, {1: head, 2: head}, items, "cross_entropy")
        with pytest.raises(ValueError, match="no head"):
            replay_loss(enc, {2: head}, [ReplayItem(np.zeros(4), 0, task_index=1)], "cross_entropy")

    def test_gradients_flow_to_encoder_and_head(self):
        enc, head = _model()
        rng = np.random.default_rng(5)
        x = rng.normal(size=(3, 4))
        y = rng.integers(0, 3, size=3)
        task_loss(enc, head, x, y, "cross_entropy").backward()
        assert all(p.grad is not None for p in enc.parameters())
        assert all(p.grad is not None for p in head.parameters())


class TestPerSampleLosses:
    @pytest.mark.parametrize("kind", ["cross_entropy", "mse", "l1"])
    def test_mean_per_sample_equals_batch_loss(self, kind):
        out_dim = 3 if kind == "cross_entropy" else 2
        enc, head = _model(output_dim=out_dim, seed=6)
        rng = np.random.default_rng(7)
        x = rng.normal(size=(6, 4))
        if kind == "cross_entropy":
            y = rng.integers(0, 3, size=6)
        else:
            y = rng.normal(size=(6, 2))
        per = per_sample_losses(enc, head, x, y, kind)
        assert per.shape == (6,)
        batch = float(task_loss(enc, head, x, y, kind).data)
        np.testing.assert_allclose(per.mean(), batch, rtol=1e-12)

    def test_no_tape_is_recorded(self):
        enc, head = _model(seed=8)
        x = np.random.default_rng(9).normal(size=(2, 4))
        per_sample_losses(enc, head, x, np.array([0, 1]), "cross_entropy")
        assert all(p.grad is None for p in enc.parameters())

    def test_stable_for_huge_logits(self):
        enc, head = _model(seed=10)
        head.weight.data *= 0.0
        head.bias.data = np.array([1000.0, 0.0, -1000.0])
        x = np.random.default_rng(11).normal(size=(2, 4))
        per = per_sample_losses(enc, head, x, np.array([0, 0]), "cross_entropy")
        np.testing.assert_allclose(per, [0.0, 0.0], atol=1e-12)
