"""Task and replay objectives over the shared encoder and per-task heads.

``replay_loss`` is the same computation as ``task_loss`` fed from buffer
items instead of the live task data stream, so replayed samples contribute
through exactly the code path their task originally trained on.
"""

from __future__ import annotations

import numpy as np

from .replay import EmptyBufferError
from .tensor import Tensor, as_tensor, no_grad

LOSS_KINDS = ("cross_entropy", "mse", "l1")


def _check_kind(kind):
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss '{kind}', expected one of {LOSS_KINDS}")


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy; stable via max-shifted log-sum-exp."""
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise ValueError(f"logits must be (batch, classes), got shape {logits.shape}")
    if logits.shape[0] == 0:
        raise ValueError("cross_entropy on an empty batch")
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != logits.shape[0]:
        raise ValueError(
            f"label shape {labels.shape} does not match batch {logits.shape[0]}"
        )
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"labels must be integers, got dtype {labels.dtype}")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError(
            f"label out of range [0, {logits.shape[1]}): {labels.min()}..{labels.max()}"
        )
    return (logits.logsumexp(axis=1) - logits.take_rows(labels)).mean()


def mse(pred, target):
    """Mean squared error over every output component."""
    pred = as_tensor(pred)
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("mse on an empty batch")
    diff = pred - target
    return (diff * diff).mean()


def l1(pred, target):
    """Mean absolute error over every output component."""
    pred = as_tensor(pred)
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"l1 shape mismatch: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("l1 on an empty batch")
    return (pred - target).abs().mean()


def pointwise_loss(preds, y, kind):
    _check_kind(kind)
    if kind == "cross_entropy":
        return cross_entropy(preds, y)
    target = y if isinstance(y, Tensor) else Tensor(np.asarray(y, dtype=np.float64))
    if kind == "mse":
        return mse(preds, target)
    return l1(preds, target)


def task_loss(encoder, head, x, y, kind):
    """Loss of one task's head on a batch drawn from that task."""
    preds = head.forward(encoder.forward(as_tensor(x)))
    return pointwise_loss(preds, y, kind)


def replay_loss(encoder, heads, items, kind):
    """Task loss evaluated on buffer items from a single past task."""
    if not items:
        raise EmptyBufferError("replay loss over an empty buffer batch")
    j = items[0].task_index
    if any(it.task_index != j for it in items):
        raise ValueError("replay batch mixes items from different tasks")
    if j not in heads:
        raise ValueError(f"no head registered for task {j}")
    x = np.stack([it.x for it in items])
    if kind == "cross_entropy":
        y = np.array([int(it.y) for it in items])
    else:
        y = np.stack([np.asarray(it.y, dtype=np.float64) for it in items])
    return task_loss(encoder, heads[j], x, y, kind)


def per_sample_losses(encoder, head, x, y, kind):
    """Loss of each sample separately, without tape recording."""
    _check_kind(kind)
    with no_grad():
        preds = head.forward(encoder.forward(as_tensor(x))).data
    if kind == "cross_entropy":
        labels = np.asarray(y)
        m = preds.max(axis=1, keepdims=True)
        lse = (m + np.log(np.exp(preds - m).sum(axis=1, keepdims=True))).squeeze(1)
        return lse - preds[np.arange(preds.shape[0]), labels]
    target = np.asarray(y, dtype=np.float64).reshape(preds.shape)
    diff = preds - target
    if kind == "mse":
        return (diff * diff).mean(axis=1)
    return np.abs(diff).mean(axis=1)
