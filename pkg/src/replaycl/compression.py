"""Pooling compressors for stored features and feature-matching losses.

``compress`` is a linear map.  For a 3-axis feature block (n_f, w, h):
spatial pooling averages over the w*h positions of each channel (length
n_f), channel pooling averages over the n_f channels at each position
(length w*h, row-major), and spatial_channel concatenates both (length
n_f + w*h).  Flat features only support the identity ('none') compressor.
A single feature is passed as a 1-d or 3-d tensor; a batch adds a leading
batch axis (2-d or 4-d).
"""

from __future__ import annotations

import warnings

import numpy as np

from .tensor import Tensor, as_tensor, cat

COMPRESSION_KINDS = ("none", "spatial", "channel", "spatial_channel")
FM_KINDS = ("l2", "l1", "l1_plus_l2", "weighted_l1", "weighted_l2", "mmd")
FM_REDUCTIONS = ("mean", "sum")


def _check_kind(kind):
    if kind not in COMPRESSION_KINDS:
        raise ValueError(f"unknown compression '{kind}', expected one of {COMPRESSION_KINDS}")


def compressed_dim(feature_shape, kind):
    """Length of the compressed vector for one feature of ``feature_shape``."""
    _check_kind(kind)
    feature_shape = tuple(int(d) for d in feature_shape)
    if kind == "none":
        return int(np.prod(feature_shape))
    if len(feature_shape) != 3:
        raise ValueError(
            f"compression '{kind}' needs a 3-axis (n_f, w, h) feature, got shape {feature_shape}"
        )
    n_f, w, h = feature_shape
    if kind == "spatial":
        return n_f
    if kind == "channel":
        return w * h
    return n_f + w * h


def compress(features, kind):
    """Compress a feature tensor; differentiable and linear in its input.

    1-d/3-d inputs are single features and yield a 1-d output; 2-d/4-d
    inputs are batches and yield (batch, dim).
    """
    _check_kind(kind)
    f = as_tensor(features)
    if f.ndim not in (1, 2, 3, 4):
        raise ValueError(f"feature tensor must have 1-4 axes, got shape {f.shape}")
    batched = f.ndim in (2, 4)
    if kind == "none":
        return f.flatten_batch() if batched else f.reshape(-1)
    if f.ndim in (1, 2):
        raise ValueError(
            f"compression '{kind}' needs a 3-axis (n_f, w, h) feature, got shape {f.shape}"
        )
    if not batched:
        f = f.reshape((1,) + f.shape)
    if kind == "spatial":
        out = f.mean(axis=(2, 3))
    elif kind == "channel":
        out = f.mean(axis=1).flatten_batch()
    else:
        out = cat([f.mean(axis=(2, 3)), f.mean(axis=1).flatten_batch()], axis=1)
    return out if batched else out.reshape(-1)


def compress_multilayer(feature_list, kind):
    """Compress each layer's features and concatenate in layer order."""
    if not feature_list:
        raise ValueError("compress_multilayer needs at least one feature tensor")
    parts = [compress(f, kind) for f in feature_list]
    ndims = {p.ndim for p in parts}
    if len(ndims) != 1:
        raise ValueError("compress_multilayer inputs mix single features and batches")
    axis = 1 if parts[0].ndim == 2 else 0
    return cat(parts, axis=axis) if len(parts) > 1 else parts[0]


def median_heuristic_bandwidth(a, b):
    """Median of pooled pairwise Euclidean distances; 1.0 with a warning
    when the pooled set is degenerate (median distance zero)."""
    pooled = np.vstack([np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)])
    sq = np.sum(pooled * pooled, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pooled @ pooled.T)
    iu = np.triu_indices(pooled.shape[0], k=1)
    med = float(np.median(np.sqrt(np.maximum(d2[iu], 0.0))))
    if med <= 0.0:
        warnings.warn(
            "median pairwise distance is zero; falling back to bandwidth 1.0",
            RuntimeWarning,
        )
        return 1.0
    return med


def _sq_dists(a, b):
    sa = (a * a).sum(axis=1, keepdims=True)
    sb = (b * b).sum(axis=1, keepdims=True)
    return sa + sb.transpose() - (a @ b.transpose()) * 2.0


def mmd(a, b, bandwidth=None):
    """Squared maximum mean discrepancy between two row sets.

    Biased V-statistic with an RBF kernel (diagonal terms included), so two
    identical sets give exactly zero.  The bandwidth comes from the median
    heuristic over the pooled pairwise distances unless given explicitly,
    and is treated as a constant by the tape.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"mmd expects (n, d) row sets, got shapes {a.shape} and {b.shape}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError(
            f"mmd needs at least 2 rows per set, got {a.shape[0]} and {b.shape[0]}"
        )
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"mmd row length mismatch: {a.shape} vs {b.shape}")
    sigma = median_heuristic_bandwidth(a.data, b.data) if bandwidth is None else float(bandwidth)
    if sigma <= 0.0:
        raise ValueError(f"mmd bandwidth must be positive, got {sigma}")
    scale = -1.0 / (2.0 * sigma * sigma)
    k_aa = (_sq_dists(a, a) * scale).exp()
    k_bb = (_sq_dists(b, b) * scale).exp()
    k_ab = (_sq_dists(a, b) * scale).exp()
    return k_aa.mean() + k_bb.mean() - k_ab.mean() * 2.0


def fm_loss(current, stored, kind, weights=None, reduction="mean"):
    """Feature-matching loss between current and stored compressed features.

    ``current`` and ``stored`` are flat vectors or (batch, dim) stacks.
    Weighted kinds scale each component by a fixed nonnegative weight
    vector; 'mmd' compares the two row sets as distributions.
    """
    if kind not in FM_KINDS:
        raise ValueError(f"unknown fm loss '{kind}', expected one of {FM_KINDS}")
    if reduction not in FM_REDUCTIONS:
        raise ValueError(f"unknown reduction '{reduction}', expected one of {FM_REDUCTIONS}")
    a = as_tensor(current)
    b = as_tensor(stored)
    if kind == "mmd":
        if weights is not None:
            raise ValueError("weights only apply to weighted_l1/weighted_l2")
        if a.ndim != 2 or b.ndim != 2:
            raise ValueError(
                f"fm loss 'mmd' works on (batch, dim) row sets, got shapes {a.shape} and {b.shape}"
            )
        return mmd(a, b)
    if a.shape != b.shape:
        raise ValueError(f"fm loss shape mismatch: {a.shape} vs {b.shape}")
    weighted = kind in ("weighted_l1", "weighted_l2")
    if weighted:
        if weights is None:
            raise ValueError(f"fm loss '{kind}' requires a weight vector")
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.shape[0] != a.shape[-1]:
            raise ValueError(
                f"weight length {w.shape} does not match feature dim {a.shape[-1]}"
            )
        if np.any(w < 0.0):
            raise ValueError("fm weights must be nonnegative")
    elif weights is not None:
        raise ValueError("weights only apply to weighted_l1/weighted_l2")

    diff = a - b
    reduce = (lambda t: t.mean()) if reduction == "mean" else (lambda t: t.sum())
    if kind == "l2":
        return reduce(diff * diff)
    if kind == "l1":
        return reduce(diff.abs())
    if kind == "l1_plus_l2":
        return reduce(diff.abs()) + reduce(diff * diff)
    if kind == "weighted_l2":
        return reduce(diff * diff * Tensor(w))
    return reduce(diff.abs() * Tensor(w))


class FeatureWeightAccumulator:
    """Running mean of |gradient| over compressed-feature components.

    Feeds the weighted fm losses: after a task trains, ``finalize`` returns
    the accumulated means rescaled to mean 1 (all-zero means fall back to
    uniform weights).
    """

    def __init__(self, dim):
        if dim <= 0:
            raise ValueError(f"accumulator dim must be positive, got {dim}")
        self.dim = int(dim)
        self.mean = np.zeros(self.dim)
        self.count = 0

    def update(self, grad):
        g = np.abs(np.asarray(grad, dtype=np.float64))
        if g.shape != (self.dim,):
            raise ValueError(f"gradient shape {g.shape} does not match dim {self.dim}")
        self.count += 1
        self.mean += (g - self.mean) / self.count

    def finalize(self):
        if self.count == 0:
            raise ValueError("finalize on an accumulator that saw no gradients")
        total = self.mean.mean()
        if total == 0.0:
            return np.ones(self.dim)
        return self.mean / total
