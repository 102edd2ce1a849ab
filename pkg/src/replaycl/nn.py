"""Shared-encoder / per-task-head models and first-order optimizers.

The encoder is a dense MLP producing a feature vector that may optionally be
reshaped to a 3-axis (channels, width, height) block so that spatial and
channel pooling operate on their true tensor form.  Each task owns a small
affine head reading the flattened features.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor, as_tensor

ACTIVATIONS = ("relu", "tanh")


def glorot_uniform(rng, fan_in, fan_out, shape):
    """Uniform init on +/- sqrt(6 / (fan_in + fan_out))."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _apply_activation(x, name):
    if name == "relu":
        return x.relu()
    if name == "tanh":
        return x.tanh()
    raise ValueError(f"unknown activation '{name}', expected one of {ACTIVATIONS}")


def _normalize_feature_shape(feature_shape):
    if np.isscalar(feature_shape):
        feature_shape = (int(feature_shape),)
    feature_shape = tuple(int(d) for d in feature_shape)
    if len(feature_shape) not in (1, 3):
        raise ValueError(
            f"feature_shape must be flat (n,) or 3-axis (n_f, w, h), got {feature_shape}"
        )
    if any(d <= 0 for d in feature_shape):
        raise ValueError(f"feature_shape dims must be positive, got {feature_shape}")
    return feature_shape


class Encoder:
    """Dense MLP encoder g(x): hidden layers use the configured activation,
    the final feature layer is affine."""

    def __init__(self, input_dim, hidden_dims, feature_shape, activation="relu", rng=None):
        if input_dim <= 0:
            raise ValueError(f"input_dim must be positive, got {input_dim}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation '{activation}', expected one of {ACTIVATIONS}")
        if rng is None:
            raise ValueError("Encoder requires a seeded numpy Generator")
        self.input_dim = int(input_dim)
        self.feature_shape = _normalize_feature_shape(feature_shape)
        self.feature_dim = int(np.prod(self.feature_shape))
        self.activation = activation
        dims = [self.input_dim] + [int(d) for d in hidden_dims] + [self.feature_dim]
        if any(d <= 0 for d in dims):
            raise ValueError(f"layer widths must be positive, got {dims}")
        self.layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = Tensor(glorot_uniform(rng, fan_in, fan_out, (fan_in, fan_out)), requires_grad=True)
            b = Tensor(np.zeros(fan_out), requires_grad=True)
            self.layers.append((w, b))

    def forward(self, x):
        x = as_tensor(x)
        if x.ndim != 2:
            raise ValueError(f"encoder input must be (batch, {self.input_dim}), got shape {x.shape}")
        if x.shape[1] != self.input_dim:
            raise ValueError(
                f"encoder input width mismatch: got {x.shape}, expected (*, {self.input_dim})"
            )
        h = x
        last = len(self.layers) - 1
        for k, (w, b) in enumerate(self.layers):
            h = h @ w + b
            if k != last:
                h = _apply_activation(h, self.activation)
        if len(self.feature_shape) == 3:
            h = h.reshape((h.shape[0],) + self.feature_shape)
        return h

    def parameters(self):
        params = []
        for w, b in self.layers:
            params.extend([w, b])
        return params


class TaskHead:
    """Affine readout for one task, applied to flattened encoder features."""

    def __init__(self, feature_dim, output_dim, task_index, rng=None):
        if task_index < 1:
            raise ValueError(f"task_index must be >= 1, got {task_index}")
        if output_dim <= 0:
            raise ValueError(f"output_dim must be positive, got {output_dim}")
        if rng is None:
            raise ValueError("TaskHead requires a seeded numpy Generator")
        self.task_index = int(task_index)
        self.feature_dim = int(feature_dim)
        self.output_dim = int(output_dim)
        self.weight = Tensor(
            glorot_uniform(rng, feature_dim, output_dim, (feature_dim, output_dim)),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(output_dim), requires_grad=True)

    def forward(self, features):
        features = as_tensor(features)
        if features.ndim < 2:
            raise ValueError(f"head input must be batched, got shape {features.shape}")
        flat = features.flatten_batch() if features.ndim > 2 else features
        if flat.shape[1] != self.feature_dim:
            raise ValueError(
                f"head input width mismatch: got {flat.shape}, expected (*, {self.feature_dim})"
            )
        return flat @ self.weight + self.bias

    def parameters(self):
        return [self.weight, self.bias]


class SGD:
    """Plain gradient descent: p <- p - lr * grad, exactly."""

    def __init__(self, params, lr):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = float(lr)

    def step(self):
        for p in self.params:
            if p.grad is None:
                raise ValueError("optimizer step with a missing parameter gradient")
            p.data -= self.lr * p.grad

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class Adam:
    """Adam with bias-corrected first and second moments."""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        b1, b2 = betas
        if not (0.0 < b1 < 1.0 and 0.0 < b2 < 1.0):
            raise ValueError(f"betas must lie in (0, 1), got {betas}")
        self.params = list(params)
        self.lr = float(lr)
        self.betas = (float(b1), float(b2))
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        b1, b2 = self.betas
        self.t += 1
        for k, p in enumerate(self.params):
            if p.grad is None:
                raise ValueError("optimizer step with a missing parameter gradient")
            g = p.grad
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            m_hat = self.m[k] / (1.0 - b1 ** self.t)
            v_hat = self.v[k] / (1.0 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


OPTIMIZERS = ("sgd", "adam")


def make_optimizer(kind, params, lr, betas=(0.9, 0.999)):
    if kind == "sgd":
        return SGD(params, lr)
    if kind == "adam":
        return Adam(params, lr, betas=betas)
    raise ValueError(f"unknown optimizer '{kind}', expected one of {OPTIMIZERS}")
