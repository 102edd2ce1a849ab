"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation records a node on an implicit tape (unless recording is
disabled via :func:`no_grad`).  Calling :meth:`Tensor.backward` on a scalar
loss walks the tape once in reverse topological order, accumulates gradients
into every tracked tensor's ``grad`` field, and then consumes the tape so a
graph can never be replayed.  All data is float64 and row-major; any
operation whose result would contain a non-finite value raises instead of
propagating inf/nan.
"""

from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Context manager that disables tape recording for its duration."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def grad_enabled():
    return _GRAD_ENABLED


def _check_finite(arr, op):
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values produced by '{op}'")


def _unbroadcast(grad, shape):
    """Sum ``grad`` over axes that were broadcast to reach its shape."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _accumulate(tensor, grad):
    if tensor.grad is None:
        tensor.grad = np.zeros_like(tensor.data)
    tensor.grad += grad


def as_tensor(value):
    """Wrap ``value`` in a constant Tensor unless it already is one."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class Tensor:
    """A float64 array plus an optional gradient and tape linkage.

    ``requires_grad`` marks leaves (parameters) whose gradients should be
    collected; results of operations track gradients whenever any input
    does.  Intermediate nodes also receive a ``grad`` during backward, which
    lets callers inspect quantities such as the gradient of a loss with
    respect to an embedding.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        arr = np.array(data, dtype=np.float64)
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.requires_grad = bool(requires_grad) and _GRAD_ENABLED
        self.grad = None
        self._parents = ()
        self._backward = None

    @classmethod
    def _make(cls, data, parents, backward, op):
        data = np.asarray(data, dtype=np.float64)
        _check_finite(data, op)
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        tracked = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = tracked
        out._parents = tuple(parents) if tracked else ()
        out._backward = backward if tracked else None
        return out

    # ------------------------------------------------------------------
    # basic introspection
    # ------------------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        """A constant copy sharing no tape state with this tensor."""
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    # ------------------------------------------------------------------
    # arithmetic
    # ------------------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                _accumulate(a, _unbroadcast(g, a.data.shape))
            if b.requires_grad:
                _accumulate(b, _unbroadcast(g, b.data.shape))

        return Tensor._make(a.data + b.data, (a, b), backward, "add")

    __radd__ = __add__

    def __neg__(self):
        a = self

        def backward(g):
            if a.requires_grad:
                _accumulate(a, -g)

        return Tensor._make(-a.data, (a,), backward, "neg")

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

        return Tensor._make(a.data * b.data, (a, b), backward, "mul")

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if isinstance(scalar, Tensor) or np.ndim(scalar) != 0:
            raise TypeError("division is only supported by python scalars")
        return self * (1.0 / float(scalar))

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self, other
        if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
            raise ValueError(
                f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}"
            )

        def backward(g):
            if a.requires_grad:
                _accumulate(a, g @ b.data.T)
            if b.requires_grad:
                _accumulate(b, a.data.T @ g)

        return Tensor._make(a.data @ b.data, (a, b), backward, "matmul")

    # ------------------------------------------------------------------
    # elementwise nonlinearities
    # ------------------------------------------------------------------

    def relu(self):
        a = self
        mask = a.data > 0.0

        def backward(g):
            if a.requires_grad:
                _accumulate(a, g * mask)

        return Tensor._make(np.where(mask, a.data, 0.0), (a,), backward, "relu")

    def tanh(self):
        a = self
        out_data = np.tanh(a.data)

        def backward(g):
            if a.requires_grad:
                _accumulate(a, g * (1.0 - out_data * out_data))

        return Tensor._make(out_data, (a,), backward, "tanh")

    def exp(self):
        a = self
        out_data = np.exp(a.data)

        def backward(g):
            if a.requires_grad:
                _accumulate(a, g * out_data)

        return Tensor._make(out_data, (a,), backward, "exp")

    def log(self):
        a = self

        def backward(g):
            if a.requires_grad:
                _accumulate(a, g / a.data)

        return Tensor._make(np.log(a.data), (a,), backward, "log")

    def abs(self):
        # subgradient 0 at exactly 0, matching sign()
        a = self
        sign = np.sign(a.data)

        def backward(g):
            if a.requires_grad:
                _accumulate(a, g * sign)

        return Tensor._make(np.abs(a.data), (a,), backward, "abs")

    def square(self):
        return self * self

    # ------------------------------------------------------------------
    # reductions and shape ops
    # ------------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        a = self
        out_data = a.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if not a.requires_grad:
                return
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(g, a.data.shape))

        return Tensor._make(out_data, (a,), backward, "sum")

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.data.size
        else:
            axes = (axis,) if np.isscalar(axis) else tuple(axis)
            count = int(np.prod([self.data.shape[ax] for ax in axes]))
        if count == 0:
            raise ValueError("mean over zero elements")
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        out_data = a.data.reshape(shape)

        def backward(g):
            if a.requires_grad:
                _accumulate(a, np.asarray(g).reshape(a.data.shape))

        return Tensor._make(out_data, (a,), backward, "reshape")

    def flatten_batch(self):
        """Reshape to (batch, -1), treating axis 0 as the batch axis."""
        if self.data.ndim < 2:
            raise ValueError(f"flatten_batch needs a batched tensor, got shape {self.data.shape}")
        return self.reshape(self.data.shape[0], -1)

    def transpose(self):
        if self.data.ndim != 2:
            raise ValueError(f"transpose supports 2-d tensors, got shape {self.data.shape}")
        a = self

        def backward(g):
            if a.requires_grad:
                _accumulate(a, g.T)

        return Tensor._make(a.data.T.copy(), (a,), backward, "transpose")

    @property
    def T(self):
        return self.transpose()

    def logsumexp(self, axis):
        """Numerically stable log(sum(exp(x))) along ``axis`` (dropped)."""
        a = self
        m = np.max(a.data, axis=axis, keepdims=True)
        shifted = np.exp(a.data - m)
        total = shifted.sum(axis=axis, keepdims=True)
        out_data = np.squeeze(m + np.log(total), axis=axis)

        def backward(g):
            if a.requires_grad:
                soft = shifted / total
                _accumulate(a, np.expand_dims(np.asarray(g), axis) * soft)

        return Tensor._make(out_data, (a,), backward, "logsumexp")

    def take_rows(self, indices):
        """Pick one column per row: out[b] = self[b, indices[b]]."""
        a = self
        if a.data.ndim != 2:
            raise ValueError(f"take_rows needs a 2-d tensor, got shape {a.data.shape}")
        idx = np.asarray(indices)
        if idx.ndim != 1 or idx.shape[0] != a.data.shape[0]:
            raise ValueError(
                f"take_rows index shape {idx.shape} does not match batch {a.data.shape[0]}"
            )
        if not np.issubdtype(idx.dtype, np.integer):
            raise ValueError("take_rows indices must be integers")
        if idx.min(initial=0) < 0 or idx.max(initial=-1) >= a.data.shape[1]:
            raise ValueError(f"take_rows index out of range for {a.data.shape[1]} columns")
        rows = np.arange(a.data.shape[0])

        def backward(g):
            if a.requires_grad:
                full = np.zeros_like(a.data)
                full[rows, idx] = g
                _accumulate(a, full)

        return Tensor._make(a.data[rows, idx], (a,), backward, "take_rows")

    # ------------------------------------------------------------------
    # backward pass
    # ------------------------------------------------------------------

    def backward(self):
        """Reverse-mode sweep from a scalar loss; consumes the tape."""
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.data.shape}")
        if not self.requires_grad:
            raise ValueError("backward on a detached loss: the tape is empty")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
        # consume: a swept graph cannot be replayed and holds no closures
        for node in topo:
            if node._parents:
                node._parents = ()
                node._backward = None
                node.requires_grad = False


def cat(tensors, axis=0):
    """Concatenate tensors along ``axis``; gradients split back per input."""
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("cat of an empty tensor list")
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def backward(g):
        for t, start, stop in zip(ts, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(int(start), int(stop))
                _accumulate(t, g[tuple(sl)])

    return Tensor._make(data, ts, backward, "cat")


def zero_grads(params):
    for p in params:
        p.grad = None
