"""Forgetting metrics over checkpoint-by-task evaluation matrices.

An :class:`EvalMatrix` holds one value per (checkpoint i, task j) pair with
j <= i: the score of task j's test set right after task i finished
training.  Loss-based forgetting is the mean relative loss increase between
each task's own checkpoint and the final one (it can be negative when later
tasks transfer backward); accuracy-based forgetting is the mean over tasks
of the best accuracy a task ever had from its own checkpoint on, minus its
final accuracy (never negative).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .compression import compress
from .replay import EmptyBufferError
from .tensor import Tensor, no_grad

MATRIX_KINDS = ("loss", "accuracy")


@dataclass
class EvalMatrix:
    """Lower-triangular store of per-checkpoint task scores, 1-based."""

    kind: str
    t: int
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MATRIX_KINDS:
            raise ValueError(f"unknown matrix kind '{self.kind}', expected one of {MATRIX_KINDS}")
        if self.t < 1:
            raise ValueError(f"task count must be >= 1, got {self.t}")

    def set(self, i, j, value):
        if not (1 <= j <= i <= self.t):
            raise ValueError(f"entry ({i}, {j}) outside 1 <= j <= i <= {self.t}")
        if (i, j) in self.entries:
            raise ValueError(f"entry ({i}, {j}) already written")
        value = float(value)
        if not np.isfinite(value):
            raise ValueError(f"entry ({i}, {j}) is not finite: {value}")
        if self.kind == "accuracy" and not (0.0 <= value <= 1.0):
            raise ValueError(f"accuracy entry ({i}, {j}) outside [0, 1]: {value}")
        if self.kind == "loss" and value < 0.0:
            raise ValueError(f"loss entry ({i}, {j}) is negative: {value}")
        self.entries[(i, j)] = value

    def get(self, i, j):
        if (i, j) not in self.entries:
            raise KeyError(f"entry ({i}, {j}) missing")
        return self.entries[(i, j)]

    def is_complete(self):
        return len(self.entries) == self.t * (self.t + 1) // 2

    def _require_complete(self):
        if not self.is_complete():
            raise ValueError("evaluation matrix is incomplete")

    def final_row(self):
        self._require_complete()
        return np.array([self.entries[(self.t, j)] for j in range(1, self.t + 1)])

    def diagonal(self):
        self._require_complete()
        return np.array([self.entries[(i, i)] for i in range(1, self.t + 1)])

    def column(self, j):
        """Scores of task j at every checkpoint from j onward."""
        self._require_complete()
        return np.array([self.entries[(i, j)] for i in range(j, self.t + 1)])

    def to_json_dict(self):
        rows = [[i, j, self.entries[(i, j)]] for (i, j) in sorted(self.entries)]
        return {"kind": self.kind, "t": self.t, "entries": rows}

    @classmethod
    def from_json_dict(cls, doc):
        out = cls(kind=doc["kind"], t=int(doc["t"]))
        for i, j, value in doc["entries"]:
            out.set(int(i), int(j), value)
        return out


@dataclass
class MultitaskReference:
    """Final per-task test losses of a jointly trained reference model."""

    mt_losses: np.ndarray

    def __post_init__(self):
        self.mt_losses = np.asarray(self.mt_losses, dtype=np.float64)
        if self.mt_losses.ndim != 1 or self.mt_losses.shape[0] == 0:
            raise ValueError("reference losses must be a non-empty vector")
        if not np.all(np.isfinite(self.mt_losses)) or np.any(self.mt_losses <= 0.0):
            raise ValueError("reference losses must be positive and finite")


def forgetting_loss(matrix):
    """Mean relative loss increase (percent) from each task's own checkpoint
    to the end of the sequence; negative values mean backward transfer."""
    if matrix.kind != "loss":
        raise ValueError(f"loss forgetting needs a loss matrix, got '{matrix.kind}'")
    diag = matrix.diagonal()
    if np.any(diag == 0.0):
        raise ValueError("loss forgetting undefined: zero diagonal loss")
    final = matrix.final_row()
    return float(np.mean((final - diag) / diag) * 100.0)


def performance_drop(matrix, reference):
    """Mean relative final-loss excess (percent) over a multitask reference."""
    if matrix.kind != "loss":
        raise ValueError(f"performance drop needs a loss matrix, got '{matrix.kind}'")
    ref = reference.mt_losses
    if ref.shape[0] != matrix.t:
        raise ValueError(f"reference length {ref.shape[0]} does not match t={matrix.t}")
    final = matrix.final_row()
    return float(np.mean((final - ref) / ref) * 100.0)


def forgetting_accuracy(matrix):
    """Mean over tasks of (peak accuracy from the task's own checkpoint on)
    minus the final accuracy; always nonnegative."""
    if matrix.kind != "accuracy":
        raise ValueError(f"accuracy forgetting needs an accuracy matrix, got '{matrix.kind}'")
    final = matrix.final_row()
    gaps = [matrix.column(j).max() - final[j - 1] for j in range(1, matrix.t + 1)]
    return float(np.mean(gaps))


def avg_accuracy(matrix):
    """Mean final-checkpoint accuracy across tasks."""
    if matrix.kind != "accuracy":
        raise ValueError(f"avg accuracy needs an accuracy matrix, got '{matrix.kind}'")
    return float(np.mean(matrix.final_row()))


def feature_drift(buffer, encoder, compression_kind):
    """Mean distance between stored compressed features and their current
    recomputation, per task with attached features."""
    tasks = buffer.tasks()
    if not tasks:
        raise EmptyBufferError("feature drift over an empty buffer")
    drift = {}
    for task_index in tasks:
        items = buffer.items(task_index)
        if not items:
            raise EmptyBufferError(f"feature drift: no items for task {task_index}")
        if any(it.stored_feature is None for it in items):
            raise ValueError(f"feature drift: task {task_index} has no stored features")
        x = np.stack([it.x for it in items])
        stored = np.stack([it.stored_feature for it in items])
        with no_grad():
            current = compress(encoder.forward(Tensor(x)), compression_kind).data
        drift[task_index] = float(np.mean(np.linalg.norm(current - stored, axis=1)))
    return drift
