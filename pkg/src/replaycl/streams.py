"""Synthetic task streams: split Gaussian classification, random linear
regression, and a mixed alternation of the two.

Each classification task draws its own fresh class means (so class
identities never repeat across tasks) and samples class-conditional
Gaussians around them with balanced labels.  Regression tasks draw a random
linear map and add Gaussian observation noise.  Generation is fully
deterministic in the spec's seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

STREAM_KINDS = ("split_gaussian_classification", "random_linear_regression", "mixed")


@dataclass
class Task:
    """One task's data plus the loss its head trains with."""

    index: int
    name: str
    loss_kind: str
    output_dim: int
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    class_means: np.ndarray | None = None

    @property
    def n_train(self):
        return self.train_x.shape[0]


@dataclass
class TaskStream:
    tasks: list
    input_dim: int

    @property
    def t(self):
        return len(self.tasks)

    def is_classification(self):
        return all(task.loss_kind == "cross_entropy" for task in self.tasks)


@dataclass
class TaskStreamSpec:
    kind: str = "split_gaussian_classification"
    tasks: int = 5
    input_dim: int = 20
    classes_per_task: int = 5
    output_dim: int = 3
    train_per_task: int = 500
    test_per_task: int = 400
    seed: int = 0
    cluster_spread: float = 1.75
    mean_scale: float = 1.0
    noise_std: float = 0.1

    def validate(self):
        problems = []
        if self.kind not in STREAM_KINDS:
            problems.append(f"unknown stream kind '{self.kind}', expected one of {STREAM_KINDS}")
        if self.tasks < 1:
            problems.append(f"stream needs at least 1 task, got {self.tasks}")
        if self.input_dim < 1:
            problems.append(f"input_dim must be positive, got {self.input_dim}")
        if self.classes_per_task < 2:
            problems.append(f"classes_per_task must be >= 2, got {self.classes_per_task}")
        if self.output_dim < 1:
            problems.append(f"output_dim must be positive, got {self.output_dim}")
        if self.train_per_task < 1:
            problems.append(f"train_per_task must be positive, got {self.train_per_task}")
        if self.test_per_task < 1:
            problems.append(f"test_per_task must be positive, got {self.test_per_task}")
        if self.cluster_spread < 0.0:
            problems.append(f"cluster_spread must be >= 0, got {self.cluster_spread}")
        if self.noise_std < 0.0:
            problems.append(f"noise_std must be >= 0, got {self.noise_std}")
        if problems:
            raise ValueError("invalid stream spec: " + "; ".join(problems))
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown stream spec keys: {sorted(unknown)}")
        return cls(**doc).validate()


def _balanced_labels(n, classes, rng):
    labels = np.tile(np.arange(classes), n // classes + 1)[:n]
    return labels[rng.permutation(n)]


def _gaussian_classification_task(spec, index, rng):
    d, c = spec.input_dim, spec.classes_per_task
    means = rng.normal(0.0, spec.mean_scale, size=(c, d))
    parts = {}
    for split, n in (("train", spec.train_per_task), ("test", spec.test_per_task)):
        labels = _balanced_labels(n, c, rng)
        x = means[labels] + spec.cluster_spread * rng.normal(size=(n, d))
        parts[split] = (x, labels.astype(np.int64))
    return Task(
        index=index,
        name=f"gaussian-{index}",
        loss_kind="cross_entropy",
        output_dim=c,
        train_x=parts["train"][0],
        train_y=parts["train"][1],
        test_x=parts["test"][0],
        test_y=parts["test"][1],
        class_means=means,
    )


def _linear_regression_task(spec, index, rng, loss_kind="mse"):
    d, out = spec.input_dim, spec.output_dim
    a = rng.normal(size=(out, d)) / np.sqrt(d)
    parts = {}
    for split, n in (("train", spec.train_per_task), ("test", spec.test_per_task)):
        x = rng.normal(size=(n, d))
        y = x @ a.T + spec.noise_std * rng.normal(size=(n, out))
        parts[split] = (x, y)
    return Task(
        index=index,
        name=f"linear-{index}",
        loss_kind=loss_kind,
        output_dim=out,
        train_x=parts["train"][0],
        train_y=parts["train"][1],
        test_x=parts["test"][0],
        test_y=parts["test"][1],
    )


def gen_stream(spec):
    """Materialize the task stream described by ``spec``, deterministically."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    tasks = []
    regression_count = 0
    for index in range(1, spec.tasks + 1):
        if spec.kind == "split_gaussian_classification":
            tasks.append(_gaussian_classification_task(spec, index, rng))
        elif spec.kind == "random_linear_regression":
            tasks.append(_linear_regression_task(spec, index, rng))
        else:  # mixed: odd tasks classify, even tasks regress (alternating mse/l1)
            if index % 2 == 1:
                tasks.append(_gaussian_classification_task(spec, index, rng))
            else:
                regression_count += 1
                kind = "mse" if regression_count % 2 == 1 else "l1"
                tasks.append(_linear_regression_task(spec, index, rng, loss_kind=kind))
    return TaskStream(tasks=tasks, input_dim=spec.input_dim)


def stream_to_json_dict(spec, stream):
    """JSON-ready dump of a generated stream (arrays as nested lists)."""
    tasks = []
    for task in stream.tasks:
        tasks.append(
            {
                "index": task.index,
                "name": task.name,
                "loss_kind": task.loss_kind,
                "output_dim": task.output_dim,
                "train_x": task.train_x.tolist(),
                "train_y": task.train_y.tolist(),
                "test_x": task.test_x.tolist(),
                "test_y": task.test_y.tolist(),
            }
        )
    return {"spec": spec.to_dict(), "input_dim": stream.input_dim, "tasks": tasks}
