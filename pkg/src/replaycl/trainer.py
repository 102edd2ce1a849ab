"""Sequential continual training, replay methods, and the multitask reference.

Three method tags: 'sgd_only' trains each task in turn with no memory,
'er' adds a replay loss over stored raw samples of past tasks, and 'car'
additionally pulls current compressed features of replayed samples toward
the features stored when their task finished training.

The 'joint' schedule adds, at every step of task i, one replay batch per
past task scaled by 1/(i-1); the 'probabilistic' schedule instead flips a
coin per step and either trains the current batch or replays one uniformly
chosen past task.  Per-task heads are isolated: replay gradients reach the
shared encoder only, never another task's head.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .compression import (
    COMPRESSION_KINDS,
    FM_KINDS,
    FM_REDUCTIONS,
    FeatureWeightAccumulator,
    compress,
    compressed_dim,
    fm_loss,
)
from .losses import per_sample_losses, pointwise_loss, replay_loss, task_loss
from .metrics import (
    EvalMatrix,
    MultitaskReference,
    avg_accuracy,
    feature_drift,
    forgetting_accuracy,
    forgetting_loss,
    performance_drop,
)
from .nn import ACTIVATIONS, Encoder, OPTIMIZERS, TaskHead, make_optimizer
from .replay import STRATEGIES, ReplayBuffer, RunningVarianceState, fill_task_buffer
from .tensor import Tensor, no_grad, zero_grads

METHOD_TAGS = ("sgd_only", "er", "car")
SCHEDULES = ("joint", "probabilistic")

_LOSS_BASED_STRATEGIES = ("hard", "easy", "loss_eq", "loss_eq_weighted")
_WEIGHTED_FM_KINDS = ("weighted_l1", "weighted_l2")


@dataclass
class Method:
    """A continual-learning method and its replay coefficients.

    'sgd_only' forces both coefficients to zero; 'er' forces the feature-
    matching coefficient to zero.  With both coefficients at zero the replay
    machinery is skipped entirely, so such runs follow the plain SGD path
    bit for bit.
    """

    tag: str
    lam: float = 1.0
    lambda_fm: float = 0.0
    schedule: str = "joint"
    p_replay: float = 0.5

    def __post_init__(self):
        problems = []
        if self.tag not in METHOD_TAGS:
            problems.append(f"unknown method '{self.tag}', expected one of {METHOD_TAGS}")
        if self.schedule not in SCHEDULES:
            problems.append(f"unknown schedule '{self.schedule}', expected one of {SCHEDULES}")
        for name in ("lam", "lambda_fm"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0.0:
                problems.append(f"{name} must be finite and >= 0, got {value}")
            setattr(self, name, value)
        self.p_replay = float(self.p_replay)
        if not (0.0 <= self.p_replay <= 1.0):
            problems.append(f"p_replay must lie in [0, 1], got {self.p_replay}")
        if problems:
            raise ValueError("invalid method: " + "; ".join(problems))
        if self.tag == "sgd_only":
            self.lam = 0.0
            self.lambda_fm = 0.0
        elif self.tag == "er":
            self.lambda_fm = 0.0


@dataclass
class TrainingConfig:
    """Everything about the model and optimization that is not the method
    itself or the data stream."""

    memory_per_task: int = 20
    strategy: str = "uniform"
    compression: str = "none"
    fm_kind: str = "l2"
    fm_reduction: str = "mean"
    optimizer: str = "sgd"
    learning_rate: float = 0.02
    adam_betas: tuple = (0.9, 0.999)
    epochs: int = 1
    batch_size: int = 10
    replay_batch_size: int = 5
    joint_single_past: bool = False
    encoder_hidden: tuple = (64,)
    feature_shape: tuple = (64,)
    activation: str = "relu"
    mt_iterations: int | None = None

    def __post_init__(self):
        self.adam_betas = tuple(float(b) for b in self.adam_betas)
        self.encoder_hidden = tuple(int(d) for d in self.encoder_hidden)
        self.feature_shape = tuple(int(d) for d in self.feature_shape)

    def validate(self):
        problems = []
        if self.memory_per_task < 1:
            problems.append(f"memory_per_task must be >= 1, got {self.memory_per_task}")
        if self.strategy not in STRATEGIES:
            problems.append(f"unknown strategy '{self.strategy}', expected one of {STRATEGIES}")
        if self.compression not in COMPRESSION_KINDS:
            problems.append(
                f"unknown compression '{self.compression}', expected one of {COMPRESSION_KINDS}"
            )
        if self.fm_kind not in FM_KINDS:
            problems.append(f"unknown fm loss '{self.fm_kind}', expected one of {FM_KINDS}")
        if self.fm_reduction not in FM_REDUCTIONS:
            problems.append(
                f"unknown fm reduction '{self.fm_reduction}', expected one of {FM_REDUCTIONS}"
            )
        if self.optimizer not in OPTIMIZERS:
            problems.append(f"unknown optimizer '{self.optimizer}', expected one of {OPTIMIZERS}")
        if self.learning_rate <= 0.0:
            problems.append(f"learning_rate must be positive, got {self.learning_rate}")
        if not all(0.0 < b < 1.0 for b in self.adam_betas):
            problems.append(f"adam betas must lie in (0, 1), got {self.adam_betas}")
        if self.epochs < 1:
            problems.append(f"epochs must be >= 1, got {self.epochs}")
        if self.strategy == "high_variance" and self.epochs < 2:
            problems.append("strategy 'high_variance' needs epochs >= 2 to observe loss variance")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.replay_batch_size < 1:
            problems.append(f"replay_batch_size must be >= 1, got {self.replay_batch_size}")
        if len(self.feature_shape) not in (1, 3) or any(d < 1 for d in self.feature_shape):
            problems.append(f"feature_shape must be (n,) or (n_f, w, h), got {self.feature_shape}")
        if self.compression != "none" and len(self.feature_shape) != 3:
            problems.append(
                f"compression '{self.compression}' needs a 3-axis feature_shape, got {self.feature_shape}"
            )
        if any(d < 1 for d in self.encoder_hidden):
            problems.append(f"encoder hidden widths must be positive, got {self.encoder_hidden}")
        if self.activation not in ACTIVATIONS:
            problems.append(f"unknown activation '{self.activation}', expected one of {ACTIVATIONS}")
        if self.mt_iterations is not None and self.mt_iterations < 1:
            problems.append(f"mt_iterations must be >= 1, got {self.mt_iterations}")
        if problems:
            raise ValueError("invalid training config: " + "; ".join(problems))
        return self


@dataclass
class RunResult:
    """One sequential run: matrices, drift trace, and the derived summary.

    ``metrics`` always restates values recomputable from the stored
    matrices; :meth:`validate` asserts exactly that.
    """

    seed: int
    eval_matrix_loss: EvalMatrix
    eval_matrix_acc: EvalMatrix | None
    drift_trace: list
    metrics: dict
    wall_time_s: float
    mt_reference: np.ndarray | None = None

    def primary_matrix(self):
        return self.eval_matrix_acc if self.eval_matrix_acc is not None else self.eval_matrix_loss

    def expected_metrics(self):
        out = {}
        if self.eval_matrix_acc is not None:
            out["forgetting"] = forgetting_accuracy(self.eval_matrix_acc)
            out["avg_accuracy"] = avg_accuracy(self.eval_matrix_acc)
        else:
            out["forgetting"] = forgetting_loss(self.eval_matrix_loss)
        if self.mt_reference is not None:
            out["perf_drop"] = performance_drop(
                self.eval_matrix_loss, MultitaskReference(self.mt_reference)
            )
        return out

    def validate(self):
        expected = self.expected_metrics()
        if set(expected) != set(self.metrics):
            raise ValueError(
                f"summary keys {sorted(self.metrics)} do not match matrices {sorted(expected)}"
            )
        for key, value in expected.items():
            if abs(self.metrics[key] - value) > 1e-12:
                raise ValueError(
                    f"summary metric '{key}'={self.metrics[key]} does not recompute ({value})"
                )
        return self


def _rng(seed, key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def evaluate(encoder, head, x, y, loss_kind):
    """Test loss (and accuracy for classification) with no tape recording."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        raise ValueError("evaluate on an empty test set")
    with no_grad():
        preds = head.forward(encoder.forward(Tensor(x)))
        loss = float(pointwise_loss(preds, y, loss_kind).data)
    accuracy = None
    if loss_kind == "cross_entropy":
        accuracy = float(np.mean(np.argmax(preds.data, axis=1) == np.asarray(y)))
    return loss, accuracy


def _ensure_grads(params):
    # params untouched by this step's loss receive an explicit zero gradient
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


def _replay_terms(encoder, heads, buffer, method, cfg, kinds, j, fm_weights, coeff):
    """lambda * replay + lambda_fm * feature-matching for past task j."""
    items = buffer.sample_batch(
        j, cfg.replay_batch_size, weighted=(cfg.strategy == "loss_eq_weighted")
    )
    total = None
    if method.lam > 0.0:
        total = replay_loss(encoder, heads, items, kinds[j]) * (method.lam * coeff)
    if method.tag == "car" and method.lambda_fm > 0.0:
        if any(it.stored_feature is None for it in items):
            raise ValueError(f"feature matching needs stored features for task {j}")
        x = np.stack([it.x for it in items])
        stored = np.stack([it.stored_feature for it in items])
        current = compress(encoder.forward(Tensor(x)), cfg.compression)
        fm = fm_loss(
            current,
            Tensor(stored),
            cfg.fm_kind,
            weights=fm_weights.get(j),
            reduction=cfg.fm_reduction,
        )
        term = fm * (method.lambda_fm * coeff)
        total = term if total is None else total + term
    return total


def _train_step(
    encoder, heads, buffer, task, method, cfg, kinds, xb, yb, past, schedule_rng,
    fm_weights, weight_acc, opt, all_params,
):
    i = task.index
    use_replay = bool(past) and (method.lam > 0.0 or method.lambda_fm > 0.0)
    f_current = None
    replay_only = (
        method.schedule == "probabilistic"
        and use_replay
        and schedule_rng.random() < method.p_replay
    )
    if replay_only:
        j = int(past[schedule_rng.integers(len(past))])
        loss = _replay_terms(encoder, heads, buffer, method, cfg, kinds, j, fm_weights, 1.0)
    else:
        f_current = encoder.forward(Tensor(xb))
        loss = pointwise_loss(heads[i].forward(f_current), yb, kinds[i])
        if use_replay and method.schedule == "joint":
            if cfg.joint_single_past:
                picked = [int(past[schedule_rng.integers(len(past))])]
                coeff = 1.0
            else:
                picked = past
                coeff = 1.0 / len(past)
            for j in picked:
                loss = loss + _replay_terms(
                    encoder, heads, buffer, method, cfg, kinds, j, fm_weights, coeff
                )
    loss.backward()
    if weight_acc is not None and f_current is not None and f_current.grad is not None:
        pooled = compress(Tensor(f_current.grad), cfg.compression).data
        for row in np.atleast_2d(pooled):
            weight_acc.update(row)
    _ensure_grads(opt.params)
    opt.step()
    zero_grads(all_params)


def train_sequence(stream, method, cfg, seed):
    """Train the task sequence in order and score every checkpoint.

    After each task: the buffer is filled by the configured strategy,
    compressed features are snapshotted for its stored items, every seen
    task is evaluated, and per-task feature drift is recorded.
    """
    cfg.validate()
    if stream.t < 1:
        raise ValueError("cannot train an empty task stream")
    started = time.perf_counter()
    init_rng = _rng(seed, 0)
    data_rng = _rng(seed, 1)
    buffer_rng = _rng(seed, 2)
    schedule_rng = _rng(seed, 3)

    encoder = Encoder(
        stream.input_dim, cfg.encoder_hidden, cfg.feature_shape, cfg.activation, rng=init_rng
    )
    heads = {}
    kinds = {}
    for task in stream.tasks:
        heads[task.index] = TaskHead(encoder.feature_dim, task.output_dim, task.index, rng=init_rng)
        kinds[task.index] = task.loss_kind
    all_params = encoder.parameters()
    for head in heads.values():
        all_params = all_params + head.parameters()

    buffer = ReplayBuffer(cfg.memory_per_task, rng=buffer_rng)
    classification = stream.is_classification()
    matrix_loss = EvalMatrix("loss", stream.t)
    matrix_acc = EvalMatrix("accuracy", stream.t) if classification else None
    drift_trace = []
    fm_weights = {}
    weighted_fm = method.tag == "car" and cfg.fm_kind in _WEIGHTED_FM_KINDS
    fm_dim = compressed_dim(cfg.feature_shape, cfg.compression)

    for task in stream.tasks:
        i = task.index
        opt = make_optimizer(
            cfg.optimizer,
            encoder.parameters() + heads[i].parameters(),
            cfg.learning_rate,
            cfg.adam_betas,
        )
        past = buffer.tasks()
        var_state = (
            RunningVarianceState(task.n_train) if cfg.strategy == "high_variance" else None
        )
        weight_acc = FeatureWeightAccumulator(fm_dim) if weighted_fm else None

        for _epoch in range(cfg.epochs):
            order = data_rng.permutation(task.n_train)
            for start in range(0, task.n_train, cfg.batch_size):
                batch = order[start : start + cfg.batch_size]
                _train_step(
                    encoder, heads, buffer, task, method, cfg, kinds,
                    task.train_x[batch], task.train_y[batch], past, schedule_rng,
                    fm_weights, weight_acc, opt, all_params,
                )
            if var_state is not None:
                var_state.update(
                    per_sample_losses(
                        encoder, heads[i], task.train_x, task.train_y, task.loss_kind
                    )
                )

        final_losses = None
        if cfg.strategy in _LOSS_BASED_STRATEGIES:
            final_losses = per_sample_losses(
                encoder, heads[i], task.train_x, task.train_y, task.loss_kind
            )
        fill_task_buffer(
            buffer, i, task.train_x, task.train_y, cfg.strategy,
            final_losses=final_losses, variance_state=var_state,
        )
        buffer.attach_features(i, encoder, cfg.compression)
        if weight_acc is not None:
            fm_weights[i] = weight_acc.finalize()

        for j in range(1, i + 1):
            seen = stream.tasks[j - 1]
            loss, accuracy = evaluate(encoder, heads[j], seen.test_x, seen.test_y, kinds[j])
            matrix_loss.set(i, j, loss)
            if matrix_acc is not None:
                matrix_acc.set(i, j, accuracy)
        drift_trace.append(feature_drift(buffer, encoder, cfg.compression))

    metrics = {}
    if matrix_acc is not None:
        metrics["forgetting"] = forgetting_accuracy(matrix_acc)
        metrics["avg_accuracy"] = avg_accuracy(matrix_acc)
    else:
        metrics["forgetting"] = forgetting_loss(matrix_loss)
    result = RunResult(
        seed=seed,
        eval_matrix_loss=matrix_loss,
        eval_matrix_acc=matrix_acc,
        drift_trace=drift_trace,
        metrics=metrics,
        wall_time_s=time.perf_counter() - started,
    )
    return result.validate()


def attach_reference(result, reference):
    """Add the multitask performance-drop summary to a finished run."""
    result.mt_reference = np.asarray(reference.mt_losses, dtype=np.float64)
    result.metrics["perf_drop"] = performance_drop(
        result.eval_matrix_loss, reference
    )
    return result.validate()


def train_multitask(stream, cfg, seed):
    """Train one model on all tasks jointly, interleaving task batches
    uniformly at random, matched to the sequential step budget by default."""
    cfg.validate()
    if stream.t < 1:
        raise ValueError("cannot train an empty task stream")
    init_rng = _rng(seed, 10)
    data_rng = _rng(seed, 11)
    encoder = Encoder(
        stream.input_dim, cfg.encoder_hidden, cfg.feature_shape, cfg.activation, rng=init_rng
    )
    heads = {}
    opts = {}
    all_params = encoder.parameters()
    for task in stream.tasks:
        heads[task.index] = TaskHead(encoder.feature_dim, task.output_dim, task.index, rng=init_rng)
        all_params = all_params + heads[task.index].parameters()
    for task in stream.tasks:
        opts[task.index] = make_optimizer(
            cfg.optimizer,
            encoder.parameters() + heads[task.index].parameters(),
            cfg.learning_rate,
            cfg.adam_betas,
        )
    steps = cfg.mt_iterations
    if steps is None:
        steps = sum(
            math.ceil(task.n_train / cfg.batch_size) * cfg.epochs for task in stream.tasks
        )
    for _ in range(steps):
        task = stream.tasks[int(data_rng.integers(stream.t))]
        idx = data_rng.choice(task.n_train, size=min(cfg.batch_size, task.n_train), replace=False)
        loss = task_loss(
            encoder, heads[task.index], task.train_x[idx], task.train_y[idx], task.loss_kind
        )
        loss.backward()
        opt = opts[task.index]
        _ensure_grads(opt.params)
        opt.step()
        zero_grads(all_params)
    losses = []
    for task in stream.tasks:
        loss, _ = evaluate(encoder, heads[task.index], task.test_x, task.test_y, task.loss_kind)
        losses.append(loss)
    return MultitaskReference(np.array(losses))
