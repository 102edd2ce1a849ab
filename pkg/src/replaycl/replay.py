"""Per-task replay buffers and the strategies that fill them.

Each task owns up to ``m`` stored samples.  Selection strategies either
work from per-sample training losses (hard/easy mining, loss equalization),
from per-sample loss variance across epochs (Welford), or from the raw data
stream (uniform, reservoir).  The loss-equalized strategies stride the
loss-sorted order so the buffer's own loss histogram comes out flat; the
weighted variant additionally records sampling weights proportional to the
source histogram's bin height at each kept sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .compression import compress
from .tensor import Tensor, no_grad

STRATEGIES = (
    "uniform",
    "reservoir",
    "hard",
    "easy",
    "high_variance",
    "loss_eq",
    "loss_eq_weighted",
)

LOSS_EQ_BINS = 10


class EmptyBufferError(LookupError):
    """Raised when sampling or measuring against an empty per-task buffer."""


@dataclass
class ReplayItem:
    """One stored sample: raw input, target, owning task, and optionally the
    compressed feature snapshot taken when its task finished training."""

    x: np.ndarray
    y: object
    task_index: int
    stored_feature: np.ndarray | None = None
    weight: float = 1.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.task_index < 1:
            raise ValueError(f"task_index must be >= 1, got {self.task_index}")
        if not np.isfinite(self.weight) or self.weight <= 0.0:
            raise ValueError(f"item weight must be positive and finite, got {self.weight}")


class ReplayBuffer:
    """Fixed per-task capacity store with its own sampling rng."""

    def __init__(self, m, rng=None, seed=None):
        if m <= 0:
            raise ValueError(f"memory per task must be positive, got {m}")
        self.m = int(m)
        if rng is None:
            rng = np.random.default_rng(seed)
        self.rng = rng
        self.per_task = {}

    def tasks(self):
        return sorted(self.per_task)

    def items(self, task_index):
        return self.per_task.get(task_index, [])

    def __len__(self):
        return sum(len(v) for v in self.per_task.values())

    def store(self, task_index, items):
        if len(items) > self.m:
            raise ValueError(f"cannot store {len(items)} items with capacity {self.m}")
        self.per_task[task_index] = list(items)

    def sample_batch(self, task_index, batch_size, weighted=False):
        """Draw ``batch_size`` items with replacement; weighted mode uses the
        items' stored weights as sampling probabilities."""
        items = self.per_task.get(task_index)
        if not items:
            raise EmptyBufferError(f"replay buffer holds no items for task {task_index}")
        if batch_size <= 0:
            raise ValueError(f"batch_size must be positive, got {batch_size}")
        if weighted:
            w = np.array([it.weight for it in items], dtype=np.float64)
            idx = self.rng.choice(len(items), size=batch_size, replace=True, p=w / w.sum())
        else:
            idx = self.rng.integers(0, len(items), size=batch_size)
        return [items[k] for k in idx]

    def attach_features(self, task_index, encoder, compression_kind):
        """Snapshot compressed encoder features for every stored item of one
        task; called exactly once, right after that task trains."""
        items = self.per_task.get(task_index)
        if not items:
            raise EmptyBufferError(f"replay buffer holds no items for task {task_index}")
        if any(it.stored_feature is not None for it in items):
            raise ValueError(f"features already attached for task {task_index}")
        x = np.stack([it.x for it in items])
        with no_grad():
            feats = compress(encoder.forward(Tensor(x)), compression_kind)
        for row, item in enumerate(items):
            item.stored_feature = feats.data[row].copy()

    def snapshot(self):
        """JSON-ready dict of the full buffer contents."""
        tasks = {}
        for task_index in self.tasks():
            rows = []
            for it in self.per_task[task_index]:
                y = it.y
                if isinstance(y, np.ndarray):
                    y = y.tolist()
                elif isinstance(y, np.generic):
                    y = y.item()
                rows.append(
                    {
                        "x": it.x.tolist(),
                        "y": y,
                        "task_index": it.task_index,
                        "weight": it.weight,
                        "feature": None
                        if it.stored_feature is None
                        else it.stored_feature.tolist(),
                    }
                )
            tasks[str(task_index)] = rows
        return {"m": self.m, "tasks": tasks}


# ----------------------------------------------------------------------
# selection strategies
# ----------------------------------------------------------------------


def select_uniform(n, m, rng):
    """m distinct indices drawn uniformly from range(n); all of them if n <= m."""
    if n <= 0:
        raise ValueError(f"cannot select from an empty task, got n={n}")
    if m <= 0:
        raise ValueError(f"selection size must be positive, got m={m}")
    if n <= m:
        return np.arange(n)
    return rng.choice(n, size=m, replace=False)


class ReservoirFiller:
    """Classic streaming reservoir for one task's slot in the buffer.

    Offer items in stream order: the k-th item replaces a random slot with
    probability m/k, so every streamed item ends up stored with equal
    probability m/N.
    """

    def __init__(self, buffer, task_index):
        self.buffer = buffer
        self.task_index = task_index
        self.seen = 0
        buffer.per_task.setdefault(task_index, [])

    def offer(self, item):
        if item.task_index != self.task_index:
            raise ValueError(
                f"item for task {item.task_index} offered to reservoir of task {self.task_index}"
            )
        self.seen += 1
        slot_list = self.buffer.per_task[self.task_index]
        if len(slot_list) < self.buffer.m:
            slot_list.append(item)
            return
        j = int(self.buffer.rng.integers(0, self.seen))
        if j < self.buffer.m:
            slot_list[j] = item


def select_hard(losses, m):
    """Indices of the m largest final losses; ties keep the lower index."""
    losses = np.asarray(losses, dtype=np.float64)
    order = np.argsort(-losses, kind="stable")
    return order[: min(m, losses.shape[0])]


def select_easy(losses, m):
    """Indices of the m smallest final losses; ties keep the lower index."""
    losses = np.asarray(losses, dtype=np.float64)
    order = np.argsort(losses, kind="stable")
    return order[: min(m, losses.shape[0])]


class RunningVarianceState:
    """Per-sample Welford accumulator over one loss value per epoch."""

    def __init__(self, n):
        if n <= 0:
            raise ValueError(f"sample count must be positive, got {n}")
        self.n = int(n)
        self.count = 0
        self.mean = np.zeros(self.n)
        self.m2 = np.zeros(self.n)

    def update(self, losses):
        losses = np.asarray(losses, dtype=np.float64)
        if losses.shape != (self.n,):
            raise ValueError(f"loss vector shape {losses.shape} does not match n={self.n}")
        self.count += 1
        delta = losses - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (losses - self.mean)

    def variances(self):
        """Population variance per sample; needs at least two observations."""
        if self.count < 2:
            raise ValueError(
                f"variance needs at least 2 loss observations per sample, got {self.count}"
            )
        return self.m2 / self.count


def select_high_variance(state, m):
    """Indices of the m highest-variance samples; ties keep the lower index."""
    variances = state.variances()
    order = np.argsort(-variances, kind="stable")
    return order[: min(m, variances.shape[0])]


def loss_histogram(losses, bins=LOSS_EQ_BINS):
    """Equal-width histogram between the observed min and max."""
    losses = np.asarray(losses, dtype=np.float64)
    counts, edges = np.histogram(losses, bins=bins)
    return counts, edges


def _histogram_bin(edges, value):
    k = int(np.searchsorted(edges, value, side="right")) - 1
    return int(np.clip(k, 0, len(edges) - 2))


def select_loss_equalized(losses, m, bins=LOSS_EQ_BINS):
    """Rank-uniform selection over the loss-sorted order, plus weights.

    Selects ranks round(k * (N - 1) / (m - 1)) for k = 0..m-1 (deduplicated,
    topped up with the nearest unused ranks), which spreads the kept samples
    evenly across the loss range.  Returns (indices, weights) where each
    weight is proportional to the source histogram's bin height at the
    sample's loss, normalized to mean 1.  Degenerate all-equal losses fall
    back to the first m indices with unit weights.
    """
    losses = np.asarray(losses, dtype=np.float64)
    n = losses.shape[0]
    if n == 0:
        raise ValueError("cannot select from an empty loss vector")
    keep = min(m, n)
    if losses.min() == losses.max():
        return np.arange(keep), np.ones(keep)
    order = np.argsort(losses, kind="stable")
    if keep == 1:
        ranks = [0]
    else:
        ranks = []
        used = set()
        for k in range(keep):
            r = int(np.rint(k * (n - 1) / (keep - 1)))
            if r in used:
                r = _nearest_unused_rank(r, used, n)
            used.add(r)
            ranks.append(r)
    indices = order[np.array(ranks)]
    counts, edges = loss_histogram(losses, bins=bins)
    raw = np.array([counts[_histogram_bin(edges, losses[i])] for i in indices], dtype=np.float64)
    weights = raw / raw.mean()
    return indices, weights


def _nearest_unused_rank(r, used, n):
    for d in range(1, n):
        if r - d >= 0 and (r - d) not in used:
            return r - d
        if r + d < n and (r + d) not in used:
            return r + d
    raise ValueError("no unused rank available")


def fill_task_buffer(
    buffer,
    task_index,
    xs,
    ys,
    strategy,
    final_losses=None,
    variance_state=None,
):
    """Fill one task's slot using the named strategy.

    ``final_losses`` must align with the task data for the mining and
    loss-equalization strategies; ``variance_state`` carries the per-epoch
    Welford statistics for high_variance.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy '{strategy}', expected one of {STRATEGIES}")
    xs = np.asarray(xs, dtype=np.float64)
    n = xs.shape[0]
    if n == 0:
        raise ValueError(f"task {task_index} has no training data to store")
    if len(ys) != n:
        raise ValueError(f"data/target length mismatch: {n} vs {len(ys)}")

    if strategy == "reservoir":
        buffer.per_task[task_index] = []
        filler = ReservoirFiller(buffer, task_index)
        for i in range(n):
            filler.offer(ReplayItem(xs[i], ys[i], task_index))
        return

    weights = None
    if strategy == "uniform":
        indices = select_uniform(n, buffer.m, buffer.rng)
    elif strategy in ("hard", "easy", "loss_eq", "loss_eq_weighted"):
        if final_losses is None:
            raise ValueError(f"strategy '{strategy}' needs per-sample final losses")
        final_losses = np.asarray(final_losses, dtype=np.float64)
        if final_losses.shape != (n,):
            raise ValueError(
                f"per-sample losses shape {final_losses.shape} does not match n={n}"
            )
        if strategy == "hard":
            indices = select_hard(final_losses, buffer.m)
        elif strategy == "easy":
            indices = select_easy(final_losses, buffer.m)
        else:
            indices, eq_weights = select_loss_equalized(final_losses, buffer.m)
            if strategy == "loss_eq_weighted":
                weights = eq_weights
    else:  # high_variance
        if variance_state is None:
            raise ValueError("strategy 'high_variance' needs a RunningVarianceState")
        indices = select_high_variance(variance_state, buffer.m)

    items = []
    for pos, i in enumerate(indices):
        w = 1.0 if weights is None else float(weights[pos])
        items.append(ReplayItem(xs[i], ys[i], task_index, weight=w))
    buffer.store(task_index, items)
