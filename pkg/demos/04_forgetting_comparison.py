"""Catastrophic forgetting across methods: plain SGD vs experience replay
vs compressed activation replay.

Trains the same 5-task stream three ways and prints each run's evaluation
matrix (rows are checkpoints, columns are tasks), the forgetting metric,
and the feature drift of task 1 at the end of the sequence.

Run with: python3 demos/04_forgetting_comparison.py  (about 10 s)
"""

import numpy as np

from replaycl import (
    Method,
    TaskStreamSpec,
    TrainingConfig,
    derive_stream_seed,
    gen_stream,
    train_sequence,
)

METHODS = (
    ("plain SGD", Method("sgd_only")),
    ("experience replay", Method("er", lam=1.0)),
    ("compressed activation replay", Method("car", lam=1.0, lambda_fm=5.0)),
)

seeds = (0, 1)
cfg = TrainingConfig()

rows = {}
for label, method in METHODS:
    forgetting, accuracy, drift = [], [], []
    last = None
    for seed in seeds:
        spec = TaskStreamSpec(seed=derive_stream_seed(0, seed))
        result = train_sequence(gen_stream(spec), method, cfg, seed)
        forgetting.append(result.metrics["forgetting"])
        accuracy.append(result.metrics["avg_accuracy"])
        drift.append(result.drift_trace[-1][1])
        last = result
    rows[label] = (np.mean(forgetting), np.mean(accuracy), np.mean(drift))

    print(f"\n=== {label} (seed {seeds[-1]}) ===")
    matrix = last.eval_matrix_acc
    header = "        " + "".join(f"task{j}".rjust(8) for j in range(1, matrix.t + 1))
    print(header)
    for i in range(1, matrix.t + 1):
        cells = "".join(
            f"{matrix.get(i, j):8.3f}" if j <= i else " " * 8 for j in range(1, matrix.t + 1)
        )
        print(f"after {i} {cells}")

print("\n=== means over seeds", seeds, "===")
print(f"{'method':30s} {'forgetting':>11s} {'avg acc':>9s} {'task-1 drift':>13s}")
for label, (fgt, acc, dft) in rows.items():
    print(f"{label:30s} {fgt:11.4f} {acc:9.4f} {dft:13.3f}")
print("\nthe feature-matching term cuts forgetting relative to raw replay and")
print("keeps early-task features from drifting; this synthetic stream is")
print("gentle enough that even plain SGD forgets only a little on average.")
