"""Compression functions and feature-matching losses.

Shows the pooled dimensionalities on a convolutional-shaped feature map,
evaluates every feature-matching loss on the same pair of feature sets,
and sweeps the matching coefficient: drift falls steadily as old features
are pinned harder, and forgetting trends down with it.

Run with: python3 demos/05_feature_matching_variants.py  (about 15 s)
"""

import numpy as np

from replaycl import (
    FM_KINDS,
    Method,
    TaskStreamSpec,
    Tensor,
    TrainingConfig,
    compress,
    compressed_dim,
    derive_stream_seed,
    fm_loss,
    gen_stream,
    mmd,
    train_sequence,
)

# ----------------------------------------------------------------------
# 1. pooling a 2048 x 8 x 8 feature map
# ----------------------------------------------------------------------
shape = (2048, 8, 8)
print("compressed dimensionality of a", "x".join(map(str, shape)), "feature map:")
for kind in ("none", "spatial", "channel", "spatial_channel"):
    print(f"  {kind:16s} -> {compressed_dim(shape, kind)}")

features = Tensor(np.random.default_rng(0).normal(size=(4, 8, 3, 3)))
pooled = compress(features, "spatial_channel")
print(f"\nbatch of 4 maps of shape (8, 3, 3) pools to {pooled.data.shape}")

# ----------------------------------------------------------------------
# 2. the feature-matching loss family on one pair of feature sets
# ----------------------------------------------------------------------
rng = np.random.default_rng(1)
stored = rng.normal(size=(16, 10))
current = stored + 0.3 * rng.normal(size=(16, 10))
weights = np.abs(rng.normal(size=10))
weights /= weights.mean()

print("\nfeature-matching losses for a 0.3-sigma perturbation:")
for kind in FM_KINDS:
    kw = {"weights": weights} if kind.startswith("weighted") else {}
    value = fm_loss(Tensor(current), Tensor(stored), kind, **kw)
    print(f"  {kind:12s} {float(value.data):.4f}")
print(f"  mmd with fixed bandwidth 1.0: "
      f"{float(mmd(Tensor(current), Tensor(stored), bandwidth=1.0).data):.4f}")

# ----------------------------------------------------------------------
# 3. sweeping the matching coefficient
# ----------------------------------------------------------------------
print("\nforgetting vs matching coefficient (1 seed, default stream):")
spec = TaskStreamSpec(seed=derive_stream_seed(0, 0))
cfg = TrainingConfig()
for lam_fm in (0.0, 0.25, 1.0, 5.0, 20.0, 50.0):
    method = Method("er") if lam_fm == 0.0 else Method("car", lambda_fm=lam_fm)
    result = train_sequence(gen_stream(spec), method, cfg, seed=0)
    drift = np.mean([result.drift_trace[-1][j] for j in range(1, 5)])
    print(
        f"  lambda_fm {lam_fm:5.2f}  forgetting {result.metrics['forgetting']:.4f}  "
        f"mean past-task drift {drift:6.3f}"
    )
