"""Replay-based continual learning at desk scale.

A small float64 autodiff engine backs a shared-encoder / per-task-head
model family.  Sequential training can replay stored raw samples
(experience replay) and additionally match current compressed features of
replayed samples against snapshots taken when their task finished
(compressed activation replay).  Forgetting metrics, buffer-filling
strategies, synthetic task streams, and a seeded experiment harness round
out the package.
"""

from .compression import (
    COMPRESSION_KINDS,
    FM_KINDS,
    FeatureWeightAccumulator,
    compress,
    compress_multilayer,
    compressed_dim,
    fm_loss,
    mmd,
)
from .harness import (
    ConfigError,
    RunConfig,
    aggregate_records,
    canonical_record_bytes,
    config_from_dict,
    config_to_dict,
    derive_stream_seed,
    generate_stream_file,
    load_config,
    read_records,
    report,
    run_experiment,
    run_single,
    save_config,
    validate_record,
    write_aggregate_csv,
    write_records,
)
from .losses import (
    LOSS_KINDS,
    cross_entropy,
    l1,
    mse,
    per_sample_losses,
    pointwise_loss,
    replay_loss,
    task_loss,
)
from .metrics import (
    EvalMatrix,
    MultitaskReference,
    avg_accuracy,
    feature_drift,
    forgetting_accuracy,
    forgetting_loss,
    performance_drop,
)
from .nn import Adam, Encoder, SGD, TaskHead, glorot_uniform, make_optimizer
from .replay import (
    STRATEGIES,
    EmptyBufferError,
    ReplayBuffer,
    ReplayItem,
    ReservoirFiller,
    RunningVarianceState,
    fill_task_buffer,
    select_easy,
    select_hard,
    select_high_variance,
    select_loss_equalized,
    select_uniform,
)
from .streams import STREAM_KINDS, Task, TaskStream, TaskStreamSpec, gen_stream
from .tensor import Tensor, as_tensor, cat, no_grad, zero_grads
from .trainer import (
    METHOD_TAGS,
    SCHEDULES,
    Method,
    RunResult,
    TrainingConfig,
    evaluate,
    train_multitask,
    train_sequence,
)

__version__ = "0.1.0"
