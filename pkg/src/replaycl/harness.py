"""Experiment harness: config files, seeded runs, JSON-lines records, and
CSV aggregates.

A run config is one YAML document with ``method``, ``training`` and
``stream`` sections plus top-level ``seeds``, ``multitask_reference`` and
``output``.  ``run_experiment`` executes every seed, writes one JSON record
per run to the output path (plus a sibling ``.csv`` holding mean +/- std
per metric), and returns everything it wrote.  Records are byte-identical
across reruns of the same config except for the ``wall_time_s`` field,
which is the only volatile entry in a record.
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path

import numpy as np
import yaml

from .metrics import EvalMatrix
from .streams import TaskStreamSpec, gen_stream, stream_to_json_dict
from .trainer import (
    Method,
    TrainingConfig,
    attach_reference,
    train_multitask,
    train_sequence,
)

OUTPUT_DIR_ENV = "REPLAYCL_OUT_DIR"

_METHOD_KEYS = ("tag", "lambda", "lambda_fm", "schedule", "p_replay")
_RECORD_KEYS = ("config", "seed", "eval_matrix", "metrics", "drift", "wall_time_s")


class ConfigError(ValueError):
    """Invalid run configuration; the message lists every problem found."""


@dataclasses.dataclass
class RunConfig:
    """Everything needed to reproduce an experiment."""

    method: Method
    training: TrainingConfig = dataclasses.field(default_factory=TrainingConfig)
    stream: TaskStreamSpec = dataclasses.field(default_factory=TaskStreamSpec)
    seeds: tuple = (0, 1, 2, 3, 4)
    multitask_reference: bool = False
    output: str = "results.jsonl"

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)

    def validate(self):
        problems = []
        for section, value in (("training", self.training), ("stream", self.stream)):
            try:
                value.validate()
            except ValueError as err:
                problems.append(f"{section}: {err}")
        if not self.seeds:
            problems.append("seeds: at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            problems.append(f"seeds: duplicates in {self.seeds}")
        if not self.output:
            problems.append("output: path must be non-empty")
        if problems:
            raise ConfigError("; ".join(problems))
        return self


# ----------------------------------------------------------------------
# config (de)serialization
# ----------------------------------------------------------------------


def config_to_dict(cfg):
    method = {
        "tag": cfg.method.tag,
        "lambda": cfg.method.lam,
        "lambda_fm": cfg.method.lambda_fm,
        "schedule": cfg.method.schedule,
        "p_replay": cfg.method.p_replay,
    }
    training = dataclasses.asdict(cfg.training)
    training["fm_loss"] = training.pop("fm_kind")
    training["adam_betas"] = list(cfg.training.adam_betas)
    training["encoder_hidden"] = list(cfg.training.encoder_hidden)
    training["feature_shape"] = list(cfg.training.feature_shape)
    return {
        "method": method,
        "training": training,
        "stream": cfg.stream.to_dict(),
        "seeds": list(cfg.seeds),
        "multitask_reference": cfg.multitask_reference,
        "output": cfg.output,
    }


def _method_from_dict(doc):
    unknown = set(doc) - set(_METHOD_KEYS)
    if unknown:
        raise ValueError(f"unknown method keys: {sorted(unknown)}")
    if "tag" not in doc:
        raise ValueError("method.tag is required")
    tag = doc["tag"]
    lambda_fm_default = 5.0 if tag == "car" else 0.0
    return Method(
        tag=tag,
        lam=doc.get("lambda", 1.0),
        lambda_fm=doc.get("lambda_fm", lambda_fm_default),
        schedule=doc.get("schedule", "joint"),
        p_replay=doc.get("p_replay", 0.5),
    )


def _training_from_dict(doc):
    doc = dict(doc)
    if "fm_loss" in doc:
        doc["fm_kind"] = doc.pop("fm_loss")
    known = set(TrainingConfig.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown training keys: {sorted(unknown)}")
    return TrainingConfig(**doc).validate()


def config_from_dict(doc):
    """Build and validate a RunConfig, reporting every bad section at once."""
    known = {"method", "training", "stream", "seeds", "multitask_reference", "output"}
    problems = []
    unknown = set(doc) - known
    if unknown:
        problems.append(f"unknown top-level keys: {sorted(unknown)}")
    method = training = stream = None
    if "method" not in doc:
        problems.append("method section is required")
    else:
        try:
            method = _method_from_dict(doc["method"])
        except ValueError as err:
            problems.append(f"method: {err}")
    try:
        training = _training_from_dict(doc.get("training", {}))
    except (TypeError, ValueError) as err:
        problems.append(f"training: {err}")
    try:
        stream = TaskStreamSpec.from_dict(doc.get("stream", {}))
    except (TypeError, ValueError) as err:
        problems.append(f"stream: {err}")
    if problems:
        raise ConfigError("; ".join(problems))
    cfg = RunConfig(
        method=method,
        training=training,
        stream=stream,
        seeds=doc.get("seeds", (0, 1, 2, 3, 4)),
        multitask_reference=bool(doc.get("multitask_reference", False)),
        output=doc.get("output", "results.jsonl"),
    )
    return cfg.validate()


def save_config(cfg, path):
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=True))


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    doc = yaml.safe_load(path.read_text())
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} does not hold a mapping")
    return config_from_dict(doc)


# ----------------------------------------------------------------------
# running experiments
# ----------------------------------------------------------------------


def derive_stream_seed(stream_seed, run_seed):
    """Per-run stream seed: each run seed sees its own reproducible draw of
    the spec'd stream distribution."""
    return int(np.random.SeedSequence([int(stream_seed), int(run_seed)]).generate_state(1)[0])


def run_single(cfg, seed):
    """One seeded run; returns the JSON-ready result record."""
    spec = dataclasses.replace(cfg.stream, seed=derive_stream_seed(cfg.stream.seed, seed))
    stream = gen_stream(spec)
    result = train_sequence(stream, cfg.method, cfg.training, seed)
    if cfg.multitask_reference:
        reference = train_multitask(stream, cfg.training, seed)
        attach_reference(result, reference)
    primary = result.primary_matrix()
    record = {
        "config": config_to_dict(cfg),
        "seed": int(seed),
        "eval_matrix": primary.to_json_dict(),
        "metrics": {k: float(v) for k, v in sorted(result.metrics.items())},
        "drift": [
            [[int(j), float(v)] for j, v in sorted(point.items())]
            for point in result.drift_trace
        ],
        "wall_time_s": float(result.wall_time_s),
    }
    if result.eval_matrix_acc is not None:
        record["eval_matrix_loss"] = result.eval_matrix_loss.to_json_dict()
    return record


def resolve_output(path, base_dir=None):
    """Relative outputs land under base_dir or $REPLAYCL_OUT_DIR if set."""
    base = base_dir if base_dir is not None else os.environ.get(OUTPUT_DIR_ENV)
    path = Path(path)
    if base and not path.is_absolute():
        path = Path(base) / path
    return path


def canonical_record_bytes(record):
    """Stable byte form of a record with the volatile timing field dropped."""
    stable = {k: v for k, v in record.items() if k != "wall_time_s"}
    return json.dumps(stable, sort_keys=True).encode()


def validate_record(record):
    """Schema check for one result record; raises with every problem found."""
    problems = []
    for key in _RECORD_KEYS:
        if key not in record:
            problems.append(f"missing key '{key}'")
    if problems:
        raise ValueError("invalid record: " + "; ".join(problems))
    if not isinstance(record["seed"], int):
        problems.append(f"seed must be an integer, got {record['seed']!r}")
    try:
        EvalMatrix.from_json_dict(record["eval_matrix"])
        if "eval_matrix_loss" in record:
            EvalMatrix.from_json_dict(record["eval_matrix_loss"])
    except (KeyError, TypeError, ValueError) as err:
        problems.append(f"bad eval matrix: {err}")
    metrics = record["metrics"]
    if not isinstance(metrics, dict) or "forgetting" not in metrics:
        problems.append("metrics must be a mapping containing 'forgetting'")
    elif not all(isinstance(v, (int, float)) for v in metrics.values()):
        problems.append("metrics values must be numbers")
    if not isinstance(record["drift"], list):
        problems.append("drift must be a list of per-checkpoint [task, value] pairs")
    if not isinstance(record["wall_time_s"], (int, float)):
        problems.append("wall_time_s must be a number")
    if problems:
        raise ValueError("invalid record: " + "; ".join(problems))
    return record


def write_records(records, path):
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def aggregate_records(records):
    """Mean and (sample) std of every metric across the records."""
    if not records:
        raise ValueError("nothing to aggregate")
    keys = sorted(records[0]["metrics"])
    for record in records:
        if sorted(record["metrics"]) != keys:
            raise ValueError("records disagree on their metric keys")
    out = {"n_seeds": len(records), "metrics": {}}
    for key in keys:
        values = np.array([record["metrics"][key] for record in records])
        std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        out["metrics"][key] = {"mean": float(values.mean()), "std": std}
    return out


def write_aggregate_csv(cfg, aggregate, path):
    columns = [
        ("method", cfg.method.tag),
        ("schedule", cfg.method.schedule),
        ("lambda", cfg.method.lam),
        ("lambda_fm", cfg.method.lambda_fm),
        ("memory_per_task", cfg.training.memory_per_task),
        ("strategy", cfg.training.strategy),
        ("compression", cfg.training.compression),
        ("fm_loss", cfg.training.fm_kind),
        ("n_seeds", aggregate["n_seeds"]),
    ]
    for key in sorted(aggregate["metrics"]):
        columns.append((f"{key}_mean", aggregate["metrics"][key]["mean"]))
        columns.append((f"{key}_std", aggregate["metrics"][key]["std"]))
    header = ",".join(name for name, _ in columns)
    row = ",".join(str(value) for _, value in columns)
    Path(path).write_text(header + "\n" + row + "\n")


def run_experiment(cfg, base_dir=None):
    """Run every seed of the config; write records and the aggregate CSV."""
    cfg.validate()
    records = [run_single(cfg, seed) for seed in cfg.seeds]
    for record in records:
        validate_record(record)
    out_path = resolve_output(cfg.output, base_dir)
    write_records(records, out_path)
    aggregate = aggregate_records(records)
    csv_path = out_path.with_suffix(".csv")
    write_aggregate_csv(cfg, aggregate, csv_path)
    return {
        "records": records,
        "aggregate": aggregate,
        "output": str(out_path),
        "aggregate_output": str(csv_path),
    }


# ----------------------------------------------------------------------
# reporting
# ----------------------------------------------------------------------


def read_records(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"results file not found: {path}")
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise ValueError(f"corrupt record at {path}:{lineno}: {err}") from err
            validate_record(record)
            records.append(record)
    if not records:
        raise ValueError(f"no records found in {path}")
    return records


def _group_key(record):
    cfg = record["config"]
    method = cfg["method"]
    training = cfg["training"]
    label = method["tag"]
    if method["tag"] != "sgd_only":
        label += f"(lam={method['lambda']:g}"
        if method["tag"] == "car":
            label += f", lam_fm={method['lambda_fm']:g}, fm={training['fm_loss']}"
        label += f", {training['strategy']}, {training['compression']}, {method['schedule']})"
    return label, int(training["memory_per_task"])


def report(path):
    """Summary tables (methods x memory sizes, mean +/- std per metric)."""
    records = read_records(path)
    groups = {}
    for record in records:
        groups.setdefault(_group_key(record), []).append(record)
    metric_keys = sorted({key for record in records for key in record["metrics"]})
    methods = sorted({label for label, _ in groups})
    memories = sorted({m for _, m in groups})
    lines = [f"{len(records)} runs, {len(groups)} configurations"]
    for key in metric_keys:
        lines.append("")
        lines.append(f"== {key} (mean +/- std) ==")
        width = max(len(m) for m in methods) + 2
        header = " " * width + "".join(f"m={m}".rjust(20) for m in memories)
        lines.append(header)
        for label in methods:
            cells = []
            for m in memories:
                recs = groups.get((label, m))
                if recs is None or any(key not in r["metrics"] for r in recs):
                    cells.append("-".rjust(20))
                    continue
                values = np.array([r["metrics"][key] for r in recs])
                std = values.std(ddof=1) if len(values) > 1 else 0.0
                cells.append(f"{values.mean():.4f} +/- {std:.4f}".rjust(20))
            lines.append(label.ljust(width) + "".join(cells))
    return "\n".join(lines)


def generate_stream_file(spec_path, out_path):
    """Materialize the stream described by a YAML spec file into JSON."""
    spec_path = Path(spec_path)
    if not spec_path.exists():
        raise FileNotFoundError(f"stream spec file not found: {spec_path}")
    doc = yaml.safe_load(spec_path.read_text())
    if not isinstance(doc, dict):
        raise ConfigError(f"stream spec {spec_path} does not hold a mapping")
    spec = TaskStreamSpec.from_dict(doc)
    stream = gen_stream(spec)
    out_path = Path(out_path)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(stream_to_json_dict(spec, stream), sort_keys=True))
    return out_path
