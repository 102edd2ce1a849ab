"""Command-line interface: run experiments, report results, generate streams."""

from __future__ import annotations

import argparse
import sys

import yaml

from .compression import COMPRESSION_KINDS, FM_KINDS
from .harness import (
    ConfigError,
    config_from_dict,
    generate_stream_file,
    report,
    run_experiment,
)
from .replay import STRATEGIES
from .trainer import METHOD_TAGS


def build_parser():
    parser = argparse.ArgumentParser(
        prog="replaycl",
        description="Replay-based continual learning experiments on synthetic task streams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured experiment over its seeds")
    run.add_argument("config", help="YAML run configuration")
    run.add_argument("--seed", type=int, help="replace the config's seed list with this one seed")
    run.add_argument("--method", choices=METHOD_TAGS, help="override method.tag")
    run.add_argument("--memory", type=int, help="override training.memory_per_task")
    run.add_argument("--lambda-fm", dest="lambda_fm", type=float, help="override method.lambda_fm")
    run.add_argument("--strategy", choices=STRATEGIES, help="override training.strategy")
    run.add_argument(
        "--compression", choices=COMPRESSION_KINDS, help="override training.compression"
    )
    run.add_argument("--fm-loss", dest="fm_loss", choices=FM_KINDS, help="override training.fm_loss")
    run.add_argument("--out", help="override the output path")

    rep = sub.add_parser("report", help="summarize a results file as method x memory tables")
    rep.add_argument("results", help="JSON-lines results file written by 'run'")

    gen = sub.add_parser("gen-stream", help="materialize a task stream spec into a JSON file")
    gen.add_argument("spec", help="YAML stream spec")
    gen.add_argument("out", help="output JSON path")
    return parser


def _apply_overrides(doc, args):
    """Fold CLI flags into the raw config mapping before validation."""
    if not isinstance(doc, dict):
        raise ConfigError("config file does not hold a mapping")
    method = doc.setdefault("method", {})
    training = doc.setdefault("training", {})
    if args.method is not None:
        method["tag"] = args.method
    if args.lambda_fm is not None:
        method["lambda_fm"] = args.lambda_fm
    if args.memory is not None:
        training["memory_per_task"] = args.memory
    if args.strategy is not None:
        training["strategy"] = args.strategy
    if args.compression is not None:
        training["compression"] = args.compression
    if args.fm_loss is not None:
        training["fm_loss"] = args.fm_loss
    if args.seed is not None:
        doc["seeds"] = [args.seed]
    if args.out is not None:
        doc["output"] = args.out
    return doc


def _cmd_run(args):
    from pathlib import Path

    path = Path(args.config)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    doc = yaml.safe_load(path.read_text())
    cfg = config_from_dict(_apply_overrides(doc, args))
    summary = run_experiment(cfg)
    print(f"wrote {len(summary['records'])} records to {summary['output']}")
    print(f"wrote aggregate to {summary['aggregate_output']}")
    for key, stats in sorted(summary["aggregate"]["metrics"].items()):
        print(f"  {key}: {stats['mean']:.4f} +/- {stats['std']:.4f}")


def _cmd_report(args):
    print(report(args.results))


def _cmd_gen_stream(args):
    out = generate_stream_file(args.spec, args.out)
    print(f"wrote stream to {out}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "report": _cmd_report, "gen-stream": _cmd_gen_stream}
    try:
        handlers[args.command](args)
    except Exception as err:  # any failure must surface as a nonzero exit
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
