"""Command-line surface: train, eval, gen-synth, and inspect subcommands.

Exit codes: 0 on success, 1 on validation problems (bad flags, missing or
invalid files, bad records), 2 on runtime aborts (non-finite training).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .model import load_checkpoint
from .records import (RecordError, TruncatedError, gen_synthetic, load_record,
                      validate_record)
from .training import TrainConfig, TrainingAbort, evaluate, train_from_config


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="gatemabsa",
                     description="Train and inspect the gated multimodal classifier.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train from a JSON config")
    p_train.add_argument("--config", required=True, help="path to a JSON config file")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--split", default=None,
                        help="restrict to one manifest split (default: all)")

    p_gen = sub.add_parser("gen-synth", help="generate a synthetic dataset")
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--examples", type=int, required=True)
    p_gen.add_argument("--tokens", type=int, required=True)
    p_gen.add_argument("--separation", type=float, required=True)
    p_gen.add_argument("--dev-every", type=int, default=4,
                       help="every k-th record goes to the dev split (0 disables)")

    p_inspect = sub.add_parser("inspect", help="describe and validate one record")
    p_inspect.add_argument("--record", required=True)
    return parser


def _cmd_train(args) -> int:
    config_path = Path(args.config)
    if not config_path.exists():
        print(f"config file not found: {config_path}", file=sys.stderr)
        return 1
    try:
        config = TrainConfig.from_json(config_path)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"invalid config {config_path}: {exc}", file=sys.stderr)
        return 1
    try:
        result = train_from_config(config, log_sink=sys.stdout)
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return 1
    except RecordError as exc:
        print(f"bad record: {exc}", file=sys.stderr)
        return 1
    except TrainingAbort as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"best_epoch": result.best_epoch,
                      "best_dev_loss": result.best_dev_loss,
                      "epochs_run": result.epochs_run}, sort_keys=True))
    return 0


def _cmd_eval(args) -> int:
    for path in (args.checkpoint, args.manifest):
        if not Path(path).exists():
            print(f"file not found: {path}", file=sys.stderr)
            return 1
    try:
        model = load_checkpoint(args.checkpoint)
        metrics = evaluate(model, args.manifest, split=args.split)
    except (ValueError, RecordError) as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(metrics.to_dict(), sort_keys=True))
    return 0


def _cmd_gen_synth(args) -> int:
    try:
        manifest_path = gen_synthetic(args.seed, args.examples, args.tokens,
                                      args.separation, args.out,
                                      dev_every=args.dev_every)
    except ValueError as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"manifest": str(manifest_path), "examples": args.examples},
                     sort_keys=True))
    return 0


def _cmd_inspect(args) -> int:
    path = Path(args.record)
    if not path.exists():
        print(f"record not found: {path}", file=sys.stderr)
        return 1
    try:
        record = load_record(path)
    except TruncatedError as exc:
        print(f"corrupt record {path}: {exc}", file=sys.stderr)
        return 1
    except RecordError as exc:
        print(f"unreadable record {path}: {exc}", file=sys.stderr)
        return 1
    violations = validate_record(record)
    print(json.dumps({
        "id": record.id,
        "n_tokens": record.n_tokens,
        "label": record.label,
        "aspect_positions": list(record.aspect_positions),
        "token_feats_shape": list(record.token_feats.shape),
        "aspect_feats_shape": list(record.aspect_feats.shape),
        "image_grid_shape": list(record.image_grid.shape),
        "adjacency_shape": list(record.adjacency.shape),
        "valid": not violations,
        "violations": violations,
    }, sort_keys=True))
    return 0 if not violations else 1


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    handlers = {"train": _cmd_train, "eval": _cmd_eval,
                "gen-synth": _cmd_gen_synth, "inspect": _cmd_inspect}
    try:
        return handlers[args.command](args)
    except TrainingAbort as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
