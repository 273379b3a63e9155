"""Command-line interface.

Commands: ``dataset``, ``train --stage X``, ``generate --caption "..."``,
``eval --split S``.  Exit codes: 0 success, 2 input error, 3 missing
dependency, 4 corrupt artifact.
"""

from __future__ import annotations

import argparse
import sys

from .checkpoint import ConfigMismatchError
from .config import PipelineConfig
from .errors import ContractViolation, CorruptArchiveError, MissingDependencyError
from .pipeline import STAGES, Pipeline

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_MISSING = 3
EXIT_CORRUPT = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="text23d",
        description="Desk-scale text-to-3D object generation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="structured-text config file")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config entry (repeatable)")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("dataset", help="render the procedural dataset")
    common(p)

    p = sub.add_parser("train", help="train one pipeline stage")
    common(p)
    p.add_argument("--stage", required=True, choices=STAGES)
    p.add_argument("--resume", action="store_true",
                   help="continue from the existing checkpoint")
    p.add_argument("--stop-step", type=int, default=None,
                   help="halt training early at this step (checkpoint is resumable)")
    p.add_argument("--allow-config-mismatch", action="store_true",
                   help="load checkpoints written under a different config")

    p = sub.add_parser("generate", help="caption -> views -> 3D bundle")
    common(p)
    p.add_argument("--caption", required=True)
    p.add_argument("--views", type=int, default=None,
                   help="number of generated views (default v23d.eval_views)")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--greedy", action="store_true", help="greedy decoding (default)")
    mode.add_argument("--topk", type=int, default=None, help="top-k sampling")

    p = sub.add_parser("eval", help="aggregate metrics on a dataset split")
    common(p)
    p.add_argument("--split", required=True, choices=("val", "test"))
    return parser


def resolve_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    for item in args.set:
        if "=" not in item:
            raise ContractViolation(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set_option(key.strip(), value.strip())
    return cfg


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = resolve_config(args)
    pipe = Pipeline(cfg)
    verbose = not args.quiet

    if args.command == "dataset":
        path = pipe.build_dataset()
        if verbose:
            print(f"dataset written to {path}")
    elif args.command == "train":
        path = pipe.train_stage(args.stage, resume=args.resume,
                                allow_config_mismatch=args.allow_config_mismatch,
                                verbose=verbose, stop_step=args.stop_step)
        if verbose:
            print(f"checkpoint written to {path}")
    elif args.command == "generate":
        mode = "topk" if args.topk is not None else "greedy"
        bundle = pipe.generate(args.caption, n_views=args.views, mode=mode,
                               top_k=args.topk or 8, verbose=verbose)
        if verbose:
            print(f"bundle written to {bundle}")
    elif args.command == "eval":
        summary = pipe.evaluate(args.split, verbose=verbose)
        if verbose:
            print(f"summary written to {summary}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return run(argv)
    except MissingDependencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except CorruptArchiveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except (ContractViolation, ConfigMismatchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
