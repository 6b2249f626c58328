"""Command line interface: single-stage subcommands plus a pipeline runner.

Exit codes: 0 success, 1 stage failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import load_config
from .errors import ConfigError, DepwalkError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depwalk",
        description="Device dependency discovery from unidirectional IP flows.")
    parser.add_argument("-c", "--config", default=None, help="YAML config file")
    parser.add_argument("-w", "--workdir", default=None, help="artifact directory (overrides config)")
    parser.add_argument("-s", "--seed", type=int, default=None,
                        help="master seed; every stage derives its randomness from it")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", help="generate a synthetic flow trace with planted structure")

    p_ingest = sub.add_parser("ingest", help="parse and preprocess a flow file")
    p_ingest.add_argument("--flows", required=True, help="input flow file (CSV or JSON lines)")

    sub.add_parser("sample", help="select top addresses and reservoir-sample the graph")
    sub.add_parser("walks", help="generate constrained random walks plus negatives")
    sub.add_parser("embed", help="train the node embedding from walk contexts")
    sub.add_parser("oracle", help="enumerate ground-truth dependencies from the flows")
    sub.add_parser("train", help="build the label set and train the classifier")

    p_predict = sub.add_parser("predict", help="score address pairs with the trained model")
    p_predict.add_argument("--pairs", default=None,
                           help="CSV of src,dst pairs (defaults to the label set)")

    sub.add_parser("eval", help="repeated train/test evaluation")
    sub.add_parser("simindex", help="baseline similarity indices and correlations")

    p_pipe = sub.add_parser("pipeline", help="run all stages in order")
    p_pipe.add_argument("--flows", default=None, help="input flow file")
    p_pipe.add_argument("--synth", action="store_true",
                        help="generate the synthetic scenario as pipeline input")
    p_pipe.add_argument("--resume", action="store_true",
                        help="skip stages whose artifacts already exist")
    return parser


def _dispatch(cfg, args) -> None:
    command = args.command
    if command == "synth":
        pipeline.stage_synth(cfg)
    elif command == "ingest":
        pipeline.stage_ingest(cfg, args.flows)
    elif command == "sample":
        pipeline.stage_sample(cfg)
    elif command == "walks":
        pipeline.stage_walks(cfg)
    elif command == "embed":
        pipeline.stage_embed(cfg)
    elif command == "oracle":
        pipeline.stage_oracle(cfg)
    elif command == "train":
        pipeline.stage_train(cfg)
    elif command == "predict":
        pipeline.stage_predict(cfg, args.pairs)
    elif command == "eval":
        pipeline.stage_eval(cfg)
    elif command == "simindex":
        pipeline.stage_simindex(cfg)
    elif command == "pipeline":
        pipeline.run_pipeline(cfg, flows_input=args.flows, use_synth=args.synth,
                              resume=args.resume)
    else:  # pragma: no cover - argparse enforces the choices
        raise ConfigError(f"unknown command {command!r}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, master_seed=args.seed, workdir=args.workdir)
    except FileNotFoundError as exc:
        print(f"depwalk: config file not found: {exc.filename}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"depwalk: invalid configuration:\n{exc}", file=sys.stderr)
        return 2
    try:
        _dispatch(cfg, args)
    except FileNotFoundError as exc:
        print(f"depwalk: {exc.strerror or 'file not found'}: {exc.filename}", file=sys.stderr)
        return 2
    except (DepwalkError, ValueError, OSError) as exc:
        print(f"depwalk: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
