"""Command-line entry point: ``chessmae {gen,train,infer,eval,ablate}``.

Every subcommand takes ``--config FILE`` (key=value lines) and any number
of ``--set key=value`` overrides. Exit codes: 0 success, 2 configuration
error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import pipeline
from .config import RunConfig
from .errors import ConfigError, DataError, NumericError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

logger = logging.getLogger("chessmae")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config value (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="chessmae", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="write a phantom dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, help="total sample count, split 70/15/15")
    p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")

    p = sub.add_parser("train", parents=[common], help="train on the normal training split")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="checkpoint to continue from; appends to OUT/loss.csv")

    p = sub.add_parser("infer", parents=[common], help="error maps and scores for a split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")

    p = sub.add_parser("eval", parents=[common], help="pixel/image AUC from an inference run")
    p.add_argument("--run", required=True, help="directory written by infer")
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="metrics CSV (default RUN/metrics.csv)")
    p.add_argument("--split", default="test")
    p.add_argument("--roc", action="store_true", help="also write ROC points CSVs into RUN")

    p = sub.add_parser("ablate", parents=[common], help="mask on/off and stride ablations")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--data", help="dataset to use (default: generate from config in memory)")
    p.add_argument("--variants", default=",".join(v.name for v in pipeline.DEFAULT_VARIANTS))
    return parser


def _run(args) -> None:
    config = RunConfig.from_file(args.config, args.overrides)
    if args.command == "gen":
        pipeline.generate_dataset(args.out, config, count=args.count, force=args.force)
    elif args.command == "train":
        pipeline.train_from_dataset(args.data, args.out, config, resume=args.resume)
    elif args.command == "infer":
        pipeline.infer(args.data, args.checkpoint, args.out, config, split=args.split)
        print((Path(args.out) / pipeline.TIMING).read_text(), end="")
    elif args.command == "eval":
        rows = pipeline.evaluate(args.run, args.data, config, out_path=args.out, split=args.split,
                                 roc_dir=args.run if args.roc else None)
        for m in rows:
            print(f"{m.setting:4s} pixel_auc={m.pixel_auc:.4f} image_auc={m.image_auc:.4f}")
    elif args.command == "ablate":
        variants = pipeline.parse_variants(args.variants)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        samples = None
        if args.data:
            from .dataset import read_dataset
            samples = read_dataset(args.data)
        rows = pipeline.ablation_run(config, variants, samples=samples, out_path=out / "ablation.csv")
        config.write(out / pipeline.CONFIG_ECHO)
        for r in rows:
            print(f"{r.variant:14s} pixel full/roi {r.pixel_full:.4f}/{r.pixel_roi:.4f} "
                  f"image full/roi {r.image_full:.4f}/{r.image_roi:.4f}")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
