"""Command line entry point: ``cvrd generate|train|sweep|compare``.

Exit codes: 0 success, 2 configuration/usage error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .errors import (
    ConfigError,
    DegenerateInputError,
    DomainError,
    MetricError,
    NumericError,
    ShapeError,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
log = logging.getLogger("cvrd")


def build_parser():
    parser = argparse.ArgumentParser(prog="cvrd", description="Radar RD-map denoising experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("generate", "simulate the train/eval dataset"),
        ("train", "train one model and write a checkpoint"),
        ("sweep", "architecture or training-data sweep"),
        ("compare", "compare classical methods and trained networks"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, required=True, help="experiment seed")
        p.add_argument("--out", default=None, help="output directory (overrides the config)")
        if name == "sweep":
            p.add_argument("--axis", choices=harness.AXES, default="params")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _run(args):
    cfg = harness.ExperimentConfig.from_json(args.config).with_out(args.out)
    if args.seed < 0:
        raise ConfigError("--seed must be non-negative")

    def epoch_log(epoch, loss):
        log.info("epoch %d loss %.6g", epoch, loss)

    def row_log(row):
        log.info("%s", row)

    if args.command == "generate":
        manifest = harness.cmd_generate(cfg, args.seed)
        log.info("wrote %d train / %d eval pairs to %s", manifest["splits"]["train"]["count"],
                 manifest["splits"]["eval"]["count"], cfg.dataset_path)
    elif args.command == "train":
        ckpt, res = harness.cmd_train(cfg, args.seed, log=epoch_log)
        log.info("checkpoint %s (final loss %.6g)", ckpt, res.losses[-1] if res.losses else float("nan"))
    elif args.command == "sweep":
        res = harness.cmd_sweep(cfg, args.seed, args.axis, log=row_log)
        log.info("%d sweep rows written", len(res.rows))
    else:
        res = harness.cmd_compare_classical(cfg, args.seed, log=row_log)
        log.info("%d methods compared", len(res.rows))


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        _run(args)
    except NumericError as exc:
        print(f"cvrd: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DegenerateInputError as exc:
        print(f"cvrd: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, DomainError, ShapeError, MetricError, OSError) as exc:
        print(f"cvrd: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
