"""Command-line entry point: ``varietymt <subcommand> [options]``.

Exit codes: 0 success, 1 usage/configuration error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import RunConfig, load_config
from .errors import ConfigurationError, VarietyMTError
from .recipes import Recipe

log = logging.getLogger("varietymt")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; our contract says 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI run configuration")
    p.add_argument("--seed", type=int, help="override [run] seed")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--workspace", type=Path, default=Path("."),
                   help="base directory for relative data paths")
    p.add_argument("--out-dir", type=Path, default=Path("runs/default"))
    p.add_argument("--scenario", help="override [run] scenario (supervised|unsupervised|semi)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="varietymt", description="Variety-targeted NMT experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="load, clean and partition parallel files")
    _common(p)

    p = sub.add_parser("synth", help="generate a synthetic two-variety dataset")
    _common(p)

    p = sub.add_parser("train-classifier", help="train the five-member variety ensemble")
    _common(p)
    p.add_argument("--data", type=Path, help="dataset directory (default: OUT/data)")

    p = sub.add_parser("label", help="label the unlabeled pool with the ensemble")
    _common(p)
    p.add_argument("--data", type=Path)
    p.add_argument("--classifier", type=Path)
    p.add_argument("--mode", default="soft", choices=["soft", "majority", "mc2", "mc3"])

    p = sub.add_parser("build-dataset", help="assemble the training set of one recipe")
    _common(p)
    p.add_argument("--data", type=Path)
    p.add_argument("--recipe", help="override [run] recipe")
    p.add_argument("--classifier", type=Path)
    p.add_argument("--labels", type=Path, help="precomputed labels from the label stage")

    p = sub.add_parser("train-nmt", help="train a translation model and select a checkpoint")
    _common(p)
    p.add_argument("--data", type=Path)
    p.add_argument("--trainset", type=Path, required=True)
    p.add_argument("--init", type=Path, help="checkpoint to continue training from")
    p.add_argument("--steps", type=int, help="override [training] total_steps")
    p.add_argument("--name", help="output subdirectory under OUT/nmt")

    p = sub.add_parser("translate", help="translate a tokenized file")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--subword", type=Path)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--variety", help="force this variety token (A or B)")

    p = sub.add_parser("evaluate", help="BLEU and variety consistency on the test sets")
    _common(p)
    p.add_argument("--data", type=Path)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--recipe", help="override [run] recipe")
    p.add_argument("--classifier", type=Path)
    p.add_argument("--name")

    p = sub.add_parser("significance", help="paired bootstrap test of two systems")
    _common(p)
    p.add_argument("--system-a", type=Path, required=True)
    p.add_argument("--system-b", type=Path, required=True)
    p.add_argument("--refs", type=Path, required=True)
    p.add_argument("--output", type=Path)

    p = sub.add_parser("pipeline", help="run data -> classifier -> dataset -> nmt -> evaluate")
    _common(p)
    p.add_argument("--recipe", help="override [run] recipe")
    return parser


def _config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config.run.seed = args.seed
    if getattr(args, "recipe", None):
        config.run.recipe = args.recipe
    if args.scenario:
        config.run.scenario = args.scenario
    return config


def _anchor(args) -> None:
    # every path flag is taken relative to the workspace root
    ws = args.workspace
    for key, value in vars(args).items():
        if key != "workspace" and isinstance(value, Path) and not value.is_absolute():
            setattr(args, key, ws / value)


def run(args) -> None:
    config = _config(args)
    out, ws = args.out_dir, args.workspace
    data = getattr(args, "data", None) or out / "data"
    pipeline.set_threads(args.threads)
    cmd = args.command
    if cmd == "prepare":
        print(pipeline.stage_prepare(config, ws, out))
    elif cmd == "synth":
        print(pipeline.stage_synth(config, out))
    elif cmd == "train-classifier":
        print(pipeline.stage_train_classifier(config, ws, out, data, args.threads))
    elif cmd == "label":
        clf = args.classifier or out / "classifier" / "ensemble.bin"
        print(pipeline.stage_label(config, out, data, clf, args.mode, args.threads))
    elif cmd == "build-dataset":
        print(pipeline.stage_build_dataset(config, out, data, Recipe.parse(config.run.recipe),
                                           args.classifier, args.labels, args.threads))
    elif cmd == "train-nmt":
        print(pipeline.stage_train_nmt(config, out, data, args.trainset, args.init, args.steps, args.name))
    elif cmd == "translate":
        sw = args.subword or out / "subword" / "bpe.model"
        print(pipeline.stage_translate(config, args.model, sw, args.input, args.output, args.variety))
    elif cmd == "evaluate":
        print(pipeline.stage_evaluate(config, out, data, args.model, Recipe.parse(config.run.recipe),
                                      args.classifier, args.name))
    elif cmd == "significance":
        values = pipeline.stage_significance(config, args.system_a, args.system_b, args.refs,
                                             config.run.seed, args.output, args.threads)
        for k, v in values.items():
            print(f"{k}={v}")
    elif cmd == "pipeline":
        print(pipeline.stage_pipeline(config, ws, out, args.threads))
    else:  # pragma: no cover - argparse guards this
        raise ConfigurationError(f"unknown command {cmd}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("varietymt: error: --threads must be >= 1", file=sys.stderr)
        return 1
    _anchor(args)
    try:
        run(args)
    except VarietyMTError as exc:
        print(f"varietymt {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"varietymt {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
