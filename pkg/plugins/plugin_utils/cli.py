#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

import argparse
import sys
from typing import Dict, List, Optional

from ansible.errors import AnsibleError
from ansible.utils.display import Display

from ansible_collections.zpe.textcnn.plugins.plugin_utils.commands import (
    CONFIG_DEFAULTS,
    EMBEDDING_FORMATS,
    GRADCHECK_MODES,
    SPLIT_STRATEGIES,
    ExperimentConfig,
    format_result,
    parse_embedding_spec,
    run_command,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.datasets import TOKENIZER_MODES
from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import (
    ConfigValidationError,
    UsageError,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.metrics import METRICS
from ansible_collections.zpe.textcnn.plugins.plugin_utils.model import (
    ACTIVATIONS,
    VARIANTS,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.synthetic import SYNTHETIC_TASKS
from ansible_collections.zpe.textcnn.plugins.plugin_utils.training import CONSTRAINT_TARGETS

display = Display()

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class ArgumentParser(argparse.ArgumentParser):
    """Parser whose errors surface as configuration errors instead of exiting."""

    def error(self, message):
        raise ConfigValidationError(f"{self.prog}: {message}")


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")


def _lambda_list(text: str) -> List[str]:
    """Values stay strings so that 1/3 is kept exact."""
    return [v.strip() for v in text.split(",") if v.strip()]


def _sizes(text: str) -> Dict[str, int]:
    values = _int_list(text)
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"expected train,dev,test sizes, got {text!r}")
    return dict(zip(("train", "dev", "test"), values))


def _embedding(text: str) -> Dict:
    try:
        return parse_embedding_spec(text)
    except ConfigValidationError as err:
        raise argparse.ArgumentTypeError(str(err))


def _common_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(add_help=False)
    parser.add_argument("--config", help="JSON experiment configuration. Flags override its values.")
    parser.add_argument("--out", dest="output_dir", help="Output directory (env TEXTCNN_OUTPUT_DIR).")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--parallel", type=int, help="Concurrent trials (env TEXTCNN_PARALLEL).")
    parser.add_argument("--precision", choices=("64", "32"))
    parser.add_argument("--activation", choices=ACTIVATIONS)
    parser.add_argument("-v", "--verbose", action="count", default=0, dest="verbosity")
    return parser


def _experiment_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(add_help=False)
    data = parser.add_argument_group("data")
    data.add_argument("--data", help="Single TSV corpus, split with --split.")
    data.add_argument("--train", help="Training TSV.")
    data.add_argument("--dev", help="Development TSV.")
    data.add_argument("--test", help="Test TSV.")
    data.add_argument("--name", help="Dataset name used in reports.")
    data.add_argument("--tokenizer", choices=TOKENIZER_MODES)
    data.add_argument("--min-length", type=int, dest="min_length")
    data.add_argument("--undersample", action="store_true", default=None)
    data.add_argument("--split", choices=SPLIT_STRATEGIES)
    data.add_argument("--split-fractions", type=_float_list, dest="split_fractions")
    data.add_argument("--folds", type=int)
    data.add_argument("--dev-fraction", type=float, dest="dev_fraction")

    model = parser.add_argument_group("model")
    model.add_argument(
        "--embedding",
        action="append",
        type=_embedding,
        dest="embeddings",
        help=f"name=path:format[:frozen] with format in {EMBEDDING_FORMATS}, or name=random:dim[:frozen].",
    )
    model.add_argument("--variant", choices=VARIANTS)
    model.add_argument("--allow-single-group", action="store_true", default=None, dest="allow_single_group")
    model.add_argument("--heights", type=_int_list)
    model.add_argument("--maps", type=int)

    training = parser.add_argument_group("training")
    training.add_argument("--batch-size", type=int, dest="batch_size")
    training.add_argument("--epochs", type=int)
    training.add_argument("--patience", type=int)
    training.add_argument("--dropout", type=float)
    training.add_argument("--metric", choices=METRICS)
    training.add_argument("--constraint-target", choices=CONSTRAINT_TARGETS, dest="constraint_target")
    training.add_argument("--lambda", type=_lambda_list, dest="lambdas", help="Bound, or one bound per group: 1/3,9.")
    training.add_argument("--lambda-grid", type=_lambda_list, dest="lambda_grid")
    training.add_argument("--repetitions", type=int)
    training.add_argument("--dev-repeats", type=int, dest="dev_repeats")
    training.add_argument("--checkpoint")
    training.add_argument("--on", choices=("dev", "test"), dest="evaluate_split")
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(prog="textcnn", description="Multi-group embedding sentence classification.")
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True

    common = _common_parser()
    experiment = _experiment_parser()

    subparsers.add_parser("train", parents=[common, experiment], help="Train once and write a checkpoint.")
    subparsers.add_parser("evaluate", parents=[common, experiment], help="Score a checkpoint.")
    subparsers.add_parser("gridsearch", parents=[common, experiment], help="Tune max-norm bounds on dev.")
    subparsers.add_parser("cv", parents=[common, experiment], help="Cross validation or tune-then-repeat.")

    gradcheck = subparsers.add_parser("gradcheck", parents=[common], help="Check gradients on a tiny model.")
    gradcheck.add_argument("--mode", choices=GRADCHECK_MODES, dest="gradcheck_mode")

    synth = subparsers.add_parser("synth", parents=[common], help="Write a synthetic corpus and embeddings.")
    synth.add_argument("--task", choices=SYNTHETIC_TASKS, dest="synth_task")
    synth.add_argument("--sizes", type=_sizes, dest="synth_sizes", help="train,dev,test")
    synth.add_argument("--dims", type=_int_list, dest="synth_dims", help="One dimension per group.")

    report = subparsers.add_parser("report", parents=[common], help="Render result tables as markdown.")
    report.add_argument("report_inputs", nargs="+", help="Result directories.")

    return parser


def _overrides(args: argparse.Namespace) -> Dict:
    overrides = {}
    for key in CONFIG_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    """Exit status: 0 success, 1 invalid usage or configuration, 2 runtime failure."""
    try:
        args = build_parser().parse_args(argv)
        display.verbosity = args.verbosity

        overrides = _overrides(args)
        if args.config:
            cfg = ExperimentConfig.from_file(args.config, overrides)
        else:
            cfg = ExperimentConfig.from_sources(None, overrides)

        result = run_command(args.command, cfg)
    except (ConfigValidationError, UsageError) as err:
        display.error(f"TextCNN - {err}", wrap_text=False)
        return EXIT_VALIDATION
    except (AnsibleError, OSError, ValueError, MemoryError) as err:
        display.error(f"TextCNN - {err}", wrap_text=False)
        return EXIT_RUNTIME

    display.display(format_result(result))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
