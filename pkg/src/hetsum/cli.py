"""Command-line entry point: preprocess, label, train, evaluate, summarize, analyze.

Failures print one line ``hetsum: error[<category>]: <message>`` to stderr and
exit nonzero. The resolved config is echoed to stderr on every run.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, TrainConfig, load_config, parse_text, parse_value, resolve_config_path
from .numeric import CheckpointError
from .pipeline import ArtifactError, Artifacts, fit_preprocessing
from .rouge import greedy_oracle
from .text import DataError, load_examples
from .trainer import Checkpoint, TrainingError, analyze, check_compatible, evaluate, summarize, train

EXIT_CODES = {"usage": 2, "config": 3, "data": 4, "artifact": 5, "training": 6, "io": 7}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise CliError("usage", f"{args.command} needs --{name}")


def _overrides(args) -> list:
    return list(args.set or [])


def resolve_config(args) -> TrainConfig:
    return load_config(args.config, _overrides(args))


def config_with_checkpoint(args, ckpt: Checkpoint) -> TrainConfig:
    """Checkpoint config shadowed by --config file values and --set overrides."""
    values = ckpt.config.to_dict()
    if args.config is not None:
        path = resolve_config_path(args.config)
        values.update(parse_text(path.read_text(encoding="utf-8"), str(path)))
    for item in _overrides(args):
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, raw = item.split("=", 1)
        values[key.strip()] = parse_value(key.strip(), raw)
    return TrainConfig.from_dict(values)


def echo_config(config: TrainConfig) -> None:
    sys.stderr.write("# resolved config\n" + config.dump())


def _write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _emit(obj, output) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if output:
        Path(output).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _load_checkpoint(args) -> Checkpoint:
    _require(args, "checkpoint")
    return Checkpoint.load(args.checkpoint)


# -- subcommands -----------------------------------------------------------------

def cmd_preprocess(args) -> None:
    _require(args, "input", "output")
    config = resolve_config(args)
    echo_config(config)
    _, examples = load_examples(args.input)
    fit_preprocessing(examples, config).save(args.output)


def cmd_label(args) -> None:
    _require(args, "input", "output")
    config = resolve_config(args)
    echo_config(config)
    records, examples = load_examples(args.input)
    for rec, ex in zip(records, examples):
        rec["label"] = greedy_oracle(ex, config.oracle_max_select)
    _write_jsonl(args.output, records)


def cmd_train(args) -> None:
    _require(args, "input", "output")
    config = resolve_config(args)
    echo_config(config)
    _, train_set = load_examples(args.input)
    valid_set = load_examples(args.valid)[1] if args.valid else None
    artifacts = Artifacts.load(args.artifacts) if args.artifacts else None
    ckpt = train(config, train_set, valid_set, artifacts=artifacts)
    ckpt.save(args.output)


def cmd_evaluate(args) -> None:
    ckpt = _load_checkpoint(args)
    _require(args, "input")
    config = config_with_checkpoint(args, ckpt)
    echo_config(config)
    _apply_decoding(ckpt, config)
    _, test_set = load_examples(args.input)
    report = evaluate(ckpt, test_set, config.metric, config=config)
    _emit(report, args.output)


def _apply_decoding(ckpt: Checkpoint, config: TrainConfig) -> Checkpoint:
    check_compatible(config, ckpt)
    ckpt.config = config
    ckpt.model.config = config
    return ckpt


def cmd_summarize(args) -> None:
    ckpt = _load_checkpoint(args)
    _require(args, "input", "output")
    config = config_with_checkpoint(args, ckpt)
    echo_config(config)
    _apply_decoding(ckpt, config)
    _, examples = load_examples(args.input)
    rows = []
    for ex, sel in zip(examples, summarize(ckpt, examples)):
        rows.append({"selected": sel, "summary": [" ".join(ex.sentences[j]) for j in sel]})
    _write_jsonl(args.output, rows)


def cmd_analyze(args) -> None:
    ckpt = _load_checkpoint(args)
    _require(args, "input", "analysis")
    config = config_with_checkpoint(args, ckpt)
    echo_config(config)
    _apply_decoding(ckpt, config)
    _, test_set = load_examples(args.input)
    train_set = load_examples(args.train)[1] if args.train else None
    if args.analysis == "source_doc_count" and not any(ex.is_multi_doc for ex in test_set):
        logging.getLogger("hetsum").info("single-document input: every example falls in bucket 1")
    table = analyze(ckpt, test_set, args.analysis, train_set=train_set)
    _emit({"analysis": args.analysis, "rows": table}, args.output)


COMMANDS = {"preprocess": cmd_preprocess, "label": cmd_label, "train": cmd_train,
            "evaluate": cmd_evaluate, "summarize": cmd_summarize, "analyze": cmd_analyze}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetsum", description="Heterogeneous-graph extractive summarizer.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="config file or shipped profile name (desk, cnndm, nyt50, multinews)")
        p.add_argument("--input", help="input JSONL")
        p.add_argument("--output", help="output path")
        p.add_argument("--checkpoint", help="checkpoint file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        if name == "train":
            p.add_argument("--valid", help="validation JSONL (enables early stopping)")
            p.add_argument("--artifacts", help="preprocess output to reuse instead of refitting")
        if name == "analyze":
            p.add_argument("--analysis", choices=["word_degree_buckets", "source_doc_count", "iteration_sweep"])
            p.add_argument("--train", help="training JSONL for iteration_sweep (defaults to --input)")
    return parser


def _category(exc: Exception) -> str:
    if isinstance(exc, CliError):
        return exc.category
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, DataError):
        return "data"
    if isinstance(exc, (ArtifactError, CheckpointError)):
        return "artifact"
    if isinstance(exc, TrainingError):
        return "training"
    if isinstance(exc, OSError):
        return "io"
    return "data"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except (CliError, ConfigError, DataError, ArtifactError, CheckpointError, TrainingError, OSError,
            ValueError) as exc:
        category = _category(exc)
        message = " ".join(str(exc).split())
        sys.stderr.write(f"hetsum: error[{category}]: {message}\n")
        return EXIT_CODES.get(category, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
