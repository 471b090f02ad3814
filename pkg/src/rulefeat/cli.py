"""Command-line interface.

Subcommands: train, eval, extract, rules-stats, cv, gaindrop. Output is
deterministic for fixed inputs and seed: reports carry no timestamps,
floats print with six decimals, and files are written atomically with a
.manifest sidecar recording the resolved configuration and the SHA-256
of every input.

Exit codes: 0 success, 1 runtime failure (bad data, corrupt model), 2
usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import DATASET_FORMATS, Dataset, load_dataset
from .errors import RulefeatError
from .evalkit import (
    CVReport,
    cross_validate,
    evaluate,
    gain_drop,
    rule_stats,
    subset_eval,
    subset_mask,
)
from .pipeline import TrainConfig, load_model, predict, save_model, train
from .rules import EMPTY_RULESET, RuleSet, compile_ruleset, load_rules


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(
    out_path: Path,
    subcommand: str,
    inputs: dict[str, Path],
    seed: int | None,
    config: TrainConfig | None,
) -> None:
    manifest = {
        "subcommand": subcommand,
        "tool_version": __version__,
        "seed": seed,
        "config": None if config is None else dataclasses.asdict(config),
        "inputs": {
            role: {"path": str(p), "sha256": _sha256(p)} for role, p in sorted(inputs.items())
        },
    }
    blob = json.dumps(manifest, sort_keys=True, indent=2).encode("utf-8") + b"\n"
    _write_atomic(out_path.with_name(out_path.name + ".manifest"), blob)


def _write_json_report(path: Path, payload: dict) -> None:
    _write_atomic(path, json.dumps(payload, sort_keys=True, indent=2).encode("utf-8") + b"\n")


def _load_rules_arg(path: str | None) -> RuleSet:
    return load_rules(path) if path else EMPTY_RULESET


def _parse_widths(text: str) -> tuple[int, ...]:
    try:
        widths = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"filter widths must be comma-separated integers: {text!r}")
    if not widths or any(w < 1 for w in widths):
        raise argparse.ArgumentTypeError(f"filter widths must be positive: {text!r}")
    return widths


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training configuration")
    group.add_argument("--epochs", type=int, default=None)
    group.add_argument("--batch-size", type=int, default=None)
    group.add_argument("--embed-dim", type=int, default=None)
    group.add_argument("--filter-widths", type=_parse_widths, default=None, metavar="W,W,...")
    group.add_argument("--feature-maps", type=int, default=None)
    group.add_argument("--dropout", type=float, default=None)
    group.add_argument("--patience", type=int, default=None)
    group.add_argument("--min-freq", type=int, default=None)
    group.add_argument("--dev-fraction", type=float, default=None)
    group.add_argument("--embeddings", default=None, metavar="PATH",
                       help="text-format word vectors; overrides --embed-dim")
    group.add_argument("--no-infer-rules", action="store_true",
                       help="skip rule application at prediction time")
    group.add_argument("--seed", type=int, default=None)


def _config_from_args(args: argparse.Namespace) -> TrainConfig:
    base = TrainConfig()
    overrides: dict = {}
    mapping = {
        "epochs": "epochs",
        "batch_size": "batch_size",
        "embed_dim": "embed_dim",
        "filter_widths": "filter_widths",
        "feature_maps": "feature_maps",
        "dropout": "dropout",
        "patience": "patience",
        "min_freq": "min_freq",
        "dev_fraction": "dev_fraction",
        "seed": "seed",
    }
    for arg_name, field in mapping.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            overrides[field] = value
    if getattr(args, "embeddings", None):
        overrides["embeddings_path"] = args.embeddings
    if getattr(args, "no_infer_rules", False):
        overrides["apply_rules_at_inference"] = False
    return dataclasses.replace(base, **overrides)


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def _metrics_lines(m) -> list[str]:
    lines = [
        f"accuracy {_fmt(m.accuracy)}",
        f"precision {_fmt(m.precision)}",
        f"recall {_fmt(m.recall)}",
        f"f1 {_fmt(m.f1)}",
    ]
    if m.zero_denominator:
        lines.append("warning: a metric denominator was zero; affected values reported as 0")
    return lines


# -- subcommands -----------------------------------------------------------

def _cmd_train(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    train_set = load_dataset(args.train, fmt=args.format)
    dev_set = load_dataset(args.dev, fmt=args.format) if args.dev else None
    ruleset = _load_rules_arg(args.rules)
    model = train(config, train_set, dev_set=dev_set, ruleset=ruleset)
    out = Path(args.out)
    save_model(model, out)
    inputs = {"train": Path(args.train)}
    if args.dev:
        inputs["dev"] = Path(args.dev)
    if args.rules:
        inputs["rules"] = Path(args.rules)
    if model.config.embeddings_path:
        inputs["embeddings"] = Path(model.config.embeddings_path)
    _write_manifest(out, "train", inputs, model.config.seed, model.config)
    print(f"trained {len(model.log)} epochs on {train_set.size} instances")
    if model.best_epoch is not None:
        print(f"best dev accuracy {_fmt(model.log[model.best_epoch].dev_accuracy)} at epoch {model.best_epoch}")
    print(f"final train loss {_fmt(model.log[-1].train_loss)}")
    print(f"saved model to {out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    data = load_dataset(args.data, fmt=args.format)
    predicted, _ = predict(model, data)
    gold = np.array([inst.label for inst in data])
    whole = evaluate(gold, predicted)
    lines = [f"instances {data.size}"]
    lines += _metrics_lines(whole)
    report: dict = {
        "instances": data.size,
        "metrics": dataclasses.asdict(whole),
    }
    if args.subset:
        mask = subset_mask(data, model.ruleset)
        sub = subset_eval(gold, predicted, mask)
        lines.append(f"subset_size {int(mask.sum())}")
        lines += [f"subset_{line}" for line in _metrics_lines(sub)]
        report["subset"] = {"size": int(mask.sum()), "metrics": dataclasses.asdict(sub)}
    for line in lines:
        print(line)
    if args.report:
        out = Path(args.report)
        _write_json_report(out, report)
        _write_manifest(
            out, "eval", {"model": Path(args.model), "data": Path(args.data)},
            model.config.seed, model.config,
        )
    return 0


def _cmd_extract(args: argparse.Namespace) -> int:
    data = load_dataset(args.data, fmt=args.format)
    ruleset = _load_rules_arg(args.rules)
    chain = compile_ruleset(ruleset)
    lines = []
    for inst in chain.apply_batch(data):
        lines.append(f"{inst.label}\t{inst.text}\t{','.join(inst.fired_rules)}")
    body = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        _write_atomic(out, body.encode("utf-8"))
        inputs = {"data": Path(args.data)}
        if args.rules:
            inputs["rules"] = Path(args.rules)
        _write_manifest(out, "extract", inputs, None, None)
        print(f"wrote {len(lines)} instances to {out}")
    else:
        sys.stdout.write(body)
    return 0


def _cmd_rules_stats(args: argparse.Namespace) -> int:
    data = load_dataset(args.data, fmt=args.format)
    ruleset = load_rules(args.rules)
    for stat in rule_stats(data, ruleset):
        print(f"{stat.name} {stat.matched}/{stat.total}")
    return 0


def _cv_report_dict(report: CVReport) -> dict:
    return {
        "k": report.k,
        "seed": report.seed,
        "folds": [dataclasses.asdict(f) for f in report.folds],
        "accuracy": dataclasses.asdict(report.accuracy),
        "subset_accuracy": None
        if report.subset_accuracy is None
        else dataclasses.asdict(report.subset_accuracy),
    }


def _print_cv(report: CVReport) -> None:
    for f in report.folds:
        subset = (
            f"subset {f.subset_size}/{f.test_size} {_fmt(f.subset_accuracy)}"
            if f.subset_accuracy is not None
            else f"subset {f.subset_size}/{f.test_size} -"
        )
        print(f"fold {f.fold} accuracy {_fmt(f.accuracy)} {subset}")
    acc = report.accuracy
    print(f"accuracy mean {_fmt(acc.mean)} ci95 {_fmt(acc.half_width)} n {acc.n}")
    if report.subset_accuracy is not None:
        sub = report.subset_accuracy
        print(f"subset mean {_fmt(sub.mean)} ci95 {_fmt(sub.half_width)} n {sub.n}")
    else:
        print("subset -")


def _cmd_cv(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    data = load_dataset(args.data, fmt=args.format)
    ruleset = _load_rules_arg(args.rules)
    subset_rules = load_rules(args.subset) if args.subset else None
    report = cross_validate(config, data, ruleset, args.k, subset_ruleset=subset_rules)
    _print_cv(report)
    if args.report:
        out = Path(args.report)
        _write_json_report(out, _cv_report_dict(report))
        inputs = {"data": Path(args.data)}
        if args.rules:
            inputs["rules"] = Path(args.rules)
        if args.subset:
            inputs["subset"] = Path(args.subset)
        _write_manifest(out, "cv", inputs, config.seed, config)
    return 0


def _cmd_gaindrop(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    data = load_dataset(args.data, fmt=args.format)
    ruleset = load_rules(args.rules)
    report = gain_drop(config, data, ruleset, args.k)
    print(f"rules {','.join(report.rule_names)}")
    print(f"whole with {_fmt(report.with_rules.accuracy.mean)} "
          f"without {_fmt(report.without_rules.accuracy.mean)} "
          f"delta {_fmt(report.whole_delta)}")
    if report.subset_delta is not None:
        print(f"subset with {_fmt(report.with_rules.subset_accuracy.mean)} "
              f"without {_fmt(report.without_rules.subset_accuracy.mean)} "
              f"delta {_fmt(report.subset_delta)}")
    else:
        print("subset -")
    for f, delta in enumerate(report.fold_whole_deltas):
        sub = report.fold_subset_deltas[f]
        sub_text = _fmt(sub) if sub is not None else "-"
        print(f"fold {f} whole_delta {_fmt(delta)} subset_delta {sub_text}")
    if args.report:
        out = Path(args.report)
        payload = {
            "rule_names": list(report.rule_names),
            "with_rules": _cv_report_dict(report.with_rules),
            "without_rules": _cv_report_dict(report.without_rules),
            "whole_delta": report.whole_delta,
            "subset_delta": report.subset_delta,
            "fold_whole_deltas": list(report.fold_whole_deltas),
            "fold_subset_deltas": list(report.fold_subset_deltas),
        }
        _write_json_report(out, payload)
        _write_manifest(
            out, "gaindrop", {"data": Path(args.data), "rules": Path(args.rules)},
            config.seed, config,
        )
    return 0


# -- parser wiring ---------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rulefeat",
        description="Compile text rules into feature extractors and train a small CNN classifier",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_format(p: argparse.ArgumentParser) -> None:
        p.add_argument("--format", choices=DATASET_FORMATS, default="label-tab-text",
                       help="dataset file layout (default: %(default)s)")

    p_train = sub.add_parser("train", help="train a model and save a checkpoint")
    p_train.add_argument("--train", required=True, metavar="PATH")
    p_train.add_argument("--dev", default=None, metavar="PATH")
    p_train.add_argument("--rules", default=None, metavar="PATH")
    p_train.add_argument("--out", required=True, metavar="PATH")
    add_format(p_train)
    _add_config_flags(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="score a saved model on a dataset")
    p_eval.add_argument("--model", required=True, metavar="PATH")
    p_eval.add_argument("--data", required=True, metavar="PATH")
    p_eval.add_argument("--subset", action="store_true",
                        help="also score the instances matched by the model's rules")
    p_eval.add_argument("--report", default=None, metavar="PATH", help="write a JSON report")
    add_format(p_eval)
    p_eval.set_defaults(func=_cmd_eval)

    p_extract = sub.add_parser("extract", help="apply rules to a dataset and emit the result")
    p_extract.add_argument("--data", required=True, metavar="PATH")
    p_extract.add_argument("--rules", default=None, metavar="PATH")
    p_extract.add_argument("--out", default=None, metavar="PATH",
                           help="output file (default: stdout); lines are label<TAB>text<TAB>fired-rules")
    add_format(p_extract)
    p_extract.set_defaults(func=_cmd_extract)

    p_stats = sub.add_parser("rules-stats", help="per-rule match counts over a dataset")
    p_stats.add_argument("--data", required=True, metavar="PATH")
    p_stats.add_argument("--rules", required=True, metavar="PATH")
    add_format(p_stats)
    p_stats.set_defaults(func=_cmd_rules_stats)

    p_cv = sub.add_parser("cv", help="k-fold cross-validation with a 95%% confidence interval")
    p_cv.add_argument("--data", required=True, metavar="PATH")
    p_cv.add_argument("--rules", default=None, metavar="PATH")
    p_cv.add_argument("--k", type=int, default=10)
    p_cv.add_argument("--subset", default=None, metavar="PATH",
                      help="ruleset defining subset membership (default: the training rules)")
    p_cv.add_argument("--report", default=None, metavar="PATH")
    add_format(p_cv)
    _add_config_flags(p_cv)
    p_cv.set_defaults(func=_cmd_cv)

    p_gd = sub.add_parser("gaindrop", help="paired same-seed comparison with and without rules")
    p_gd.add_argument("--data", required=True, metavar="PATH")
    p_gd.add_argument("--rules", required=True, metavar="PATH")
    p_gd.add_argument("--k", type=int, default=10)
    p_gd.add_argument("--report", default=None, metavar="PATH")
    add_format(p_gd)
    _add_config_flags(p_gd)
    p_gd.set_defaults(func=_cmd_gaindrop)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors itself
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except RulefeatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())
