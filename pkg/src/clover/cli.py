"""Command line entry point.

Subcommands cover the individual pipeline stages (train, fuzz, select,
retrain, eval) plus the full pipeline and the experiment grid. Exit codes:
0 success, 1 usage or configuration error, 2 runtime failure.

Configuration precedence, lowest to highest: built-in defaults, config
file (--config), environment (CLOVER_SEED for the seed), command line
flags.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

from .config import ConfigError, build_config, parse_grid, read_config_file
from .nn import load_model, save_model
from .pipeline import (
    GRID_COLUMNS,
    _ROLE_RETRAIN,
    _accuracy,
    _build_data,
    _build_model,
    _build_pool,
    _build_universe,
    _csv_cell,
    _select_suite,
    retrain,
    role_rng,
    run_experiment_grid,
    run_pipeline,
)
from .cases import pool_records, suite_records
from .metrics import robust_accuracy
from .serialize import stable_json, write_jsonl


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exit code 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise _UsageError(message)


def _add_common(sub):
    sub.add_argument("--config", metavar="PATH", help="configuration file")
    sub.add_argument("--seed", type=int, metavar="N",
                     help="campaign seed (overrides CLOVER_SEED and config)")
    sub.add_argument("--out", metavar="DIR", help="artifact output directory")


def build_parser():
    parser = _Parser(prog="clover", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", metavar="command")

    p = commands.add_parser("train", help="train the model under test")
    _add_common(p)

    p = commands.add_parser("fuzz", help="run a fuzzing campaign and store the pool")
    _add_common(p)
    p.add_argument("--budget-attempts", type=int, metavar="N",
                   help="post-initialization attempt budget")

    p = commands.add_parser("select", help="select a test suite from the pool")
    _add_common(p)
    p.add_argument("--selector", metavar="NAME",
                   help="context | random | gini | be_st | km_st")
    p.add_argument("--n", type=int, metavar="N", help="suite size")

    p = commands.add_parser("retrain", help="select a suite and retrain on it")
    _add_common(p)
    p.add_argument("--selector", metavar="NAME",
                   help="context | random | gini | be_st | km_st")
    p.add_argument("--n", type=int, metavar="N", help="suite size")

    p = commands.add_parser("eval", help="measure robust accuracy on the universe")
    _add_common(p)
    p.add_argument("--model", metavar="PATH",
                   help="saved model to evaluate (default: train one)")

    p = commands.add_parser("pipeline", help="full testing-retraining run")
    _add_common(p)
    p.add_argument("--selector", metavar="NAME",
                   help="context | random | gini | be_st | km_st")
    p.add_argument("--n", type=int, metavar="N", help="suite size")
    p.add_argument("--strategy", metavar="NAME", help="clover | fgsm_pgd_universe")
    p.add_argument("--format", choices=("json", "csv"), default="json",
                   help="report format (default json)")
    p.add_argument("--report", metavar="PATH",
                   help="report destination (default standard output)")

    p = commands.add_parser("grid", help="run a variant grid around one base config")
    _add_common(p)
    p.add_argument("--vary", action="append", default=[], metavar="KNOB=V1,V2",
                   help="add a grid axis (repeatable)")

    return parser


def _flag_overrides(args):
    """Map parsed flags onto dotted config paths."""
    mapping = {
        "budget_attempts": "fuzz.budget_attempts",
        "selector": "selector",
        "n": "n",
        "strategy": "strategy",
        "out": "out_dir",
    }
    overrides = {}
    for attr, path in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[path] = value
    return overrides


def _resolve_seed(args, overrides):
    if args.seed is not None:
        overrides["seed"] = args.seed
        return
    raw = os.environ.get("CLOVER_SEED")
    if raw is not None:
        try:
            overrides["seed"] = int(raw)
        except ValueError:
            raise ConfigError(f"CLOVER_SEED must be an integer, got {raw!r}") from None


def _load_config(args):
    file_values, raw_grid = ({}, {})
    if args.config:
        file_values, raw_grid = read_config_file(args.config)
    overrides = _flag_overrides(args)
    _resolve_seed(args, overrides)
    return build_config(file_values, overrides), raw_grid


def emit_report(report, fmt="json", destination=None):
    """Write one report as bit-stable json or a one-row grid-style csv."""
    if fmt == "json":
        text = stable_json(report.to_dict())
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(GRID_COLUMNS)
        writer.writerow([
            0,
            report.config.get("selector", ""),
            report.config.get("n", ""),
            _csv_cell(report.robust_acc_before),
            _csv_cell(report.robust_acc_after),
            _csv_cell(report.improvement),
            _csv_cell(report.test_acc_before),
            _csv_cell(report.test_acc_after),
            report.adv_labels,
            report.categories,
            _csv_cell(report.mean_cc),
            _csv_cell(report.mean_cc_reduction),
            _csv_cell(report.seconds),
        ])
        text = buf.getvalue()
    else:
        raise ConfigError(f"unknown report format: {fmt!r}")
    if destination in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(destination).write_text(text, encoding="utf-8")


def _out_path(cfg):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_train(cfg):
    train_ds, _val, test_ds = _build_data(cfg)
    model = _build_model(cfg, train_ds)
    acc = _accuracy(model, test_ds)
    if cfg.out_dir:
        out = _out_path(cfg)
        save_model(model, out / "model.json")
        (out / "config.json").write_text(stable_json(cfg.echo()), encoding="utf-8")
    print(f"trained layers={model.layer_dims} test_acc={_csv_cell(acc) or 'n/a'}")
    return 0


def _cmd_fuzz(cfg):
    train_ds, _val, _test = _build_data(cfg)
    model = _build_model(cfg, train_ds)
    pool, events = _build_pool(cfg, model, train_ds)
    attempts = sum(1 for e in events if e.get("event") == "attempt")
    if cfg.out_dir:
        out = _out_path(cfg)
        save_model(model, out / "model.json")
        write_jsonl(out / "pool.jsonl", pool_records(pool))
        write_jsonl(out / "campaign.log.jsonl", events)
        (out / "config.json").write_text(stable_json(cfg.echo()), encoding="utf-8")
    print(f"pool_size={len(pool)} attempts={attempts}")
    return 0


def _cmd_select(cfg):
    train_ds, _val, _test = _build_data(cfg)
    model = _build_model(cfg, train_ds)
    pool, _events = _build_pool(cfg, model, train_ds)
    suite = _select_suite(cfg, pool, model)
    if cfg.out_dir:
        out = _out_path(cfg)
        write_jsonl(out / "suite.jsonl", suite_records(suite))
    print(f"suite_size={len(suite)} selector={cfg.selector} pool_size={len(pool)}")
    return 0


def _cmd_retrain(cfg):
    train_ds, _val, test_ds = _build_data(cfg)
    model = _build_model(cfg, train_ds)
    pool, _events = _build_pool(cfg, model, train_ds)
    suite = _select_suite(cfg, pool, model)
    after = retrain(
        model, suite, train_ds, cfg.retrain.epochs, cfg.retrain.lr,
        role_rng(cfg.seed, _ROLE_RETRAIN), cfg.retrain.batch_size,
    )
    if cfg.out_dir:
        out = _out_path(cfg)
        save_model(model, out / "model_before.json")
        save_model(after, out / "model_after.json")
        write_jsonl(out / "suite.jsonl", suite_records(suite))
    before_acc = _csv_cell(_accuracy(model, test_ds)) or "n/a"
    after_acc = _csv_cell(_accuracy(after, test_ds)) or "n/a"
    print(f"suite_size={len(suite)} test_acc_before={before_acc} test_acc_after={after_acc}")
    return 0


def _cmd_eval(cfg, model_path=None):
    train_ds, _val, test_ds = _build_data(cfg)
    if model_path:
        model = load_model(model_path)
    else:
        model = _build_model(cfg, train_ds)
    universe = _build_universe(cfg, model, test_ds)
    robust = robust_accuracy(model, universe) if len(universe) else None
    print(f"universe_size={len(universe)} robust_acc={_csv_cell(robust) or 'n/a'}")
    return 0


def _cmd_pipeline(cfg, fmt, report_path):
    report = run_pipeline(cfg)
    emit_report(report, fmt, report_path)
    return 0


def _cmd_grid(cfg, raw_grid, vary_items):
    merged = dict(raw_grid)
    for item in vary_items:
        if "=" not in item:
            raise ConfigError(f"--vary expects KNOB=V1,V2 got {item!r}")
        knob, raw = item.split("=", 1)
        merged[knob.strip()] = raw
    variants = parse_grid(merged)
    reports = run_experiment_grid(cfg, variants, cfg.out_dir)
    for vid, report in enumerate(reports):
        print(
            f"variant {vid:02d}: status={report.status}"
            f" improvement={_csv_cell(report.improvement) or 'n/a'}"
        )
    print(f"grid_variants={len(reports)}")
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    except SystemExit as exc:  # --help exits through argparse
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        cfg, raw_grid = _load_config(args)
        if args.command == "train":
            return _cmd_train(cfg)
        if args.command == "fuzz":
            return _cmd_fuzz(cfg)
        if args.command == "select":
            return _cmd_select(cfg)
        if args.command == "retrain":
            return _cmd_retrain(cfg)
        if args.command == "eval":
            return _cmd_eval(cfg, args.model)
        if args.command == "pipeline":
            return _cmd_pipeline(cfg, args.format, args.report)
        if args.command == "grid":
            return _cmd_grid(cfg, raw_grid, args.vary)
        parser.print_usage(sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"clover: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"clover: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
