"""End-to-end orchestration: data, training, pools, selection, retraining,
evaluation, and the controlled experiment grid.

Every stage draws its randomness from a stream derived from the pipeline
seed and a fixed role tag, so two configurations that agree on a stage's
inputs produce bit-identical stage outputs. The grid exploits that to share
datasets, models, universes, and pools across variants that only differ in
later knobs.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .attack import AttackConfig, build_universe
from .cases import TestSuite, make_seeds, pool_records, suite_records
from .data import Dataset, SyntheticSpec, generate_synthetic, load_csv, split
from .fuzzer import FuzzConfig, context_fuzz
from .metrics import CCParams, mean_cc_reduction, robust_accuracy, suite_stats
from .nn import MLP, save_model, train
from .select import (
    DEFAULT_CC_RANGES,
    be_st,
    context_select,
    gini_order_select,
    km_st,
    partition_by_cc,
    random_select,
)
from .serialize import round_sig, stable_json, write_jsonl

REPORT_VERSION = 1

GRID_COLUMNS = [
    "variant_id",
    "selector",
    "n",
    "robust_acc_before",
    "robust_acc_after",
    "improvement",
    "test_acc_before",
    "test_acc_after",
    "adv_labels",
    "categories",
    "mean_cc",
    "mean_cc_reduction",
    "seconds",
]

# Fixed role tags for per-stage PRNG derivation.
_ROLE_DATA = 1
_ROLE_SPLIT = 2
_ROLE_INIT = 3
_ROLE_TRAIN = 4
_ROLE_UNIVERSE = 5
_ROLE_FUZZ = 6
_ROLE_SELECT = 7
_ROLE_RETRAIN = 8
_ROLE_CC = 9


def role_rng(seed, role):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(role,)))


def derive_seed(seed, role):
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(role,)).generate_state(1)[0])


@dataclass
class DataConfig:
    source: str = "blobs"  # blobs | rings | csv
    csv_path: str | None = None
    normalization: str = "none"
    num_classes: int = 3
    dimension: int = 8
    samples_per_class: int = 300
    spread: float = 0.08
    split_fractions: tuple = (0.7, 0.1, 0.2)


@dataclass
class TrainConfig:
    hidden_dims: tuple = (32,)
    epochs: int = 40
    lr: float = 0.5
    batch_size: int = 32


@dataclass
class RetrainConfig:
    epochs: int = 20
    lr: float = 0.05
    batch_size: int = 32


@dataclass
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    fuzz: FuzzConfig = field(default_factory=FuzzConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    retrain: RetrainConfig = field(default_factory=RetrainConfig)
    strategy: str = "clover"  # clover | fgsm_pgd_universe
    selector: str = "context"  # context | random | gini | be_st | km_st
    n: int = 100
    km_sections: int = 4
    cc_section: int | None = None  # restrict selection to one score range
    per_attacker_count: int = 1000
    seed: int = 0
    out_dir: str | None = None

    def validate(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.strategy not in ("clover", "fgsm_pgd_universe"):
            raise ValueError(f"unknown strategy: {self.strategy!r}")
        if self.selector not in ("context", "random", "gini", "be_st", "km_st"):
            raise ValueError(f"unknown selector: {self.selector!r}")
        if self.retrain.lr <= 0:
            raise ValueError("retrain lr must be positive")
        if self.retrain.epochs < 0:
            raise ValueError("retrain epochs must be non-negative")
        if self.cc_section is not None and not (
            0 <= self.cc_section < len(DEFAULT_CC_RANGES)
        ):
            raise ValueError(
                f"cc_section must lie in [0, {len(DEFAULT_CC_RANGES) - 1}]"
            )
        if self.per_attacker_count < 0:
            raise ValueError("per_attacker_count must be non-negative")
        if self.data.source not in ("blobs", "rings", "csv"):
            raise ValueError(f"unknown data source: {self.data.source!r}")
        if self.data.source == "csv" and not self.csv_path_ok():
            raise ValueError("csv source needs a csv_path")
        self.fuzz.validate()
        self.attack.validate()

    def csv_path_ok(self):
        return bool(self.data.csv_path)

    def echo(self):
        """Plain-dict snapshot of the configuration for reports.

        out_dir is omitted: it says where artifacts land, not what was
        computed, and reports from different directories should compare
        equal."""
        doc = asdict(self)
        doc["data"]["split_fractions"] = list(self.data.split_fractions)
        doc["train"]["hidden_dims"] = list(self.train.hidden_dims)
        doc.pop("out_dir")
        return doc


@dataclass
class Report:
    status: str
    robust_acc_before: float | None
    robust_acc_after: float | None
    improvement: float | None
    test_acc_before: float | None
    test_acc_after: float | None
    suite_size: int
    adv_labels: int
    categories: int
    mean_cc: float
    mean_cc_reduction: float
    pool_size: int
    universe_size: int
    timing: dict
    config: dict
    version: int = REPORT_VERSION
    seconds: float = 0.0  # wall clock; deliberately kept out of to_dict()

    def to_dict(self):
        doc = {
            "status": self.status,
            "robust_acc_before": self.robust_acc_before,
            "robust_acc_after": self.robust_acc_after,
            "improvement": self.improvement,
            "test_acc_before": self.test_acc_before,
            "test_acc_after": self.test_acc_after,
            "suite_size": self.suite_size,
            "adv_labels": self.adv_labels,
            "categories": self.categories,
            "mean_cc": self.mean_cc,
            "mean_cc_reduction": self.mean_cc_reduction,
            "pool_size": self.pool_size,
            "universe_size": self.universe_size,
            "timing": self.timing,
            "config": self.config,
            "version": self.version,
        }
        return doc


def retrain(model, suite, train_data, epochs, lr, rng, batch_size=32):
    """Finetune existing weights on the shuffled union of train data and
    the suite, the suite labeled with its seeds' labels."""
    if train_data.y is None:
        raise ValueError("retraining needs labeled training data")
    out = model.copy()
    if not suite.cases:
        return train(out, train_data, epochs, lr, rng, batch_size)
    extra_y = []
    for case in suite.cases:
        label = suite.seed_labels.get(case.seed_id)
        if label is None:
            raise ValueError(f"suite entry for seed {case.seed_id} has no label")
        extra_y.append(label)
    union = Dataset(
        np.vstack([train_data.X, np.stack([c.data for c in suite.cases])]),
        np.concatenate([train_data.y, np.asarray(extra_y, dtype=np.int64)]),
        train_data.num_classes,
        train_data.name + "+suite",
    )
    return train(out, union, epochs, lr, rng, batch_size)


# -- stages ------------------------------------------------------------


class _StageCache:
    """Memoizes pipeline stages across grid variants.

    Keys are reprs of exactly the knobs a stage depends on, so variants
    that differ only in later knobs consume bit-identical earlier outputs.
    """

    def __init__(self):
        self.store = {}

    def get(self, key, build):
        if key not in self.store:
            self.store[key] = build()
        return self.store[key]


def _data_key(cfg):
    return ("data", repr(cfg.data), cfg.seed)

def _model_key(cfg):
    return ("model", _data_key(cfg), repr(cfg.train))

def _universe_key(cfg):
    return (
        "universe", _model_key(cfg), repr(cfg.attack),
        cfg.per_attacker_count, cfg.fuzz.k, cfg.fuzz.delta,
    )

def _pool_key(cfg):
    return (
        "pool", _model_key(cfg), cfg.strategy, repr(replace(cfg.fuzz, seed=0)),
        repr(cfg.attack), cfg.per_attacker_count,
    )


def _build_data(cfg):
    if cfg.data.source == "csv":
        full = load_csv(
            cfg.data.csv_path,
            num_classes=cfg.data.num_classes or None,
            normalization=cfg.data.normalization,
        )
    else:
        spec = SyntheticSpec(
            kind=cfg.data.source,
            num_classes=cfg.data.num_classes,
            dimension=cfg.data.dimension,
            samples_per_class=cfg.data.samples_per_class,
            spread=cfg.data.spread,
            seed=derive_seed(cfg.seed, _ROLE_DATA),
        )
        full = generate_synthetic(spec)
    return split(full, cfg.data.split_fractions, role_rng(cfg.seed, _ROLE_SPLIT))


def _build_model(cfg, train_ds):
    dims = [train_ds.dimension, *cfg.train.hidden_dims, train_ds.num_classes]
    model = MLP.initialized(dims, role_rng(cfg.seed, _ROLE_INIT))
    return train(
        model, train_ds, cfg.train.epochs, cfg.train.lr,
        role_rng(cfg.seed, _ROLE_TRAIN), cfg.train.batch_size,
    )


def _build_universe(cfg, model, test_ds):
    params = CCParams(k=cfg.fuzz.k, delta=cfg.fuzz.delta)
    return build_universe(
        model, test_ds, cfg.attack, cfg.per_attacker_count,
        role_rng(cfg.seed, _ROLE_UNIVERSE), params,
    )


def _build_pool(cfg, model, train_ds):
    """Returns (pool, campaign events)."""
    if cfg.strategy == "clover":
        seeds = make_seeds(model, train_ds)
        fuzz_cfg = replace(cfg.fuzz, seed=derive_seed(cfg.seed, _ROLE_FUZZ))
        events = []
        pool = context_fuzz(model, seeds, fuzz_cfg, events.append)
        return pool, events
    params = CCParams(k=cfg.fuzz.k, delta=cfg.fuzz.delta)
    pool = build_universe(
        model, train_ds, cfg.attack, cfg.per_attacker_count,
        role_rng(cfg.seed, _ROLE_FUZZ), params,
    )
    return pool, []


def _select_suite(cfg, pool, model):
    target = pool
    if cfg.cc_section is not None:
        target = partition_by_cc(pool)[cfg.cc_section]
    if cfg.selector == "context":
        return context_select(target, cfg.n, cfg.fuzz.select_order)
    if cfg.selector == "random":
        return random_select(target, cfg.n, role_rng(cfg.seed, _ROLE_SELECT))
    if cfg.selector == "gini":
        return gini_order_select(target, cfg.n, model)
    if cfg.selector == "be_st":
        return be_st(target, cfg.n, model, cfg.fuzz.epsilon)
    if cfg.selector == "km_st":
        return km_st(
            target, cfg.n, cfg.km_sections, model, cfg.fuzz.epsilon,
            role_rng(cfg.seed, _ROLE_SELECT),
        )
    raise ValueError(f"unknown selector: {cfg.selector!r}")


def _accuracy(model, ds):
    if ds.y is None or len(ds) == 0:
        return None
    return float(np.mean(model.predict_labels(ds.X) == ds.y))


def _execute(cfg, cache):
    cfg.validate()
    train_ds, _val_ds, test_ds = cache.get(_data_key(cfg), lambda: _build_data(cfg))
    model = cache.get(_model_key(cfg), lambda: _build_model(cfg, train_ds))
    universe = cache.get(_universe_key(cfg), lambda: _build_universe(cfg, model, test_ds))
    pool, events = cache.get(_pool_key(cfg), lambda: _build_pool(cfg, model, train_ds))

    test_acc_before = _accuracy(model, test_ds)
    robust_before = robust_accuracy(model, universe) if len(universe) else None

    if len(pool) == 0:
        status = "no-test-cases"
        suite = _select_empty(cfg)
        after = model.copy()
    else:
        status = "ok"
        suite = _select_suite(cfg, pool, model)
        if suite.cases:
            after = retrain(
                model, suite, train_ds, cfg.retrain.epochs, cfg.retrain.lr,
                role_rng(cfg.seed, _ROLE_RETRAIN), cfg.retrain.batch_size,
            )
        else:
            after = model.copy()

    robust_after = robust_accuracy(after, universe) if len(universe) else None
    improvement = (
        robust_after - robust_before
        if robust_before is not None and robust_after is not None
        else None
    )
    if suite.cases:
        stats = suite_stats(suite.cases, pool.seeds)
        reduction = mean_cc_reduction(
            suite.cases, model, after,
            CCParams(k=cfg.fuzz.k, delta=cfg.fuzz.delta),
            role_rng(cfg.seed, _ROLE_CC),
        )
    else:
        stats = suite_stats([])  # warns; zeros
        reduction = 0.0

    report = Report(
        status=status,
        robust_acc_before=robust_before,
        robust_acc_after=robust_after,
        improvement=improvement,
        test_acc_before=test_acc_before,
        test_acc_after=_accuracy(after, test_ds),
        suite_size=len(suite),
        adv_labels=stats.adv_label_count,
        categories=stats.category_count,
        mean_cc=stats.mean_cc,
        mean_cc_reduction=reduction,
        pool_size=len(pool),
        universe_size=len(universe),
        timing={
            "fuzz_attempts": sum(1 for e in events if e.get("event") == "attempt"),
            "train_epochs": cfg.train.epochs,
            "retrain_epochs": cfg.retrain.epochs if suite.cases else 0,
        },
        config=cfg.echo(),
    )
    artifacts = {
        "model_before": model,
        "model_after": after,
        "pool": pool,
        "suite": suite,
        "universe": universe,
        "events": events,
    }
    return report, artifacts


def _select_empty(cfg):
    return TestSuite([], cfg.selector, {"n": cfg.n})


def write_artifacts(out_dir, report, artifacts):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(stable_json(report.config), encoding="utf-8")
    save_model(artifacts["model_before"], out / "model_before.json")
    save_model(artifacts["model_after"], out / "model_after.json")
    write_jsonl(out / "pool.jsonl", pool_records(artifacts["pool"]))
    write_jsonl(out / "suite.jsonl", suite_records(artifacts["suite"]))
    write_jsonl(out / "universe.jsonl", pool_records(artifacts["universe"]))
    write_jsonl(out / "campaign.log.jsonl", artifacts["events"])
    (out / "report.json").write_text(stable_json(report.to_dict()), encoding="utf-8")


def run_pipeline(cfg, cache=None):
    """One full testing-retraining run; writes artifacts when out_dir is set."""
    started = time.perf_counter()
    report, artifacts = _execute(cfg, cache if cache is not None else _StageCache())
    report.seconds = time.perf_counter() - started
    if cfg.out_dir:
        write_artifacts(cfg.out_dir, report, artifacts)
    return report


def apply_overrides(cfg, overrides):
    """New config with dotted-path overrides applied (e.g. fuzz.select_order)."""
    updates = {}
    nested = {}
    for key, value in overrides.items():
        if "." in key:
            head, tail = key.split(".", 1)
            nested.setdefault(head, {})[tail] = value
        else:
            updates[key] = value
    try:
        for head, sub in nested.items():
            updates[head] = replace(getattr(cfg, head), **sub)
        return replace(cfg, **updates)
    except (TypeError, AttributeError) as exc:
        raise ValueError(f"unknown override: {exc}") from None


def _failure_report(cfg, exc):
    return Report(
        status=f"error: {type(exc).__name__}: {exc}",
        robust_acc_before=None,
        robust_acc_after=None,
        improvement=None,
        test_acc_before=None,
        test_acc_after=None,
        suite_size=0,
        adv_labels=0,
        categories=0,
        mean_cc=0.0,
        mean_cc_reduction=0.0,
        pool_size=0,
        universe_size=0,
        timing={},
        config=cfg.echo() if hasattr(cfg, "echo") else {},
    )


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{round_sig(value):.6g}"
    return str(value)


def run_experiment_grid(base, variants, out_dir=None):
    """Run controlled variants of a base configuration.

    Each variant is a dict of dotted-path overrides. Stages that the
    variants agree on are computed once and shared, which is what makes a
    selector sweep a controlled comparison. A failing variant is recorded
    in its report's status and the grid moves on. When out_dir is set,
    grid.csv plus one artifact directory per variant are written there.
    """
    cache = _StageCache()
    reports = []
    rows = []
    for vid, overrides in enumerate(variants):
        cfg = apply_overrides(base, dict(overrides))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=str(Path(out_dir) / "variants" / f"variant-{vid:02d}"))
        started = time.perf_counter()
        try:
            report, artifacts = _execute(cfg, cache)
            report.seconds = time.perf_counter() - started
            if cfg.out_dir:
                write_artifacts(cfg.out_dir, report, artifacts)
        except Exception as exc:  # noqa: BLE001 - per-variant isolation
            report = _failure_report(cfg, exc)
            report.seconds = time.perf_counter() - started
        reports.append(report)
        rows.append([
            vid,
            cfg.selector,
            cfg.n,
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
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "grid.csv").open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(GRID_COLUMNS)
            writer.writerows(rows)
    return reports
