"""Seeds, test cases, pools, and suites shared across the toolchain."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Seed:
    """One fuzzing origin: a sample plus the label the campaign treats as true.

    seed_label is the ground truth when the sample is labeled, otherwise the
    model's prediction at campaign start. ground_truth stays None in the
    unlabeled case so downstream code can tell the difference.
    """

    id: int
    features: np.ndarray
    seed_label: int
    ground_truth: int | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)


def make_seeds(model, data):
    """Wrap a dataset as a seed list; unlabeled rows adopt model predictions."""
    preds = model.predict_labels(data.X) if data.y is None else None
    seeds = []
    for i in range(len(data)):
        if data.y is not None:
            label = int(data.y[i])
            seeds.append(Seed(i, data.X[i], label, label))
        else:
            seeds.append(Seed(i, data.X[i], int(preds[i]), None))
    return seeds


@dataclass
class TestCase:
    """A perturbed sample the model mislabels, with its cached guiding score.

    `cc` holds the guiding-metric value computed at generation time; which
    metric that is travels with the owning pool.
    """

    data: np.ndarray
    seed_id: int
    adversarial_label: int
    cc: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)


class TestPool:
    """Per-seed grouped test cases plus the authoritative insertion order.

    Selector tie-breaking is defined by insertion order, so the pool keeps
    a flat sequence alongside the per-seed index; both views share the same
    TestCase objects.
    """

    def __init__(self, seeds=(), guiding_metric="cc"):
        self.seeds = {}
        self.guiding_metric = guiding_metric
        self.by_seed = {}
        self._all = []
        self._seen = set()
        for seed in seeds:
            self.register_seed(seed)

    def register_seed(self, seed):
        self.seeds[seed.id] = seed

    def add(self, case):
        """Set-union insert: re-adding a byte-identical case is a no-op.

        Returns True when the pool grew. Campaigns rediscover the same
        landing point across rounds; those repeats are not new test cases.
        """
        if case.seed_id not in self.seeds:
            raise KeyError(f"unknown seed id {case.seed_id}")
        key = (case.seed_id, case.data.tobytes())
        if key in self._seen:
            return False
        self._seen.add(key)
        self._all.append(case)
        self.by_seed.setdefault(case.seed_id, []).append(case)
        return True

    def flatten(self):
        return list(self._all)

    def __len__(self):
        return len(self._all)

    def seeds_with_cases(self):
        return list(self.by_seed.keys())

    def seed_label(self, seed_id):
        return self.seeds[seed_id].seed_label


@dataclass
class TestSuite:
    """An ordered selection from a pool, with provenance.

    seed_labels snapshots the label each selected case's seed carries, so
    retraining does not need the original pool.
    """

    cases: list
    strategy: str
    params: dict = field(default_factory=dict)
    seed_labels: dict = field(default_factory=dict)
    warning: str | None = None

    def __post_init__(self):
        seen = set()
        for case in self.cases:
            key = (case.seed_id, case.data.tobytes())
            if key in seen:
                raise ValueError("duplicate (seed_id, data) entry in suite")
            seen.add(key)

    def __len__(self):
        return len(self.cases)


# -- serialization -----------------------------------------------------


def case_record(case, guiding_metric):
    return {
        "seed_id": int(case.seed_id),
        "adversarial_label": int(case.adversarial_label),
        "cc": float(case.cc),
        "guiding_metric": guiding_metric,
        "data": [float(v) for v in case.data],
    }


def pool_records(pool):
    for case in pool.flatten():
        yield case_record(case, pool.guiding_metric)


def suite_records(suite):
    """Same schema as pools, preceded by one provenance header record."""
    yield {
        "provenance": {
            "strategy": suite.strategy,
            "params": {k: v for k, v in sorted(suite.params.items())},
        }
    }
    metric = suite.params.get("guiding_metric", "cc")
    for case in suite.cases:
        yield case_record(case, metric)


def case_from_record(record):
    return TestCase(
        np.array(record["data"], dtype=np.float64),
        int(record["seed_id"]),
        int(record["adversarial_label"]),
        float(record["cc"]),
    )


def pool_from_records(records, seeds):
    if hasattr(seeds, "values"):
        seeds = seeds.values()
    records = list(records)
    metric = records[0]["guiding_metric"] if records else "cc"
    pool = TestPool(seeds, guiding_metric=metric)
    for record in records:
        pool.add(case_from_record(record))
    return pool


def suite_from_records(records, seeds):
    records = list(records)
    if not records or "provenance" not in records[0]:
        raise ValueError("suite file is missing its provenance header")
    head = records[0]["provenance"]
    cases = [case_from_record(r) for r in records[1:]]
    labels = {}
    for case in cases:
        if case.seed_id not in seeds:
            raise KeyError(f"suite references unknown seed {case.seed_id}")
        labels[case.seed_id] = seeds[case.seed_id].seed_label
    return TestSuite(cases, head["strategy"], dict(head.get("params", {})), labels)
