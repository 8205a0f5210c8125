import numpy as np
import pytest

from clover.cases import Seed, TestCase, TestPool
from clover.data import SyntheticSpec, generate_synthetic, split
from clover.nn import MLP, train


class StubModel:
    """Answers predict_batch with canned probability rows, one per input row."""

    def __init__(self, rows):
        self.rows = np.asarray(rows, dtype=np.float64)

    def predict_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.stack([self.rows[i % len(self.rows)] for i in range(len(X))])


class SequenceStub:
    """Like StubModel but consumes one canned batch per predict_batch call."""

    def __init__(self, batches):
        self.batches = [np.atleast_2d(np.asarray(b, dtype=np.float64)) for b in batches]
        self.calls = 0

    def predict_batch(self, X):
        batch = self.batches[self.calls]
        self.calls += 1
        return batch


def make_pool(per_seed, dim=3, seed_labels=None):
    """Pool with fabricated, pairwise-distinct case payloads.

    per_seed maps seed_id -> [(adversarial_label, score), ...] in the
    intended insertion order.
    """
    seed_labels = seed_labels or {}
    seeds = [
        Seed(sid, np.full(dim, 0.5), seed_labels.get(sid, 0), seed_labels.get(sid, 0))
        for sid in per_seed
    ]
    pool = TestPool(seeds)
    tick = 0
    for sid, entries in per_seed.items():
        for adv, score in entries:
            vec = np.full(dim, 0.5)
            vec[0] = tick / 4096.0
            tick += 1
            pool.add(TestCase(vec, sid, adv, score))
    return pool


def random_pool(rng, max_seeds=12, max_cases=500, num_labels=4):
    """Random pool for oracle-equivalence sweeps, plus (tag, score) pairs."""
    n_seeds = int(rng.integers(1, max_seeds + 1))
    per_seed = {}
    total = int(rng.integers(1, max_cases + 1))
    for _ in range(total):
        sid = int(rng.integers(0, n_seeds))
        adv = int(rng.integers(0, num_labels))
        score = float(rng.random())
        per_seed.setdefault(sid, []).append((adv, score))
    labels = {sid: int(rng.integers(0, num_labels)) for sid in per_seed}
    return make_pool(per_seed, seed_labels=labels)


@pytest.fixture(scope="session")
def blob_split():
    spec = SyntheticSpec(
        kind="blobs", num_classes=3, dimension=4, samples_per_class=50,
        spread=0.06, seed=11,
    )
    return split(generate_synthetic(spec), (0.7, 0.1, 0.2), np.random.default_rng(5))


@pytest.fixture(scope="session")
def trained_model(blob_split):
    train_ds, _val, _test = blob_split
    model = MLP.initialized([train_ds.dimension, 16, train_ds.num_classes],
                            np.random.default_rng(3))
    return train(model, train_ds, 30, 0.5, np.random.default_rng(4))
