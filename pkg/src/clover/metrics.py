"""Guiding metrics and suite-level evaluation statistics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class CCParams:
    """Sampling parameters for contextual confidence."""

    k: int = 20
    delta: float = 0.01
    rng: np.random.Generator | None = None

    def validate(self, epsilon=None):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if epsilon is not None and self.delta >= epsilon:
            raise ValueError("delta must be smaller than epsilon")


def draw_context_noise(params, dim, rng=None):
    """One (k, dim) block of per-coordinate uniform noise in [-delta, delta].

    Drawing this once and passing it to every contextual_confidence call in
    a comparison scope makes the scores exactly comparable.
    """
    gen = rng if rng is not None else params.rng
    if gen is None:
        gen = np.random.default_rng()
    return gen.uniform(-params.delta, params.delta, size=(params.k, dim))


def contextual_confidence(model, data_vec, label, params, noise=None):
    """Mean probability of `label` over k perturbed neighbours of data_vec.

    Neighbours are clamped into [0,1]^d only; the context ball is centered
    on the test case, not on its seed. Returns a value in [0, 1].
    """
    x = np.asarray(data_vec, dtype=np.float64)
    if noise is None:
        noise = draw_context_noise(params, x.size)
    neighbours = np.clip(x[None, :] + noise, 0.0, 1.0)
    probs = model.predict_batch(neighbours)
    return float(probs[:, int(label)].mean())


def gini(probs):
    """Uncertainty of a prediction vector: 1 minus the sum of squares."""
    p = np.asarray(probs, dtype=np.float64)
    return float(1.0 - np.sum(p * p))


def fol(model, data_vec, seed_label, epsilon):
    """First-order loss: epsilon times the L2 norm of the input loss gradient."""
    grad = model.input_gradient(np.asarray(data_vec, dtype=np.float64), int(seed_label))
    return float(epsilon * np.linalg.norm(grad))


@dataclass
class SuiteStats:
    adv_label_count: int
    category_count: int
    mean_cc: float


def suite_stats(cases, seeds=None):
    """Suite summary: unique (seed, label) pairs, covered seeds, mean score.

    When a seeds mapping is supplied, every case must reference a known
    seed. An empty suite warns and returns all-zero stats.
    """
    cases = list(cases)
    if not cases:
        warnings.warn("empty suite: statistics are all zero")
        return SuiteStats(0, 0, 0.0)
    pairs = set()
    covered = set()
    total = 0.0
    for case in cases:
        if seeds is not None and case.seed_id not in seeds:
            raise KeyError(f"test case references unknown seed {case.seed_id}")
        pairs.add((case.seed_id, case.adversarial_label))
        covered.add(case.seed_id)
        total += case.cc
    return SuiteStats(len(pairs), len(covered), total / len(cases))


def robust_accuracy(model, universe):
    """Fraction of universe entries the model maps back to their seed's label."""
    cases = universe.flatten()
    if not cases:
        raise ValueError("robust accuracy over an empty universe is undefined")
    X = np.stack([c.data for c in cases])
    preds = model.predict_labels(X)
    want = np.array([universe.seeds[c.seed_id].seed_label for c in cases])
    return float(np.mean(preds == want))


def mean_cc_reduction(cases, model_before, model_after, params, rng=None):
    """Mean positionwise drop in contextual confidence after retraining.

    Both models are scored with one shared frozen noise block; the two
    score lists are sorted ascending independently and differenced position
    by position. Identical models therefore give exactly zero.
    """
    cases = list(cases)
    if not cases:
        raise ValueError("mean CC reduction needs a non-empty suite")
    noise = draw_context_noise(params, cases[0].data.size, rng)
    before = sorted(
        contextual_confidence(model_before, c.data, c.adversarial_label, params, noise)
        for c in cases
    )
    after = sorted(
        contextual_confidence(model_after, c.data, c.adversarial_label, params, noise)
        for c in cases
    )
    return float(np.mean([b - a for b, a in zip(before, after)]))
