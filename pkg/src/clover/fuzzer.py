"""The context-guided fuzzing engine.

A campaign is an initialization pass over the seed list followed by a
round-robin evolution loop. Seeds that share a (seed label, adversarial
label) pair form an equivalence class and lend each other their best-known
perturbation deltas; per-seed budget grows with past success; every
adversarial candidate found along the way is kept in the pool.
"""

from __future__ import annotations

import math
import operator
import time
from dataclasses import dataclass

import numpy as np

from .attack import AttackConfig, step
from .cases import TestCase, TestPool
from .metrics import CCParams, contextual_confidence, fol, gini

# Column marker for seeds with no recorded adversarial label yet.
BLANK = None


@dataclass
class FuzzConfig:
    epsilon: float = 0.05
    delta: float = 0.01
    k: int = 20
    m: int = 5
    max_lr: float = 0.2
    p_norm: str = "linf"
    budget_attempts: int | None = 5000
    budget_seconds: float | None = None
    guiding_metric: str = "cc"  # cc | gini | fol
    select_order: str = "highest"  # highest | lowest
    use_seed_equivalence: bool = True
    eq_update: str = "every_case"  # every_case | on_beta
    raw_gradient: bool = False
    seed: int = 0

    def validate(self):
        if self.epsilon <= 0 or self.delta <= 0:
            raise ValueError("epsilon and delta must be positive")
        if self.delta >= self.epsilon:
            raise ValueError("delta must be smaller than epsilon")
        if self.k < 1 or self.m < 1:
            raise ValueError("k and m must be at least 1")
        if not 0.0 < self.max_lr <= 1.0:
            raise ValueError("max_lr must lie in (0, 1]")
        if self.p_norm not in ("linf", "l2"):
            raise ValueError(f"unknown p_norm: {self.p_norm!r}")
        if self.guiding_metric not in ("cc", "gini", "fol"):
            raise ValueError(f"unknown guiding metric: {self.guiding_metric!r}")
        if self.select_order not in ("highest", "lowest"):
            raise ValueError(f"unknown select order: {self.select_order!r}")
        if self.eq_update not in ("every_case", "on_beta"):
            raise ValueError(f"unknown eq_update mode: {self.eq_update!r}")
        if self.budget_attempts is None and self.budget_seconds is None:
            raise ValueError("set an attempt budget or a wall-clock budget")
        if self.budget_attempts is not None and self.budget_attempts < 0:
            raise ValueError("budget_attempts must be non-negative")
        if self.budget_seconds is not None and self.budget_seconds <= 0:
            raise ValueError("budget_seconds must be positive")

    def attack_config(self):
        return AttackConfig(
            epsilon=self.epsilon, p_norm=self.p_norm, raw_gradient=self.raw_gradient
        )

    def cc_params(self):
        return CCParams(k=self.k, delta=self.delta)


def cyclic_rate(r, num_steps, max_lr):
    """In-ball walk schedule, peaking mid-sequence: |max * sin(pi r / (R+1))|."""
    return abs(max_lr * math.sin(math.pi * r / (num_steps + 1)))


def compute_energy(counts, m):
    """Per-seed attempt allotment: ceil(m * count / mean(count)).

    Exact integer arithmetic, so the ceiling never suffers float drift:
    ceil(m * c * n / total) with n seeds and total = sum of counts.
    """
    counts = [int(c) for c in counts]
    if any(c < 1 for c in counts):
        raise ValueError("success counts start at 1 and never drop below")
    total = sum(counts)
    n = len(counts)
    return [(m * c * n + total - 1) // total for c in counts]


class SuccessCounter:
    """Per-seed count of successful evolutions, starting at 1."""

    def __init__(self, seed_ids):
        self.counts = {sid: 1 for sid in seed_ids}

    def increment(self, seed_id, by=1):
        self.counts[seed_id] += by

    def energies(self, seed_ids, m):
        return compute_energy([self.counts[s] for s in seed_ids], m)


class EquivalenceIndex:
    """Seed partition by (seed label, latest adversarial label).

    Rows are seed labels; columns are adversarial labels plus a blank
    column for seeds with no recorded adversarial label. Cells keep their
    members in insertion order so lookups are deterministic.
    """

    def __init__(self, seeds):
        self._row = {}
        self._col = {}
        self._cells = {}
        for seed in seeds:
            self._row[seed.id] = seed.seed_label
            self._col[seed.id] = BLANK
            self._cells.setdefault((seed.seed_label, BLANK), {})[seed.id] = None

    def column_of(self, seed_id):
        return self._col[seed_id]

    def record_label(self, seed_id, v):
        """Move the seed to column v of its row. Recording the same v again
        is a no-op."""
        if seed_id not in self._row:
            raise KeyError(f"unknown seed id {seed_id}")
        old = self._col[seed_id]
        if old == v:
            return
        row = self._row[seed_id]
        cell = self._cells[(row, old)]
        del cell[seed_id]
        if not cell:
            del self._cells[(row, old)]
        self._col[seed_id] = v
        self._cells.setdefault((row, v), {})[seed_id] = None

    def class_members(self, seed_id):
        """Everyone in the seed's current cell, itself included."""
        if seed_id not in self._row:
            raise KeyError(f"unknown seed id {seed_id}")
        return list(self._cells[(self._row[seed_id], self._col[seed_id])])

    def check_partition(self):
        """True when the cells exactly partition the registered seeds."""
        seen = set()
        for (row, col), members in self._cells.items():
            for sid in members:
                if sid in seen:
                    return False
                if self._row.get(sid) != row or self._col.get(sid) != col:
                    return False
                seen.add(sid)
        return seen == set(self._row)


@dataclass
class AFO:
    """Best-known perturbation for one seed.

    delta reproduces the recorded best test case when added to the seed;
    adversarial_label is None until the seed has produced one.
    """

    delta: np.ndarray
    seed_label: int
    adversarial_label: int | None
    cc_star: float

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.float64)


class AdversarialFront:
    """Per-seed map of current best AFOs."""

    def __init__(self, seeds, order="highest"):
        bottom = -math.inf if order == "highest" else math.inf
        self.entries = {
            s.id: AFO(np.zeros_like(s.features), s.seed_label, None, bottom)
            for s in seeds
        }

    def __getitem__(self, seed_id):
        return self.entries[seed_id]

    def __setitem__(self, seed_id, afo):
        self.entries[seed_id] = afo


class Budget:
    """Campaign budget: a fixed number of candidate generations, or a
    wall-clock allowance. take() grants one more candidate."""

    def __init__(self, attempts=None, seconds=None):
        self.attempts = attempts
        self.seconds = seconds
        self.used = 0
        self._start = time.monotonic()

    def exhausted(self):
        if self.attempts is not None and self.used >= self.attempts:
            return True
        if self.seconds is not None and time.monotonic() - self._start >= self.seconds:
            return True
        return False

    def take(self):
        if self.exhausted():
            return False
        self.used += 1
        return True


def guiding_value(metric, model, data_vec, adversarial_label, seed_label, epsilon,
                  cc_params=None, noise=None):
    """Score one candidate under the campaign's guiding metric."""
    if metric == "cc":
        return contextual_confidence(model, data_vec, adversarial_label, cc_params, noise)
    if metric == "gini":
        return gini(model.predict_one(data_vec))
    if metric == "fol":
        return fol(model, data_vec, seed_label, epsilon)
    raise ValueError(f"unknown guiding metric: {metric!r}")


def _comparator(order):
    return operator.gt if order == "highest" else operator.lt


def _loggable(value):
    return None if math.isinf(value) else value


def build_ac(seed_id, index, front, energy, rng):
    """Ordered work list for one seed round.

    Up to min(energy, class size - 1) other members of the seed's
    equivalence class, in seeded-shuffle order, each contributing its best
    AFO. A seed alone in its class gets its own AFO as the single entry.
    """
    members = [sid for sid in index.class_members(seed_id) if sid != seed_id]
    if not members:
        return [front[seed_id]]
    order = rng.permutation(len(members))
    take = min(int(energy), len(members))
    return [front[members[i]] for i in order[:take]]


def context_translate(model, seed, ac, beta, grad, cc_star, cfg,
                      budget=None, noise=None, log=None):
    """Evolve one seed along a list of borrowed directions.

    Each entry of `ac` is combined with the current best delta and the
    seed's own gradient, stepped once from the seed, then walked
    ceil(epsilon/delta) further gradient steps at the cyclic rate.
    Adversarial landings are kept; a landing that beats the running best
    (per cfg.select_order) becomes the new beta. Returns the updated beta,
    the kept cases, and the number of evolutions.
    """
    atk = cfg.attack_config()
    better = _comparator(cfg.select_order)
    num_steps = math.ceil(cfg.epsilon / cfg.delta)
    cc_params = cfg.cc_params()
    delta_best = beta.delta
    label_best = beta.adversarial_label
    star = cc_star
    kept = []
    n_evolved = 0
    for borrowed in ac:
        if budget is not None and not budget.take():
            break
        if cfg.use_seed_equivalence:
            composite = borrowed.delta + delta_best + grad
        else:
            composite = np.asarray(grad, dtype=np.float64)
        x = step(seed.features, seed.features, composite, 1.0, atk)
        for r in range(1, num_steps + 1):
            g = model.input_gradient(x, seed.seed_label)
            x = step(seed.features, x, g, cyclic_rate(r, num_steps, cfg.max_lr), atk)
        label = model.predict_label(x)
        adversarial = label != seed.seed_label
        evolved = False
        score = None
        if adversarial:
            score = guiding_value(
                cfg.guiding_metric, model, x, label, seed.seed_label,
                cfg.epsilon, cc_params, noise,
            )
            kept.append(TestCase(x, seed.id, label, score))
            if better(score, star):
                delta_best = x - seed.features
                label_best = label
                star = score
                n_evolved += 1
                evolved = True
        if log is not None:
            log({
                "event": "attempt",
                "attempt": budget.used if budget is not None else None,
                "seed_id": seed.id,
                "outcome": "adversarial" if adversarial else "benign",
                "adversarial_label": label if adversarial else None,
                "score": score,
                "cc_star": _loggable(star),
                "evolved": evolved,
            })
    return AFO(delta_best, seed.seed_label, label_best, star), kept, n_evolved


def context_fuzz(model, seeds, cfg, log=None):
    """Run one fuzzing campaign and return the pool of kept cases.

    The attempt budget counts candidate generations in the evolution loop;
    the initialization pass (one plain ascent step per seed) always runs in
    full and is logged but not budgeted. With a zero budget the returned
    pool is whatever initialization found. Identical cfg.seed values replay
    the campaign bit for bit.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    cfg.validate()
    dim = seeds[0].features.size
    noise_rng, shuffle_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(2)
    )
    noise = noise_rng.uniform(-cfg.delta, cfg.delta, size=(cfg.k, dim))
    cc_params = cfg.cc_params()
    atk = cfg.attack_config()
    front = AdversarialFront(seeds, cfg.select_order)
    counter = SuccessCounter([s.id for s in seeds])
    index = EquivalenceIndex(seeds)
    pool = TestPool(seeds, guiding_metric=cfg.guiding_metric)
    budget = Budget(cfg.budget_attempts, cfg.budget_seconds)
    emit = log if log is not None else (lambda event: None)

    for seed in seeds:
        grad = model.input_gradient(seed.features, seed.seed_label)
        x = step(seed.features, seed.features, grad, 1.0, atk)
        label = model.predict_label(x)
        adversarial = label != seed.seed_label
        score = None
        if adversarial:
            score = guiding_value(
                cfg.guiding_metric, model, x, label, seed.seed_label,
                cfg.epsilon, cc_params, noise,
            )
            pool.add(TestCase(x, seed.id, label, score))
            front[seed.id] = AFO(x - seed.features, seed.seed_label, label, score)
            counter.increment(seed.id)
        emit({
            "event": "init",
            "seed_id": seed.id,
            "outcome": "adversarial" if adversarial else "benign",
            "adversarial_label": label if adversarial else None,
            "score": score,
            "cc_star": _loggable(front[seed.id].cc_star),
        })
        if adversarial:
            index.record_label(seed.id, label)
            emit({"event": "eq", "seed_id": seed.id,
                  "row": seed.seed_label, "col": label})

    i = 0
    energies = None
    seed_ids = [s.id for s in seeds]
    while not budget.exhausted():
        if i == 0:
            energies = counter.energies(seed_ids, cfg.m)
            emit({"event": "energy", "energies": list(energies)})
        seed = seeds[i]
        ac = build_ac(seed.id, index, front, energies[i], shuffle_rng)
        beta = front[seed.id]
        grad = model.input_gradient(seed.features, seed.seed_label)
        new_beta, kept_cases, n_evolved = context_translate(
            model, seed, ac, beta, grad, beta.cc_star, cfg, budget, noise, emit
        )
        front[seed.id] = new_beta
        for case in kept_cases:
            pool.add(case)
            if cfg.eq_update == "every_case":
                index.record_label(seed.id, case.adversarial_label)
                emit({"event": "eq", "seed_id": seed.id,
                      "row": seed.seed_label, "col": case.adversarial_label})
        if cfg.eq_update == "on_beta" and n_evolved > 0:
            index.record_label(seed.id, new_beta.adversarial_label)
            emit({"event": "eq", "seed_id": seed.id,
                  "row": seed.seed_label, "col": new_beta.adversarial_label})
        counter.increment(seed.id, n_evolved)
        i = (i + 1) % len(seeds)
    return pool
