"""Perturbation primitives shared by every generator.

One bounded `step` underlies the fuzzer and both baseline attackers; the
universe builder stacks FGSM and PGD output into an assessment pool.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .cases import Seed, TestCase, TestPool
from .metrics import CCParams, contextual_confidence, draw_context_noise


@dataclass
class AttackConfig:
    epsilon: float = 0.05
    p_norm: str = "linf"  # linf | l2
    fgsm_step: float | None = None  # defaults to epsilon
    pgd_step: float | None = None  # defaults to epsilon / 6
    pgd_iters: int = 10
    raw_gradient: bool = False

    def validate(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.p_norm not in ("linf", "l2"):
            raise ValueError(f"unknown p_norm: {self.p_norm!r}")
        if self.pgd_iters < 1:
            raise ValueError("pgd_iters must be at least 1")
        for name in ("fgsm_step", "pgd_step"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def fgsm_step_size(self):
        return self.epsilon if self.fgsm_step is None else self.fgsm_step

    @property
    def pgd_step_size(self):
        return self.epsilon / 6.0 if self.pgd_step is None else self.pgd_step


def normalize_direction(direction, p_norm, raw=False):
    """Sign per coordinate under linf, unit vector under l2, or untouched."""
    d = np.asarray(direction, dtype=np.float64)
    if raw:
        return d
    if p_norm == "linf":
        return np.sign(d)
    norm = np.linalg.norm(d)
    return d / norm if norm > 0 else np.zeros_like(d)


def project_ball(vec, seed_vec, epsilon, p_norm):
    if p_norm == "linf":
        return np.clip(vec, seed_vec - epsilon, seed_vec + epsilon)
    offset = vec - seed_vec
    norm = np.linalg.norm(offset)
    if norm > epsilon:
        offset = offset * (epsilon / norm)
    return seed_vec + offset


def step(seed_vec, current, direction, scale, cfg):
    """One bounded move from `current`.

    Adds scale * epsilon along the normalized direction, projects into the
    seed's epsilon-ball, then clamps into [0,1]^d. A zero direction is a
    no-op. For linf the projection and the clamp commute; for l2 the
    clamped point is accepted as is.
    """
    seed_vec = np.asarray(seed_vec, dtype=np.float64)
    current = np.asarray(current, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    if not np.any(direction):
        return current.copy()
    moved = current + scale * cfg.epsilon * normalize_direction(
        direction, cfg.p_norm, cfg.raw_gradient
    )
    return np.clip(project_ball(moved, seed_vec, cfg.epsilon, cfg.p_norm), 0.0, 1.0)


def fgsm(model, seed, cfg, step_size=None):
    """Single ascent step of the seed-label loss, bounded to the ball."""
    size = cfg.fgsm_step_size if step_size is None else step_size
    grad = model.input_gradient(seed.features, seed.seed_label)
    scale = min(1.0, size / cfg.epsilon)
    return step(seed.features, seed.features, grad, scale, cfg)


def pgd(model, seed, cfg, step_size=None, iters=None):
    """Iterated sign-gradient ascent with a projection after every step."""
    size = cfg.pgd_step_size if step_size is None else step_size
    rounds = cfg.pgd_iters if iters is None else iters
    scale = min(1.0, size / cfg.epsilon)
    current = seed.features.copy()
    for _ in range(rounds):
        grad = model.input_gradient(current, seed.seed_label)
        current = step(seed.features, current, grad, scale, cfg)
    return current


def build_universe(model, data, cfg, per_attacker_count, rng=None, cc_params=None):
    """Adversarial pool from FGSM and PGD over a labeled dataset.

    Aims for per_attacker_count adversarial cases per attacker by cycling
    the samples. The first pass over the seeds runs at the configured
    strength; later passes shrink the attack (bound and step scaled by a
    U(0.25, 1) draw) so repeat visits to a seed land on distinct points.
    Every case stays inside the full epsilon-ball. Exact duplicates are
    dropped, and an attempt cap keeps the loop finite on robust models.

    Contextual confidence is computed for each kept case against `model`
    with one frozen noise block for the whole build.
    """
    if data.y is None:
        raise ValueError("universe construction needs labeled data")
    cfg.validate()
    gen = np.random.default_rng() if rng is None else rng
    params = cc_params if cc_params is not None else CCParams()
    seeds = [Seed(i, data.X[i], int(data.y[i]), int(data.y[i])) for i in range(len(data))]
    pool = TestPool(seeds, guiding_metric="cc")
    if not seeds or per_attacker_count <= 0:
        if per_attacker_count > 0:
            warnings.warn("universe is empty: no seeds to attack")
        return pool
    noise = draw_context_noise(params, data.dimension, gen)
    seen = set()
    for attacker in (fgsm, pgd):
        kept = 0
        cap = max(4 * per_attacker_count, 2 * len(seeds))
        for attempt in range(cap):
            if kept >= per_attacker_count:
                break
            seed = seeds[attempt % len(seeds)]
            if attempt < len(seeds):
                sub = cfg
            else:
                strength = gen.uniform(0.25, 1.0)
                sub = replace(
                    cfg,
                    epsilon=strength * cfg.epsilon,
                    fgsm_step=None if cfg.fgsm_step is None else strength * cfg.fgsm_step,
                    pgd_step=None if cfg.pgd_step is None else strength * cfg.pgd_step,
                )
            candidate = attacker(model, seed, sub)
            label = model.predict_label(candidate)
            if label == seed.seed_label:
                continue
            key = (seed.id, candidate.tobytes())
            if key in seen:
                continue
            seen.add(key)
            cc = contextual_confidence(model, candidate, label, params, noise)
            pool.add(TestCase(candidate, seed.id, label, cc))
            kept += 1
    if len(pool) == 0:
        warnings.warn("universe is empty: the model never misclassified a perturbed sample")
    return pool
