import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from clover.attack import (
    AttackConfig,
    build_universe,
    fgsm,
    normalize_direction,
    pgd,
    project_ball,
    step,
)
from clover.cases import Seed
from clover.data import Dataset
from clover.metrics import CCParams


def test_attack_config_defaults_and_steps():
    cfg = AttackConfig()
    assert cfg.fgsm_step_size == cfg.epsilon
    assert cfg.pgd_step_size == pytest.approx(cfg.epsilon / 6.0)
    cfg = AttackConfig(fgsm_step=0.02, pgd_step=0.01)
    assert cfg.fgsm_step_size == 0.02
    assert cfg.pgd_step_size == 0.01


def test_attack_config_validation():
    with pytest.raises(ValueError):
        AttackConfig(epsilon=0.0).validate()
    with pytest.raises(ValueError):
        AttackConfig(p_norm="l1").validate()
    with pytest.raises(ValueError):
        AttackConfig(pgd_iters=0).validate()
    with pytest.raises(ValueError):
        AttackConfig(fgsm_step=-0.1).validate()


def test_normalize_direction_modes():
    d = np.array([3.0, -4.0, 0.0])
    assert np.array_equal(normalize_direction(d, "linf"), [1.0, -1.0, 0.0])
    unit = normalize_direction(d, "l2")
    assert np.allclose(unit, [0.6, -0.8, 0.0])
    assert np.array_equal(normalize_direction(d, "l2", raw=True), d)
    assert np.array_equal(normalize_direction(np.zeros(3), "l2"), np.zeros(3))


def test_project_ball_linf():
    seed = np.array([0.5, 0.5])
    out = project_ball(np.array([0.9, 0.2]), seed, 0.1, "linf")
    assert np.allclose(out, [0.6, 0.4])


def test_project_ball_l2():
    seed = np.zeros(2)
    out = project_ball(np.array([3.0, 4.0]), seed, 1.0, "l2")
    assert np.allclose(np.linalg.norm(out), 1.0)
    inside = project_ball(np.array([0.1, 0.1]), seed, 1.0, "l2")
    assert np.allclose(inside, [0.1, 0.1])


def test_step_zero_direction_is_noop():
    cfg = AttackConfig(epsilon=0.05)
    seed = np.array([0.3, 0.7])
    current = np.array([0.32, 0.68])
    out = step(seed, current, np.zeros(2), 1.0, cfg)
    assert np.array_equal(out, current)
    assert out is not current


def test_step_containment_randomized():
    rng = np.random.default_rng(0)
    for p_norm in ("linf", "l2"):
        cfg = AttackConfig(epsilon=0.08, p_norm=p_norm)
        for _ in range(5000):
            d = int(rng.integers(1, 6))
            seed = rng.random(d)
            current = np.clip(
                project_ball(seed + rng.normal(0, 0.05, d), seed, 0.08, p_norm),
                0.0, 1.0,
            )
            direction = rng.normal(0, 1, d)
            scale = float(rng.random())
            out = step(seed, current, direction, scale, cfg)
            assert oracles.within_ball(seed, out, 0.08, p_norm)
            assert oracles.within_domain(out, tol=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    seed=st.lists(st.floats(0.0, 1.0), min_size=2, max_size=4),
    offsets=st.lists(st.floats(-1.0, 1.0), min_size=2, max_size=4),
    scale=st.floats(0.0, 1.0),
    p_norm=st.sampled_from(["linf", "l2"]),
)
def test_step_containment_property(seed, offsets, scale, p_norm):
    d = min(len(seed), len(offsets))
    seed_vec = np.array(seed[:d])
    direction = np.array(offsets[:d])
    cfg = AttackConfig(epsilon=0.05, p_norm=p_norm)
    out = step(seed_vec, seed_vec, direction, scale, cfg)
    assert oracles.within_ball(seed_vec, out, 0.05, p_norm)
    assert oracles.within_domain(out, tol=1e-12)


def train_seeds(blob_split, count=40):
    train_ds, _, _ = blob_split
    return [
        Seed(i, train_ds.X[i], int(train_ds.y[i]), int(train_ds.y[i]))
        for i in range(min(count, len(train_ds)))
    ]


def test_fgsm_increases_loss_for_most_seeds(trained_model, blob_split):
    cfg = AttackConfig(epsilon=0.05)
    seeds = train_seeds(blob_split)
    up = 0
    for s in seeds:
        adv = fgsm(trained_model, s, cfg)
        assert oracles.within_ball(s.features, adv, cfg.epsilon, "linf")
        assert oracles.within_domain(adv)
        if trained_model.loss(adv, s.seed_label) > trained_model.loss(s.features, s.seed_label):
            up += 1
    assert up / len(seeds) >= 0.9


def test_pgd_at_least_as_effective_as_fgsm(trained_model, blob_split):
    cfg = AttackConfig(epsilon=0.1)
    seeds = train_seeds(blob_split, count=60)
    flipped_fgsm = sum(
        trained_model.predict_label(fgsm(trained_model, s, cfg)) != s.seed_label
        for s in seeds
    )
    flipped_pgd = sum(
        trained_model.predict_label(pgd(trained_model, s, cfg)) != s.seed_label
        for s in seeds
    )
    assert flipped_pgd >= flipped_fgsm


def test_pgd_stays_inside_ball_and_domain(trained_model, blob_split):
    cfg = AttackConfig(epsilon=0.05)
    for s in train_seeds(blob_split, count=20):
        adv = pgd(trained_model, s, cfg)
        assert oracles.within_ball(s.features, adv, cfg.epsilon, "linf")
        assert oracles.within_domain(adv)


def test_fgsm_partial_step_scale(trained_model, blob_split):
    # a half-epsilon step moves at most epsilon/2 per coordinate
    cfg = AttackConfig(epsilon=0.05)
    s = train_seeds(blob_split, count=1)[0]
    adv = fgsm(trained_model, s, cfg, step_size=0.025)
    assert np.max(np.abs(adv - s.features)) <= 0.025 + 1e-12


def test_build_universe_contents(trained_model, blob_split):
    train_ds, _, _ = blob_split
    data = train_ds.subset(np.arange(30))
    cfg = AttackConfig(epsilon=0.1)
    pool = build_universe(trained_model, data, cfg, 25,
                          np.random.default_rng(1), CCParams(k=5, delta=0.01))
    assert len(pool) > 0
    for case in pool.flatten():
        seed = pool.seeds[case.seed_id]
        assert trained_model.predict_label(case.data) == case.adversarial_label
        assert case.adversarial_label != seed.seed_label
        assert oracles.within_ball(seed.features, case.data, cfg.epsilon, "linf")
        assert oracles.within_domain(case.data)
        assert 0.0 <= case.cc <= 1.0
    assert set(pool.seeds) == set(range(30))


def test_build_universe_deterministic(trained_model, blob_split):
    train_ds, _, _ = blob_split
    data = train_ds.subset(np.arange(20))
    cfg = AttackConfig(epsilon=0.1)

    def run():
        pool = build_universe(trained_model, data, cfg, 15,
                              np.random.default_rng(2), CCParams(k=5, delta=0.01))
        return [(c.seed_id, c.data.tobytes(), c.cc) for c in pool.flatten()]

    assert run() == run()


def test_build_universe_requires_labels(trained_model):
    data = Dataset(np.random.default_rng(0).random((5, 4)), None, 3)
    with pytest.raises(ValueError):
        build_universe(trained_model, data, AttackConfig(), 5)


def test_build_universe_empty_warns():
    # constant model: argmax is always class 0, seeds labeled 0 never flip
    from clover.nn import MLP

    model = MLP([np.zeros((2, 2))], [np.array([1.0, 0.0])])
    data = Dataset(np.random.default_rng(3).random((4, 2)),
                   np.zeros(4, dtype=int), 2)
    with pytest.warns(UserWarning, match="universe is empty"):
        pool = build_universe(model, data, AttackConfig(), 5,
                              np.random.default_rng(0))
    assert len(pool) == 0


def test_build_universe_zero_count_silent(trained_model, blob_split):
    train_ds, _, _ = blob_split
    data = train_ds.subset(np.arange(5))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        pool = build_universe(trained_model, data, AttackConfig(), 0,
                              np.random.default_rng(0))
    assert len(pool) == 0
