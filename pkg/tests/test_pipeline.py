import json
import warnings
from dataclasses import replace

import numpy as np
import pytest

import clover.pipeline as pipeline_mod
from clover.cases import TestSuite
from clover.nn import load_model
from clover.pipeline import (
    GRID_COLUMNS,
    PipelineConfig,
    apply_overrides,
    derive_seed,
    retrain,
    role_rng,
    run_experiment_grid,
    run_pipeline,
)
from clover.select import DEFAULT_CC_RANGES
from clover.serialize import read_jsonl


def tiny_config(**overrides):
    cfg = PipelineConfig()
    cfg = apply_overrides(cfg, {
        "data.dimension": 4,
        "data.samples_per_class": 30,
        "train.hidden_dims": (12,),
        "train.epochs": 8,
        "fuzz.budget_attempts": 120,
        "retrain.epochs": 3,
        "n": 12,
        "per_attacker_count": 40,
    })
    return apply_overrides(cfg, overrides) if overrides else cfg


ARTIFACTS = [
    "config.json", "model_before.json", "model_after.json", "pool.jsonl",
    "suite.jsonl", "universe.jsonl", "campaign.log.jsonl", "report.json",
]


def test_run_pipeline_smoke_and_artifacts(tmp_path):
    out = tmp_path / "run"
    report = run_pipeline(tiny_config(out_dir=str(out)))
    assert report.status == "ok"
    assert report.suite_size == 12
    assert report.pool_size > 0
    assert report.universe_size > 0
    assert 0.0 <= report.mean_cc <= 1.0
    assert report.timing["fuzz_attempts"] == 120
    assert report.timing["train_epochs"] == 8
    assert report.timing["retrain_epochs"] == 3
    for name in ARTIFACTS:
        assert (out / name).exists(), name
    on_disk = json.loads((out / "report.json").read_text())
    assert on_disk["status"] == "ok"
    assert "seconds" not in on_disk
    assert on_disk["config"] == json.loads(json.dumps(report.config))
    assert "out_dir" not in on_disk["config"]
    load_model(out / "model_after.json")  # parses back
    assert len(list(read_jsonl(out / "suite.jsonl"))) == 12 + 1  # + header


def test_improvement_is_exact_difference():
    report = run_pipeline(tiny_config())
    assert report.improvement == report.robust_acc_after - report.robust_acc_before


def test_validate_rejects_bad_values():
    with pytest.raises(ValueError):
        run_pipeline(tiny_config(n=0))
    with pytest.raises(ValueError):
        run_pipeline(tiny_config(strategy="mystery"))
    with pytest.raises(ValueError):
        run_pipeline(tiny_config(cc_section=len(DEFAULT_CC_RANGES)))
    with pytest.raises(ValueError):
        tiny_config(selector="fancy").validate()


def test_empty_pool_reports_no_test_cases(tmp_path):
    out = tmp_path / "empty"
    cfg = tiny_config(
        strategy="fgsm_pgd_universe", per_attacker_count=0, out_dir=str(out)
    )
    with pytest.warns(UserWarning):
        report = run_pipeline(cfg)
    assert report.status == "no-test-cases"
    assert report.pool_size == 0
    assert report.universe_size == 0
    assert report.suite_size == 0
    assert report.robust_acc_before is None
    assert report.robust_acc_after is None
    assert report.improvement is None
    assert report.timing["retrain_epochs"] == 0
    before = (out / "model_before.json").read_bytes()
    after = (out / "model_after.json").read_bytes()
    assert before == after


def test_empty_suite_keeps_model(monkeypatch):
    monkeypatch.setattr(
        pipeline_mod, "_select_suite",
        lambda cfg, pool, model: TestSuite([], cfg.selector, {"n": cfg.n}),
    )
    with pytest.warns(UserWarning):
        report = run_pipeline(tiny_config())
    assert report.status == "ok"
    assert report.suite_size == 0
    assert report.improvement == 0.0
    assert report.test_acc_after == report.test_acc_before
    assert report.timing["retrain_epochs"] == 0


def test_attack_strategy_smoke():
    report = run_pipeline(tiny_config(strategy="fgsm_pgd_universe"))
    assert report.status == "ok"
    assert report.timing["fuzz_attempts"] == 0
    assert report.pool_size > 0


def test_retrain_zero_epochs_is_identity(trained_model, blob_split):
    train_ds, _, _ = blob_split
    suite = TestSuite([], "context", {"n": 1}, seed_labels={})
    out = retrain(trained_model, suite, train_ds, 0, 0.05,
                  np.random.default_rng(0))
    assert out is not trained_model
    for w_a, w_b in zip(out.weights, trained_model.weights):
        assert np.array_equal(w_a, w_b)


def test_retrain_missing_label_rejected(trained_model, blob_split):
    from clover.cases import TestCase

    train_ds, _, _ = blob_split
    case = TestCase(np.zeros(4), seed_id=99, adversarial_label=1, cc=0.5)
    suite = TestSuite([case], "context", {"n": 1}, seed_labels={})
    with pytest.raises(ValueError, match="no label"):
        retrain(trained_model, suite, train_ds, 1, 0.05,
                np.random.default_rng(0))


def test_retrain_needs_labeled_data(trained_model, blob_split):
    from clover.data import Dataset

    train_ds, _, _ = blob_split
    unlabeled = Dataset(train_ds.X, None, train_ds.num_classes, "u")
    suite = TestSuite([], "context", {"n": 1}, seed_labels={})
    with pytest.raises(ValueError, match="labeled"):
        retrain(trained_model, suite, unlabeled, 1, 0.05,
                np.random.default_rng(0))


def test_grid_shares_stages_and_writes_csv(tmp_path):
    out = tmp_path / "grid"
    base = tiny_config()
    reports = run_experiment_grid(
        base, [{"selector": "context"}, {"selector": "random"}], out_dir=out
    )
    assert [r.status for r in reports] == ["ok", "ok"]
    pools = [
        (out / "variants" / f"variant-{i:02d}" / "pool.jsonl").read_bytes()
        for i in range(2)
    ]
    assert pools[0] == pools[1]  # variants reuse one fuzzing campaign
    lines = (out / "grid.csv").read_text().splitlines()
    assert lines[0].split(",") == GRID_COLUMNS
    assert len(lines) == 3
    assert lines[1].split(",")[1] == "context"
    assert lines[2].split(",")[1] == "random"


def test_grid_isolates_failures(tmp_path):
    base = tiny_config()
    reports = run_experiment_grid(
        base, [{"selector": "random"}, {"n": -5}], out_dir=tmp_path / "g"
    )
    assert reports[0].status == "ok"
    assert reports[1].status.startswith("error: ValueError")
    lines = (tmp_path / "g" / "grid.csv").read_text().splitlines()
    assert len(lines) == 3


def test_grid_empty_variants():
    assert run_experiment_grid(tiny_config(), []) == []


def test_cc_section_restricts_suite(tmp_path):
    cache = pipeline_mod._StageCache()
    first = tiny_config(out_dir=str(tmp_path / "all"))
    run_pipeline(first, cache)
    records = list(read_jsonl(tmp_path / "all" / "pool.jsonl"))[1:]
    counts = [0] * len(DEFAULT_CC_RANGES)
    for rec in records:
        for idx, (lo, hi) in enumerate(DEFAULT_CC_RANGES):
            if rec["cc"] <= hi + 1e-12:
                counts[idx] += 1
                break
    section = max(range(len(counts)), key=counts.__getitem__)
    cfg = tiny_config(cc_section=section, out_dir=str(tmp_path / "sec"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # section may hold fewer than n
        run_pipeline(cfg, cache)
    suite = list(read_jsonl(tmp_path / "sec" / "suite.jsonl"))[1:]
    assert suite
    lo, hi = DEFAULT_CC_RANGES[section]
    for rec in suite:
        assert rec["cc"] <= hi + 1e-12
        if section > 0:
            assert rec["cc"] > lo - 1e-12


def test_apply_overrides_semantics():
    base = tiny_config()
    out = apply_overrides(base, {"fuzz.select_order": "lowest", "n": 5})
    assert out.fuzz.select_order == "lowest"
    assert out.n == 5
    assert base.fuzz.select_order == "highest"
    assert base.n == 12
    with pytest.raises(ValueError, match="unknown override"):
        apply_overrides(base, {"selektor": "context"})
    with pytest.raises(ValueError, match="unknown override"):
        apply_overrides(base, {"fuzz.wobble": 3})


def test_config_echo_hides_out_dir():
    a = tiny_config(out_dir="/tmp/a").echo()
    b = tiny_config(out_dir="/tmp/b").echo()
    assert a == b
    assert "out_dir" not in a
    assert a["data"]["dimension"] == 4


def test_role_streams_are_independent():
    draws = {role: role_rng(3, role).random() for role in range(1, 10)}
    assert len(set(draws.values())) == len(draws)
    assert role_rng(3, 4).random() == draws[4]
    assert derive_seed(3, 4) == derive_seed(3, 4)
    assert derive_seed(3, 4) != derive_seed(3, 5)
    assert derive_seed(3, 4) != derive_seed(4, 4)


def test_two_runs_are_byte_identical(tmp_path):
    paths = []
    for name in ("a", "b"):
        out = tmp_path / name
        run_pipeline(tiny_config(out_dir=str(out)))
        paths.append(out)
    for name in ("report.json", "pool.jsonl", "suite.jsonl", "config.json"):
        assert (paths[0] / name).read_bytes() == (paths[1] / name).read_bytes()
