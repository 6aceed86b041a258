import numpy as np
import pytest

from conftest import simple_spec
from poisonlab.errors import ValidationError
from poisonlab.evaluation import (DamageReport, collateral_damage, damage_from_predictions,
                                  read_reports_jsonl, run_matrix, summarize, summarize_models,
                                  target_damage, write_reports_jsonl)
from poisonlab.ingestion import split
from poisonlab.learners import LearnerConfig, constant_model, train, with_parameters
from poisonlab.mixture import Dataset, sample_dataset
from poisonlab.subgroups import component_schema, derive_subgroups, with_component_annotations

LOGREG = LearnerConfig("logistic_regression")


def threshold_model(w, b):
    return with_parameters(constant_model(LOGREG, 2), np.array([w, 0.0, b]))


def line_data(labels):
    x = np.arange(10) - 4.5
    return Dataset(np.column_stack([x, np.zeros(10)]), np.asarray(labels), np.zeros(10, dtype=int))


def test_target_damage_arithmetic():
    # clean predicts x > 0 (9/10 right); poisoned predicts x < -2 (3/10 right)
    val = line_data([1, 0, 0, 0, 0, 1, 1, 1, 1, 1])
    clean, poisoned = threshold_model(1.0, 0.0), threshold_model(-1.0, -2.0)
    assert abs(target_damage(clean, poisoned, val) - 0.6) < 1e-12
    assert target_damage(clean, clean, val) == 0.0
    assert collateral_damage(clean, clean, val) == 0.0
    assert -1 <= collateral_damage(poisoned, clean, val) <= 1


def test_empty_validation_sets_raise():
    empty = line_data([0] * 10).take(np.array([], dtype=int))
    m = threshold_model(1.0, 0.0)
    with pytest.raises(ValidationError):
        target_damage(m, m, empty)
    with pytest.raises(ValidationError):
        collateral_damage(m, m, empty)


def deterministic_setup(k=5, n=400, seed=0):
    spec = simple_spec([1 / k] * k, [float(i % 2) for i in range(k)])
    ds = with_component_annotations(sample_dataset(spec, n, seed), k)
    tr, va = split(ds, 0.2, seed=1)
    return tr, va, derive_subgroups(tr, component_schema(k), 0, 1, va)


def test_oracle_alpha_two_is_total_target_damage_and_no_collateral():
    tr, va, groups = deterministic_setup()
    res = run_matrix(tr, va, groups, [LearnerConfig("zero_local_oracle")], [2.0], seed=3)
    assert len(res.reports) == len(groups) and not res.failures
    for r in res.reports:
        assert r.clean_target_acc == 1.0 and r.poisoned_target_acc == 0.0
        assert r.target_damage == 1.0
        assert r.collateral_damage == 0.0


def test_report_invariants_hold_exactly(small_benchmark):
    _, tr, va, groups = small_benchmark
    res = run_matrix(tr, va, groups[:3], [LOGREG.with_seed(0)], [1.0, 2.0], seed=0)
    for r in res.reports:
        assert r.target_damage == r.clean_target_acc - r.poisoned_target_acc
        assert r.collateral_damage == r.clean_rest_acc - r.poisoned_rest_acc
        assert -1 <= r.target_damage <= 1 and -1 <= r.collateral_damage <= 1


def test_grid_cardinality_and_alpha_zero(small_benchmark):
    _, tr, va, groups = small_benchmark
    ladder = [LearnerConfig("logistic_regression", epochs=5), LearnerConfig("mlp", (4,), epochs=5),
              LearnerConfig("zero_local_oracle")]
    res = run_matrix(tr, va, groups[:5], ladder, [0.0, 1.0], seed=1)
    assert len(res.reports) == 30
    zero = [r for r in res.reports if r.alpha == 0.0]
    assert len(zero) == 15 and all(r.target_damage == 0.0 and r.budget == 0 for r in zero)


def test_recomputable_from_predictions(small_benchmark):
    _, tr, va, groups = small_benchmark
    cfg = LearnerConfig("mlp", (6,), epochs=5)
    res = run_matrix(tr, va, groups[:1], [cfg], [2.0], seed=4)
    rep = res.reports[0]
    from poisonlab.evaluation import train_seed
    from poisonlab.poisoning import apply_plan, plan_attack
    from poisonlab.evaluation import attack_seed
    c = cfg.with_seed(train_seed(4, cfg.tag, 0))
    clean = train(c, tr)
    poisoned = train(c, apply_plan(tr, plan_attack(groups[0], 2.0, attack_seed(4, groups[0].id, 0))))
    again = damage_from_predictions(groups[0], 2.0, cfg.tag, va, clean.predict_dataset(va),
                                    poisoned.predict_dataset(va))
    assert again.target_damage == rep.target_damage
    assert again.collateral_damage == rep.collateral_damage


def test_failures_are_recorded_not_raised(small_benchmark):
    _, tr, va, groups = small_benchmark
    bad = LearnerConfig("mlp", (4,), epochs=3, learning_rate=1e150)
    good = LearnerConfig("logistic_regression", epochs=3)
    with np.errstate(all="ignore"):
        res = run_matrix(tr, va, groups[:2], [bad, good], [1.0], seed=0)
    assert len(res.reports) + len(res.failures) == 4
    assert len(res.failures) == 2 and all(f.model_tag == bad.tag for f in res.failures)
    assert "TrainingError" in res.failures[0].error


def test_parallel_matches_serial(small_benchmark):
    _, tr, va, groups = small_benchmark
    ladder = [LearnerConfig("logistic_regression", epochs=4), LearnerConfig("mlp", (5,), epochs=4)]
    a = run_matrix(tr, va, groups[:3], ladder, [1.0, 2.0], repeats=2, seed=8)
    b = run_matrix(tr, va, groups[:3], ladder, [1.0, 2.0], repeats=2, seed=8, workers=2)
    assert a.reports == b.reports


def test_summaries(small_benchmark):
    _, tr, va, groups = small_benchmark
    res = run_matrix(tr, va, groups[:2], [LearnerConfig("mlp", (5,), epochs=4)], [2.0],
                     repeats=3, seed=2)
    rows = summarize(res.reports)
    assert len(rows) == 2 and all(r["repeats"] == 3 for r in rows)
    for row in rows:
        td = [r.target_damage for r in res.reports if r.subgroup_id == row["subgroup_id"]]
        assert abs(row["td_mean"] - np.mean(td)) < 1e-15
        assert abs(row["td_std"] - np.std(td)) < 1e-15
    (m,) = summarize_models(res.reports)
    sizes = np.array([r["subgroup_size"] for r in rows], dtype=float)
    tds = np.array([r["td_mean"] for r in rows])
    assert abs(m["td_mean"] - tds.mean()) < 1e-15
    assert abs(m["td_weighted_mean"] - (sizes @ tds) / sizes.sum()) < 1e-15


def test_grid_validation(small_benchmark):
    _, tr, va, groups = small_benchmark
    with pytest.raises(ValidationError):
        run_matrix(tr, va, [], [LOGREG], [1.0])
    with pytest.raises(ValidationError):
        run_matrix(tr, va, groups, [LOGREG, LOGREG], [1.0])
    with pytest.raises(ValidationError):
        run_matrix(tr, va, groups, [LOGREG], [-1.0])


def test_jsonl_round_trip(tmp_path):
    r = DamageReport(3, 2.0, "logreg", 0.9, 0.3, 0.6, 0.8, 0.8, 0.0, 10, 40, 26, 3, 0, 11, 12)
    write_reports_jsonl([r, r], tmp_path / "r.jsonl")
    assert read_reports_jsonl(tmp_path / "r.jsonl") == [r, r]
