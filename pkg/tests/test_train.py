import numpy as np
import pytest

from roboka.checkpoint import save_checkpoint
from roboka.data import make_split, synth_dataset
from roboka.errors import ConfigError, DataError
from roboka.model import build_model, model_forward
from roboka.train import (
    TrainConfig,
    cross_validate,
    evaluate,
    metrics_from_counts,
    train_model,
)

from oracles import naive_metrics


def records_for(seed=0, n=20, **kw):
    args = dict(d_s=8, d_t=8, t_range=(6, 14), coupling=0.9, noise=0.1, seed=seed)
    args.update(kw)
    return synth_dataset(n, **args)


# --- metrics ---------------------------------------------------------------------


def test_metrics_frozen_example():
    report = metrics_from_counts(tp=8, fp=3, tn=7, fn=2)
    d = report.to_dict()
    assert d["unwanted_recall"] == pytest.approx(80.0, abs=1e-12)
    assert d["macro_recall"] == pytest.approx(75.0, abs=1e-12)
    # per-class F1 16/21 and 14/19, averaged then scaled, from the oracle
    assert d["macro_f1"] == pytest.approx(74.93734335839599, abs=1e-12)


def test_metrics_match_oracle_on_random_matrices_exactly():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        tp, fp, tn, fn = (int(v) for v in rng.integers(0, 40, 4))
        if tp + fp + tn + fn == 0:
            continue
        report = metrics_from_counts(tp, fp, tn, fn)
        oracle = naive_metrics(tp, fp, tn, fn)
        assert report.macro_recall == oracle["macro_recall"]
        assert report.macro_f1 == oracle["macro_f1"]
        assert report.unwanted_recall == oracle["unwanted_recall"]


def test_metrics_zero_denominator_convention():
    report = metrics_from_counts(tp=0, fp=0, tn=5, fn=0)
    assert report.unwanted_recall == 0.0
    assert report.macro_recall == 0.5
    report = metrics_from_counts(tp=0, fp=0, tn=0, fn=0)
    assert report.macro_f1 == 0.0


def test_t4_report_suppresses_precision_based_metrics():
    report = metrics_from_counts(tp=7, fp=0, tn=0, fn=3, protocol="T4")
    d = report.to_dict()
    assert d["macro_recall"] is None and d["macro_f1"] is None
    assert d["unwanted_recall"] == pytest.approx(70.0)


def test_counts_sum_to_dataset_size():
    recs = records_for(n=10)
    model = build_model("concat", 8, 8, seed=0)
    report = evaluate(model, recs, "T3")
    assert report.tp + report.fp + report.tn + report.fn == len(recs)


def test_noise_free_data_is_separable_and_perfect_scores_100():
    recs = records_for(n=10, noise=0.0)
    cfg = TrainConfig(arch_tag="unimodal_audio", epochs=25, batch_size=8, seed=3)
    model, _ = train_model(cfg, recs)
    report = evaluate(model, recs, "T3")
    assert report.fp == 0 and report.fn == 0
    assert report.macro_recall == 1.0
    assert report.macro_f1 == 1.0
    assert report.unwanted_recall == 1.0


def test_evaluate_empty_test_set_rejected():
    model = build_model("concat", 8, 8, seed=0)
    with pytest.raises(DataError):
        evaluate(model, [], "T3")


def test_all_negative_predictions_on_positive_only_test_give_zero_recall():
    recs = [r for r in records_for(n=10) if r.label == 1]
    model = build_model("concat", 8, 8, seed=0)
    for arr in model.parameters().values():
        arr[...] = 0.0
    model.components["clf"].bias[...] = -5.0  # always predict legitimate
    report = evaluate(model, recs, "T4")
    assert report.unwanted_recall == 0.0


# --- training loop ----------------------------------------------------------------


def test_epochs_zero_returns_initialization():
    recs = records_for(n=6)
    cfg = TrainConfig(arch_tag="concat", epochs=0, batch_size=4, seed=5)
    model, log = train_model(cfg, recs)
    init = build_model("concat", 8, 8, seed=5)
    for (n1, a1), (n2, a2) in zip(model.parameters().items(), init.parameters().items()):
        assert n1 == n2 and np.array_equal(a1, a2)
    assert log == []


def test_contrastive_objective_needs_batch_of_two():
    cfg = TrainConfig(arch_tag="roboka", objective="uncertainty", batch_size=1)
    with pytest.raises(ConfigError):
        cfg.validate()


def test_unimodal_with_contrastive_objective_rejected():
    cfg = TrainConfig(arch_tag="unimodal_audio", objective="sum_c_bce")
    with pytest.raises(ConfigError):
        cfg.validate()


def test_separable_data_reaches_high_train_accuracy():
    recs = records_for(n=20, coupling=0.9, noise=0.1)
    cfg = TrainConfig(arch_tag="roboka", epochs=30, batch_size=8, seed=1)
    model, log = train_model(cfg, recs)
    fp = model_forward(model, [r.audio for r in recs], [r.text for r in recs])
    acc = np.mean((fp.logits >= 0) == np.array([r.label for r in recs]))
    assert acc >= 0.99
    assert len(log) == 30 * 5  # 40 records, batches of 8 -> 5 steps per epoch


def test_training_is_deterministic_byte_for_byte(tmp_path):
    recs = records_for(n=8)
    cfg = TrainConfig(arch_tag="roboka", epochs=3, batch_size=8, seed=7)
    for name in ("a", "b"):
        model, _ = train_model(cfg, recs)
        save_checkpoint(model, tmp_path / f"{name}.rbka")
    assert (tmp_path / "a.rbka").read_bytes() == (tmp_path / "b.rbka").read_bytes()


def test_log_rows_have_telemetry_fields():
    recs = records_for(n=8)
    cfg = TrainConfig(arch_tag="roboka", epochs=2, batch_size=8, seed=9)
    _, log = train_model(cfg, recs)
    assert all(set(row) == {"step", "l_c", "l_bce", "w_c", "w_bce", "total"} for row in log)
    assert [row["step"] for row in log] == list(range(len(log)))
    assert all(row["w_c"] > 0 and np.isfinite(row["total"]) for row in log)


def test_uncertainty_weights_stay_finite_and_positive():
    recs = records_for(n=12)
    cfg = TrainConfig(arch_tag="roboka", epochs=6, batch_size=8, seed=11)
    _, log = train_model(cfg, recs)
    for row in log:
        assert 0 < row["w_c"] < np.inf
        assert 0 < row["w_bce"] < np.inf


def test_early_stopping_restores_best_model():
    recs = records_for(n=16, seed=2)
    val = records_for(n=8, seed=3)
    cfg = TrainConfig(arch_tag="concat", epochs=40, batch_size=8, seed=13, patience=3)
    model, log = train_model(cfg, recs, val_records=val)
    # patience can only shorten training
    assert len(log) <= 40 * 4


# --- cross-validation ----------------------------------------------------------------


def test_cross_validation_validates_each_record_once():
    recs = records_for(n=25, dncr_fraction=0.0)
    plan = make_split(recs, "T3", seed=0)
    by_id = {r.id: r for r in recs}
    train = [by_id[i] for i in plan.train_ids]
    cfg = TrainConfig(arch_tag="concat", epochs=2, batch_size=8, seed=1)
    cv = cross_validate(cfg, train, plan.fold_assignments)
    assert len(cv.fold_reports) == 5
    total = sum(r.tp + r.fp + r.tn + r.fn for r in cv.fold_reports)
    assert total == len(train)


def test_cross_validation_summary_matches_fold_reports():
    recs = records_for(n=15, dncr_fraction=0.0)
    plan = make_split(recs, "T3", seed=1)
    by_id = {r.id: r for r in recs}
    train = [by_id[i] for i in plan.train_ids]
    cfg = TrainConfig(arch_tag="concat", epochs=1, batch_size=8, seed=2)
    cv = cross_validate(cfg, train, plan.fold_assignments)
    f1s = [r.macro_f1 for r in cv.fold_reports]
    assert cv.mean_macro_f1 == pytest.approx(np.mean(f1s))
    assert cv.std_macro_f1 == pytest.approx(np.std(f1s))
    assert cv.best_fold == int(np.argmax(f1s))


def test_cross_validation_thread_count_does_not_change_results():
    recs = records_for(n=15, dncr_fraction=0.0)
    plan = make_split(recs, "T3", seed=2)
    by_id = {r.id: r for r in recs}
    train = [by_id[i] for i in plan.train_ids]
    cfg = TrainConfig(arch_tag="concat", epochs=2, batch_size=8, seed=3)
    serial = cross_validate(cfg, train, plan.fold_assignments, threads=1)
    parallel = cross_validate(cfg, train, plan.fold_assignments, threads=4)
    assert serial.to_dict() == parallel.to_dict()


def test_degenerate_single_class_fold_does_not_crash():
    recs = [r for r in records_for(n=12) if r.label == 1][:10]
    folds = {r.id: i % 5 for i, r in enumerate(recs)}
    cfg = TrainConfig(arch_tag="concat", epochs=1, batch_size=4, seed=4)
    cv = cross_validate(cfg, recs, folds)
    assert len(cv.fold_reports) == 5


def test_k_larger_than_record_count_rejected():
    recs = records_for(n=2)[:3]
    cfg = TrainConfig(arch_tag="concat", epochs=1, batch_size=2, seed=5)
    with pytest.raises(ConfigError):
        cross_validate(cfg, recs, {r.id: 0 for r in recs}, k=10)
