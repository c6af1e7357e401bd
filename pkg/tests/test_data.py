import hashlib
import json

import numpy as np
import pytest

from roboka.data import (
    DNCR_ENGINE,
    CallRecord,
    SplitPlan,
    dataset_hash,
    load_dataset,
    make_split,
    synth_dataset,
    write_dataset,
)
from roboka.errors import DataError, SplitError


def small_synth(seed=0, n=30, **kw):
    args = dict(d_s=6, d_t=7, t_range=(5, 12), coupling=0.5, noise=0.4, seed=seed)
    args.update(kw)
    return synth_dataset(n, **args)


# --- on-disk round trip ---------------------------------------------------------


def test_write_then_load_roundtrip_bit_exact(tmp_path):
    records = small_synth()
    write_dataset(records, tmp_path)
    loaded = load_dataset(tmp_path)
    assert len(loaded) == len(records)
    for a, b in zip(records, loaded):
        assert a.id == b.id and a.label == b.label
        assert (a.speaker, a.engine, a.emotion, a.transcript_id) == (
            b.speaker,
            b.engine,
            b.emotion,
            b.transcript_id,
        )
        assert hashlib.sha256(a.audio.tobytes()).digest() == hashlib.sha256(b.audio.tobytes()).digest()
        assert np.array_equal(a.text, b.text)
        assert b.audio.dtype == np.float32


def test_empty_manifest_loads_as_empty_dataset(tmp_path):
    (tmp_path / "manifest.jsonl").write_text("")
    assert load_dataset(tmp_path) == []


def test_missing_blob_names_the_record(tmp_path):
    records = small_synth(n=3)
    write_dataset(records, tmp_path)
    (tmp_path / "blobs" / f"{records[0].id}_audio.f32").unlink()
    with pytest.raises(DataError, match=records[0].id):
        load_dataset(tmp_path)


def test_shape_mismatch_names_the_record(tmp_path):
    records = small_synth(n=3)
    write_dataset(records, tmp_path)
    blob = tmp_path / "blobs" / f"{records[1].id}_text.f32"
    blob.write_bytes(blob.read_bytes()[:-4])
    with pytest.raises(DataError, match=records[1].id):
        load_dataset(tmp_path)


def test_duplicate_id_rejected(tmp_path):
    records = small_synth(n=2)
    write_dataset(records, tmp_path)
    manifest = tmp_path / "manifest.jsonl"
    lines = manifest.read_text().splitlines()
    manifest.write_text("\n".join(lines + [lines[0]]) + "\n")
    with pytest.raises(DataError, match="duplicate"):
        load_dataset(tmp_path)


def test_unknown_label_rejected(tmp_path):
    records = small_synth(n=2)
    write_dataset(records, tmp_path)
    manifest = tmp_path / "manifest.jsonl"
    lines = manifest.read_text().splitlines()
    row = json.loads(lines[0])
    row["label"] = 3
    lines[0] = json.dumps(row)
    manifest.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="label"):
        load_dataset(tmp_path)


def test_dataset_hash_is_content_sensitive(tmp_path):
    records = small_synth(n=4)
    write_dataset(records, tmp_path)
    h1 = dataset_hash(tmp_path)
    blob = tmp_path / "blobs" / f"{records[0].id}_audio.f32"
    raw = bytearray(blob.read_bytes())
    raw[0] ^= 1
    blob.write_bytes(bytes(raw))
    assert dataset_hash(tmp_path) != h1


# --- synthetic generator --------------------------------------------------------


def test_synth_is_deterministic(tmp_path):
    a = small_synth(seed=42)
    b = small_synth(seed=42)
    for ra, rb in zip(a, b):
        assert ra.id == rb.id
        assert np.array_equal(ra.audio, rb.audio)
        assert np.array_equal(ra.text, rb.text)
        assert (ra.speaker, ra.engine, ra.emotion) == (rb.speaker, rb.engine, rb.emotion)
    d1, d2 = tmp_path / "d1", tmp_path / "d2"
    write_dataset(a, d1)
    write_dataset(b, d2)
    assert dataset_hash(d1) == dataset_hash(d2)


def test_synth_counts_and_groups():
    records = small_synth(n=40)
    assert len(records) == 80
    assert sum(r.label for r in records) == 40
    dncr = [r for r in records if r.engine == DNCR_ENGINE]
    assert len(dncr) == 8  # default 20% of the positive class
    assert all(r.label == 1 for r in dncr)
    assert {r.engine for r in records if r.engine != DNCR_ENGINE} <= {
        "bark",
        "openai_tts",
        "speecht5",
        "xtts",
    }
    lengths = {r.audio.shape[0] for r in records} | {r.text.shape[0] for r in records}
    assert min(lengths) >= 5 and max(lengths) <= 12


def test_synth_coupling_zero_decorrelates_modalities():
    # cross-covariance of paired residuals, judged against the permutation
    # floor (pairing destroyed within class) to absorb finite-sample noise
    def ratio(records, rng, n_perm=20):
        paired = []
        floor = []
        for label in (0, 1):
            grp = [r for r in records if r.label == label and r.engine != DNCR_ENGINE]
            a = np.stack([r.audio.mean(axis=0) for r in grp])
            t = np.stack([r.text.mean(axis=0) for r in grp])
            a -= a.mean(axis=0)
            t -= t.mean(axis=0)
            paired.append(np.linalg.norm(a.T @ t / len(grp)))
            floor.append(
                np.mean(
                    [
                        np.linalg.norm(a.T @ t[rng.permutation(len(grp))] / len(grp))
                        for _ in range(n_perm)
                    ]
                )
            )
        return np.mean(paired) / np.mean(floor)

    rng = np.random.default_rng(0)
    kwargs = dict(n=2000, d_s=16, d_t=16, t_range=(8, 12), noise=1.0, dncr_fraction=0.0)
    ind = np.mean([ratio(small_synth(coupling=0.0, seed=s, **kwargs), rng) for s in (1, 2, 3)])
    cpl = np.mean([ratio(small_synth(coupling=0.9, seed=s, **kwargs), rng) for s in (1, 2, 3)])
    assert ind < 1.25  # indistinguishable from unpaired
    assert cpl > 1.30  # pairing carries real signal


def test_synth_validates_arguments():
    with pytest.raises(DataError):
        small_synth(n=0)
    with pytest.raises(DataError):
        small_synth(coupling=1.5)
    with pytest.raises(DataError):
        small_synth(t_range=(0, 4))


# --- splits ----------------------------------------------------------------------


def leakage(records, plan, axis):
    by_id = {r.id: r for r in records}
    train_vals = {getattr(by_id[i], axis) for i in plan.train_ids}
    test_vals = {getattr(by_id[i], axis) for i in plan.test_ids}
    return train_vals & test_vals


def test_t3_sizes_and_folds():
    records = small_synth(n=50, dncr_fraction=0.0)
    plan = make_split(records, "T3", seed=0)
    assert len(plan.test_ids) == 20
    assert len(plan.train_ids) == 80
    sizes = [list(plan.fold_assignments.values()).count(f) for f in range(5)]
    assert sizes == [16, 16, 16, 16, 16]
    assert set(plan.fold_assignments) == set(plan.train_ids)


def test_t3_is_label_stratified():
    records = small_synth(n=50, dncr_fraction=0.0)
    plan = make_split(records, "T3", seed=3)
    by_id = {r.id: r for r in records}
    test_labels = [by_id[i].label for i in plan.test_ids]
    assert sum(test_labels) == 10


def test_t1_engine_holdout_no_leakage():
    records = small_synth(n=60)
    plan = make_split(records, "T1", seed=1)
    assert not leakage(records, plan, "engine")
    assert len(plan.test_ids) > 0 and len(plan.train_ids) > 0


def test_t1_greedy_picks_exact_twenty_percent_engine():
    # engine sizes 20 / 80: the greedy rule must hold out exactly the small one
    records = small_synth(n=50, dncr_fraction=0.0)
    for i, rec in enumerate(records):
        rec.engine = "bark" if i < 20 else "xtts"
    plan = make_split(records, "T1", seed=0)
    by_id = {r.id: r for r in records}
    assert {by_id[i].engine for i in plan.test_ids} == {"bark"}
    assert len(plan.test_ids) == 20


def test_t2_emotion_holdout_no_leakage():
    records = small_synth(n=60)
    plan = make_split(records, "T2", seed=2)
    assert not leakage(records, plan, "emotion")


def test_t4_positive_only_dncr_test():
    records = small_synth(n=40)
    plan = make_split(records, "T4", seed=0)
    by_id = {r.id: r for r in records}
    assert all(by_id[i].label == 1 and by_id[i].engine == DNCR_ENGINE for i in plan.test_ids)
    assert all(by_id[i].engine != DNCR_ENGINE for i in plan.train_ids)


def test_t4_without_dncr_records_is_infeasible():
    records = small_synth(n=10, dncr_fraction=0.0)
    with pytest.raises(SplitError):
        make_split(records, "T4", seed=0)


def test_single_group_holdout_is_infeasible():
    records = small_synth(n=10, dncr_fraction=0.0)
    for rec in records:
        rec.engine = "bark"
    with pytest.raises(SplitError):
        make_split(records, "T1", seed=0)


def test_split_determinism():
    records = small_synth(n=30)
    a = make_split(records, "T3", seed=9)
    b = make_split(records, "T3", seed=9)
    assert a.to_dict() == b.to_dict()
    c = make_split(records, "T3", seed=10)
    assert a.test_ids != c.test_ids


def test_dncr_records_never_enter_t1_t2_t3():
    records = small_synth(n=40)
    by_id = {r.id: r for r in records}
    for protocol in ("T1", "T2", "T3"):
        plan = make_split(records, protocol, seed=4)
        used = set(plan.train_ids) | set(plan.test_ids)
        assert all(by_id[i].engine != DNCR_ENGINE for i in used)


def test_fold_balance_across_protocols():
    records = small_synth(n=37, seed=5)
    for protocol in ("T1", "T2", "T3", "T4"):
        plan = make_split(records, protocol, seed=6)
        counts = [list(plan.fold_assignments.values()).count(f) for f in range(5)]
        assert sum(counts) == len(plan.train_ids)
        assert max(counts) - min(counts) <= 1


def test_split_plan_json_roundtrip():
    records = small_synth(n=20)
    plan = make_split(records, "T1", seed=7)
    again = SplitPlan.from_dict(json.loads(json.dumps(plan.to_dict())))
    assert again.to_dict() == plan.to_dict()


def test_empty_records_rejected():
    with pytest.raises(SplitError):
        make_split([], "T3", seed=0)
