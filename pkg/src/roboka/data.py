"""Dataset records, on-disk format, leakage-free splits, and the synthetic
paired-embedding generator used for desk-scale verification.

On-disk layout of a dataset directory:

    manifest.jsonl   one JSON object per record: id, label, speaker, engine,
                     emotion, transcript_id, audio_path, audio_shape [T, d],
                     text_path, text_shape
    blobs/*.f32      raw row-major little-endian float32 tensors

Split protocols:

    T1  hold out TTS engine(s) whose record total is closest to 20%
    T2  same rule on the emotion axis
    T3  random 20% holdout, stratified by label
    T4  test = every unwanted record with engine "dncr"; train = all
        non-dncr records

Records with engine "dncr" are reserved for T4 and excluded from T1-T3
entirely. Train records additionally receive a balanced 5-fold assignment.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, SplitError

PROTOCOLS = ("T1", "T2", "T3", "T4")
DNCR_ENGINE = "dncr"
N_FOLDS = 5

SYNTH_ENGINES = ("bark", "openai_tts", "speecht5", "xtts")
SYNTH_EMOTIONS = (
    "surprised",
    "angry",
    "sad",
    "joyful",
    "anxious",
    "hopeful",
    "confident",
    "disappointed",
)
SYNTH_N_SPEAKERS = 14


@dataclass
class CallRecord:
    """One call: paired audio/text embedding sequences plus group metadata."""

    id: str
    audio: np.ndarray  # (T_s, d_s) float32
    text: np.ndarray  # (T_t, d_t) float32
    label: int  # 0 legitimate, 1 unwanted
    speaker: str
    engine: str
    emotion: str
    transcript_id: str


@dataclass
class SplitPlan:
    protocol: str
    train_ids: list[str]
    test_ids: list[str]
    fold_assignments: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "train_ids": self.train_ids,
            "test_ids": self.test_ids,
            "fold_assignments": self.fold_assignments,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        try:
            return cls(
                protocol=d["protocol"],
                train_ids=list(d["train_ids"]),
                test_ids=list(d["test_ids"]),
                fold_assignments={k: int(v) for k, v in d["fold_assignments"].items()},
            )
        except KeyError as exc:
            raise DataError(f"split plan missing field {exc}") from exc


def _validate_record_meta(row: dict, seen: set[str]) -> None:
    rid = row.get("id")
    if not isinstance(rid, str) or not rid:
        raise DataError(f"record with missing or empty id: {row!r}")
    if rid in seen:
        raise DataError(f"duplicate record id {rid!r}")
    if row.get("label") not in (0, 1):
        raise DataError(f"record {rid}: unknown label {row.get('label')!r}")


def _load_blob(base: Path, rel: str, shape, rid: str, what: str) -> np.ndarray:
    path = base / rel
    if not path.is_file():
        raise DataError(f"record {rid}: missing {what} blob {rel}")
    t, d = int(shape[0]), int(shape[1])
    if t < 1 or d < 1:
        raise DataError(f"record {rid}: invalid {what} shape {shape}")
    raw = path.read_bytes()
    if len(raw) != t * d * 4:
        raise DataError(
            f"record {rid}: {what} blob {rel} holds {len(raw)} bytes, "
            f"manifest shape {shape} needs {t * d * 4}"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(t, d)


def load_dataset(path) -> list[CallRecord]:
    """Load and validate every record in a dataset directory."""
    base = Path(path)
    manifest = base / "manifest.jsonl"
    if not manifest.is_file():
        raise DataError(f"no manifest.jsonl under {base}")
    records: list[CallRecord] = []
    seen: set[str] = set()
    d_s = d_t = None
    for lineno, line in enumerate(manifest.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"manifest line {lineno}: bad JSON ({exc})") from exc
        _validate_record_meta(row, seen)
        rid = row["id"]
        seen.add(rid)
        audio = _load_blob(base, row["audio_path"], row["audio_shape"], rid, "audio")
        text = _load_blob(base, row["text_path"], row["text_shape"], rid, "text")
        if d_s is None:
            d_s, d_t = audio.shape[1], text.shape[1]
        elif audio.shape[1] != d_s or text.shape[1] != d_t:
            raise DataError(
                f"record {rid}: embedding dims ({audio.shape[1]}, {text.shape[1]}) "
                f"differ from the dataset's ({d_s}, {d_t})"
            )
        records.append(
            CallRecord(
                id=rid,
                audio=audio,
                text=text,
                label=int(row["label"]),
                speaker=str(row.get("speaker", "")),
                engine=str(row.get("engine", "")),
                emotion=str(row.get("emotion", "")),
                transcript_id=str(row.get("transcript_id", "")),
            )
        )
    return records


def write_dataset(records: list[CallRecord], path) -> None:
    """Write records in the manifest.jsonl + f32 blob layout."""
    base = Path(path)
    (base / "blobs").mkdir(parents=True, exist_ok=True)
    lines = []
    for rec in records:
        audio_rel = f"blobs/{rec.id}_audio.f32"
        text_rel = f"blobs/{rec.id}_text.f32"
        (base / audio_rel).write_bytes(np.ascontiguousarray(rec.audio, dtype="<f4").tobytes())
        (base / text_rel).write_bytes(np.ascontiguousarray(rec.text, dtype="<f4").tobytes())
        lines.append(
            json.dumps(
                {
                    "id": rec.id,
                    "label": int(rec.label),
                    "speaker": rec.speaker,
                    "engine": rec.engine,
                    "emotion": rec.emotion,
                    "transcript_id": rec.transcript_id,
                    "audio_path": audio_rel,
                    "audio_shape": [int(s) for s in rec.audio.shape],
                    "text_path": text_rel,
                    "text_shape": [int(s) for s in rec.text.shape],
                },
                sort_keys=True,
            )
        )
    (base / "manifest.jsonl").write_text("\n".join(lines) + ("\n" if lines else ""))


def dataset_hash(path) -> str:
    """SHA-256 over the manifest and every blob it references, in order."""
    base = Path(path)
    manifest = base / "manifest.jsonl"
    if not manifest.is_file():
        raise DataError(f"no manifest.jsonl under {base}")
    digest = hashlib.sha256()
    text = manifest.read_bytes()
    digest.update(text)
    for line in text.decode().splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        for key in ("audio_path", "text_path"):
            blob = base / row[key]
            if not blob.is_file():
                raise DataError(f"missing blob {row[key]}")
            digest.update(blob.read_bytes())
    return digest.hexdigest()


def _greedy_holdout(records: list[CallRecord], axis: str) -> set[str]:
    """Pick axis values whose record total lands closest to 20%.

    Candidates are visited largest group first (name breaks ties); a value is
    taken whenever it moves the running total strictly closer to the target.
    """
    counts: dict[str, int] = {}
    for rec in records:
        counts[getattr(rec, axis)] = counts.get(getattr(rec, axis), 0) + 1
    if len(counts) < 2:
        raise SplitError(f"need at least 2 distinct {axis} values, found {len(counts)}")
    target = 0.2 * len(records)
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    chosen: set[str] = set()
    total = 0
    for value, size in ordered:
        if abs(total + size - target) < abs(total - target):
            chosen.add(value)
            total += size
    if not chosen:
        chosen.add(min(ordered, key=lambda kv: abs(kv[1] - target))[0])
    if len(chosen) == len(counts):
        chosen.discard(ordered[-1][0])
    return chosen


def _stratified_take(
    records: list[CallRecord], fraction: float, rng: np.random.Generator
) -> set[str]:
    """Label-stratified random subset of round(fraction * n) ids."""
    n_take = int(round(fraction * len(records)))
    by_label: dict[int, list[str]] = {0: [], 1: []}
    for rec in records:
        by_label[rec.label].append(rec.id)
    base_take = {}
    remainders = []
    for label, ids in sorted(by_label.items()):
        exact = fraction * len(ids)
        base_take[label] = int(np.floor(exact))
        remainders.append((exact - base_take[label], -label))
    short = n_take - sum(base_take.values())
    for _, neg_label in sorted(remainders, reverse=True)[:short]:
        base_take[-neg_label] += 1
    taken: set[str] = set()
    for label, ids in sorted(by_label.items()):
        perm = rng.permutation(len(ids))
        taken.update(ids[i] for i in perm[: base_take[label]])
    return taken


def _assign_folds(train: list[CallRecord], rng: np.random.Generator) -> dict[str, int]:
    """Balanced 5-fold assignment, label-stratified via a running counter."""
    folds: dict[str, int] = {}
    counter = 0
    for label in (0, 1):
        ids = [rec.id for rec in train if rec.label == label]
        perm = rng.permutation(len(ids))
        for i in perm:
            folds[ids[i]] = counter % N_FOLDS
            counter += 1
    return folds


def make_split(records: list[CallRecord], protocol: str, seed: int) -> SplitPlan:
    """Deterministic split plan for one protocol; see the module docstring."""
    if protocol not in PROTOCOLS:
        raise SplitError(f"unknown protocol {protocol!r}")
    if not records:
        raise SplitError("cannot split an empty record list")
    rng = np.random.default_rng([int(seed), PROTOCOLS.index(protocol)])
    dncr = [rec for rec in records if rec.engine == DNCR_ENGINE]
    pool = [rec for rec in records if rec.engine != DNCR_ENGINE]

    if protocol == "T4":
        test_ids = [rec.id for rec in dncr if rec.label == 1]
        if not test_ids:
            raise SplitError("T4 needs unwanted records with engine 'dncr'")
        train = pool
    else:
        if not pool:
            raise SplitError(f"{protocol} has no non-dncr records to split")
        if protocol == "T3":
            held = _stratified_take(pool, 0.2, rng)
        else:
            axis = "engine" if protocol == "T1" else "emotion"
            values = _greedy_holdout(pool, axis)
            held = {rec.id for rec in pool if getattr(rec, axis) in values}
        test_ids = [rec.id for rec in pool if rec.id in held]
        train = [rec for rec in pool if rec.id not in held]
        if not train or not test_ids:
            raise SplitError(f"{protocol} produced an empty side")

    return SplitPlan(
        protocol=protocol,
        train_ids=[rec.id for rec in train],
        test_ids=test_ids,
        fold_assignments=_assign_folds(train, rng),
    )


def synth_dataset(
    n_per_class: int,
    d_s: int,
    d_t: int,
    t_range: tuple[int, int],
    coupling: float,
    noise: float,
    seed: int,
    dncr_fraction: float = 0.2,
) -> list[CallRecord]:
    """Synthetic paired-embedding corpus with controllable difficulty.

    The label lives in a k-dim latent space: each class has a latent center,
    and each record draws a shared latent around it (weight `coupling`) plus
    a modality-specific one (weight 1 - coupling). Each modality pushes its
    latent through a fixed mixing matrix and adds modality-specific nuisance
    plus per-step jitter, all scaled by `noise`; rows are then compressed
    elementwise by arcsinh (embedding coordinates are not raw Gaussians, so
    classifiers must calibrate per feature). The shared draw and the class
    signal occupy the same subspace, making cross-modal agreement
    label-relevant, while the dominant nuisance is modality-specific and
    independent, so a second modality genuinely reduces error. `noise` also
    controls modality dropout: with probability min(0.4, 0.3 * noise) a
    record's audio (independently, its text) swaps its latent for a
    label-free, unshared one. A `dncr_fraction` slice of the unwanted class
    becomes the out-of-domain pool: engine "dncr" and a shifted center.

    coupling=0 makes the modalities independent given the label; noise=0
    collapses every record onto its class center (linearly separable).
    """
    if n_per_class < 1:
        raise DataError("n_per_class must be >= 1")
    if not 0.0 <= coupling <= 1.0:
        raise DataError("coupling must lie in [0, 1]")
    if noise < 0.0:
        raise DataError("noise must be >= 0")
    t_lo, t_hi = int(t_range[0]), int(t_range[1])
    if t_lo < 1 or t_hi < t_lo:
        raise DataError(f"bad sequence length range {t_range}")

    rng = np.random.default_rng(int(seed))
    k = 4  # latent width
    latent_centers = {0: 1.2 * rng.normal(0.0, 1.0, k), 1: 1.2 * rng.normal(0.0, 1.0, k)}
    mid_center = 0.5 * (latent_centers[0] + latent_centers[1])
    # unwanted calls vary more: class 1 draws its latent with a wider spread,
    # so the optimal per-feature evidence is curved (magnitude, not just sign)
    class_spread = {0: 0.7, 1: 1.6}
    mix_s = rng.normal(0.0, 1.0, (d_s, k)) / np.sqrt(k)
    mix_t = rng.normal(0.0, 1.0, (d_t, k)) / np.sqrt(k)
    nuis_s = rng.normal(0.0, 1.0, (d_s, k)) / np.sqrt(k)
    nuis_t = rng.normal(0.0, 1.0, (d_t, k)) / np.sqrt(k)
    # per-dimension warp gains: every embedding coordinate saturates at its
    # own scale, so classifiers need feature-wise calibration curves
    gain_s = np.exp(rng.uniform(np.log(0.5), np.log(4.0), d_s))
    gain_t = np.exp(rng.uniform(np.log(0.5), np.log(4.0), d_t))
    dncr_shift_s = rng.normal(0.0, 0.5, d_s)
    dncr_shift_t = rng.normal(0.0, 0.5, d_t)
    speakers = [f"spk{i:02d}" for i in range(SYNTH_N_SPEAKERS)]
    # TTS engines, elicited emotions, and voices each leave an acoustic
    # signature; holding one out (T1/T2) therefore shifts the audio side
    engine_off = {e: rng.normal(0.0, 0.4 * noise, d_s) for e in SYNTH_ENGINES}
    emotion_off = {e: rng.normal(0.0, 0.3 * noise, d_s) for e in SYNTH_EMOTIONS}
    speaker_off = {s: rng.normal(0.0, 0.2 * noise, d_s) for s in speakers}

    n_dncr = int(round(dncr_fraction * n_per_class))
    drop_prob = min(0.4, 0.3 * noise)

    records: list[CallRecord] = []
    idx = 0
    for label in (0, 1):
        for j in range(n_per_class):
            is_dncr = label == 1 and j >= n_per_class - n_dncr
            if is_dncr:
                speaker = f"dncr_caller{int(rng.integers(0, 4))}"
                engine, emotion = DNCR_ENGINE, "none"
            else:
                speaker = speakers[int(rng.integers(0, SYNTH_N_SPEAKERS))]
                engine = SYNTH_ENGINES[int(rng.integers(0, len(SYNTH_ENGINES)))]
                emotion = SYNTH_EMOTIONS[int(rng.integers(0, len(SYNTH_EMOTIONS)))]
            shared = rng.normal(0.0, 1.0, k)
            cores = {}
            for mod in ("s", "t"):
                own = rng.normal(0.0, 1.0, k)
                dropped = rng.uniform() < drop_prob
                if dropped:
                    # label-free and unshared: this modality went unreliable
                    cores[mod] = mid_center + 0.5 * noise * rng.normal(0.0, 1.0, k)
                else:
                    cores[mod] = latent_centers[label] + 0.5 * noise * class_spread[label] * (
                        coupling * shared + (1.0 - coupling) * own
                    )
            # independent per-modality nuisance dominates the error budget, so
            # a second modality genuinely adds information
            base_s = mix_s @ cores["s"] + 1.2 * noise * (nuis_s @ rng.normal(0.0, 1.0, k))
            base_t = mix_t @ cores["t"] + 1.2 * noise * (nuis_t @ rng.normal(0.0, 1.0, k))
            if is_dncr:
                base_s = base_s + dncr_shift_s
                base_t = base_t + dncr_shift_t
            else:
                base_s = base_s + engine_off[engine] + emotion_off[emotion] + speaker_off[speaker]
            ts = int(rng.integers(t_lo, t_hi + 1))
            tt = int(rng.integers(t_lo, t_hi + 1))
            audio = np.arcsinh(gain_s * (base_s + 0.5 * noise * rng.normal(0.0, 1.0, (ts, d_s))))
            text = np.arcsinh(gain_t * (base_t + 0.5 * noise * rng.normal(0.0, 1.0, (tt, d_t))))
            records.append(
                CallRecord(
                    id=f"call{idx:05d}",
                    audio=audio.astype(np.float32),
                    text=text.astype(np.float32),
                    label=label,
                    speaker=speaker,
                    engine=engine,
                    emotion=emotion,
                    transcript_id=f"tr{idx:05d}",
                )
            )
            idx += 1
    return records
