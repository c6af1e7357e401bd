"""The extraction pipeline: job records -> dataset directory.

Output is the detection package's wire format: manifest.jsonl plus raw
row-major little-endian float32 blobs, one audio and one text sequence per
record. Each manifest row additionally echoes the encoder names and pinned
revisions for provenance. Blob writes are atomic (temp file then rename);
records whose audio cannot be decoded are skipped with a logged reason, and
records whose transcript came back empty are flagged.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .asr import SilenceAwareTranscriber, WhisperTranscriber
from .audio import AudioDecodeError, load_wav_16k
from .encoders import HIDDEN_DIM, get_audio_encoder, get_text_encoder
from .jobs import ExtractionJob, JobRecord


@dataclass
class ExtractReport:
    written: int = 0
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (id, reason)
    flagged: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "written": self.written,
            "skipped": [{"id": i, "reason": r} for i, r in self.skipped],
            "flagged": [{"id": i, "reason": r} for i, r in self.flagged],
        }


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _process_record(
    rec: JobRecord, base: Path, audio_encoder, text_encoder, transcriber
) -> tuple[dict | None, str | None, str | None]:
    """Returns (manifest row, skip reason, flag reason)."""
    try:
        wave_data = load_wav_16k(base / rec.audio if not os.path.isabs(rec.audio) else rec.audio)
    except AudioDecodeError as exc:
        return None, str(exc), None

    flag = None
    if rec.transcript is not None:
        transcript = rec.transcript  # ASR is not invoked when a transcript is supplied
    else:
        transcript = transcriber.transcribe(wave_data)
        if not transcript:
            flag = "empty transcript"

    audio_seq = np.ascontiguousarray(audio_encoder.encode(wave_data), dtype="<f4")
    text_seq = np.ascontiguousarray(text_encoder.encode(transcript), dtype="<f4")
    for name, seq in (("audio", audio_seq), ("text", text_seq)):
        if seq.ndim != 2 or seq.shape[0] < 1 or seq.shape[1] != HIDDEN_DIM:
            return None, f"{name} encoder produced shape {seq.shape}", flag

    return {
        "id": rec.id,
        "label": rec.label,
        "speaker": rec.speaker,
        "engine": rec.engine,
        "emotion": rec.emotion,
        "transcript_id": rec.transcript_id,
        "_audio_seq": audio_seq,
        "_text_seq": text_seq,
        "audio_encoder": audio_encoder.name,
        "audio_encoder_revision": getattr(audio_encoder, "revision", "default"),
        "text_encoder": text_encoder.name,
        "text_encoder_revision": getattr(text_encoder, "revision", "default"),
    }, None, flag


def extract(
    job: ExtractionJob,
    out_dir=None,
    *,
    audio_encoder=None,
    text_encoder=None,
    transcriber=None,
    base_dir=None,
    workers: int = 1,
) -> ExtractReport:
    """Run the job and write a dataset directory; returns a skip/flag report.

    Encoder and transcriber instances may be injected; by default the
    Hugging-Face-backed models named in the job are loaded.
    """
    job.validate()
    out = Path(out_dir or job.out_dir or ".")
    base = Path(base_dir) if base_dir is not None else Path(".")
    (out / "blobs").mkdir(parents=True, exist_ok=True)

    if audio_encoder is None:
        audio_encoder = get_audio_encoder(job.audio_encoder, job.revisions.get(job.audio_encoder))
    if text_encoder is None:
        text_encoder = get_text_encoder(job.text_encoder, job.revisions.get(job.text_encoder))
    if transcriber is None:
        transcriber = WhisperTranscriber(job.asr_model)
    transcriber = SilenceAwareTranscriber(transcriber)

    report = ExtractReport()

    def work(rec: JobRecord):
        return _process_record(rec, base, audio_encoder, text_encoder, transcriber)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, job.records))
    else:
        results = [work(rec) for rec in job.records]

    lines = []
    for rec, (row, skip_reason, flag_reason) in zip(job.records, results):
        if flag_reason:
            report.flagged.append((rec.id, flag_reason))
        if row is None:
            report.skipped.append((rec.id, skip_reason))
            continue
        audio_seq = row.pop("_audio_seq")
        text_seq = row.pop("_text_seq")
        audio_rel = f"blobs/{row['id']}_audio.f32"
        text_rel = f"blobs/{row['id']}_text.f32"
        _atomic_write(out / audio_rel, audio_seq.tobytes())
        _atomic_write(out / text_rel, text_seq.tobytes())
        row.update(
            audio_path=audio_rel,
            audio_shape=[int(s) for s in audio_seq.shape],
            text_path=text_rel,
            text_shape=[int(s) for s in text_seq.shape],
        )
        lines.append(json.dumps(row, sort_keys=True))
        report.written += 1

    (out / "manifest.jsonl").write_text("\n".join(lines) + ("\n" if lines else ""))
    (out / "extract_report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return report
