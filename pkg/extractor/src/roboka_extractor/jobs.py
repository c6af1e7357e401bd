"""Extraction job files: what to encode, with which frozen models, to where."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

AUDIO_ENCODERS = ("wav2vec2", "wavlm", "hubert")
TEXT_ENCODERS = ("bert", "roberta", "gpt2")


class JobError(ValueError):
    """Malformed or inconsistent job file."""


@dataclass
class JobRecord:
    id: str
    audio: str
    label: int
    transcript: str | None = None
    speaker: str = ""
    engine: str = ""
    emotion: str = ""
    transcript_id: str = ""


@dataclass
class ExtractionJob:
    audio_encoder: str
    text_encoder: str
    records: list[JobRecord]
    out_dir: str | None = None
    asr_model: str = "openai/whisper-tiny"
    revisions: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.audio_encoder not in AUDIO_ENCODERS:
            raise JobError(
                f"audio encoder must be one of {AUDIO_ENCODERS}, got {self.audio_encoder!r}"
            )
        if self.text_encoder not in TEXT_ENCODERS:
            raise JobError(
                f"text encoder must be one of {TEXT_ENCODERS}, got {self.text_encoder!r}"
            )
        if not self.records:
            raise JobError("job contains no records")
        seen: set[str] = set()
        for rec in self.records:
            if not rec.id:
                raise JobError("record with empty id")
            if rec.id in seen:
                raise JobError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
            if rec.label not in (0, 1):
                raise JobError(f"record {rec.id}: label must be 0 or 1, got {rec.label!r}")
            if not rec.audio:
                raise JobError(f"record {rec.id}: missing audio path")


def load_job(path) -> ExtractionJob:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise JobError(f"cannot read job file {path}: {exc}") from exc
    try:
        records = [
            JobRecord(
                id=str(r["id"]),
                audio=str(r["audio"]),
                label=r["label"],
                transcript=r.get("transcript"),
                speaker=str(r.get("speaker", "")),
                engine=str(r.get("engine", "")),
                emotion=str(r.get("emotion", "")),
                transcript_id=str(r.get("transcript_id", "")),
            )
            for r in raw["records"]
        ]
        job = ExtractionJob(
            audio_encoder=raw["audio_encoder"],
            text_encoder=raw["text_encoder"],
            records=records,
            out_dir=raw.get("out_dir"),
            asr_model=raw.get("asr_model", "openai/whisper-tiny"),
            revisions=dict(raw.get("revisions", {})),
        )
    except (KeyError, TypeError) as exc:
        raise JobError(f"job file {path} is missing required fields: {exc}") from exc
    job.validate()
    return job
