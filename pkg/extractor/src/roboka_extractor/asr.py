"""Speech recognition: Whisper-backed transcription with injectable backends."""

from __future__ import annotations

import numpy as np

from .audio import is_silent
from .encoders import ModelLoadError


class WhisperTranscriber:
    """Transcribes 16 kHz mono float32 audio with a frozen Whisper model."""

    def __init__(self, model: str = "openai/whisper-tiny"):
        try:
            from transformers import pipeline
        except ImportError as exc:
            raise ModelLoadError(f"transformers unavailable: {exc}") from exc
        try:
            self._pipe = pipeline("automatic-speech-recognition", model=model)
        except Exception as exc:
            raise ModelLoadError(f"cannot load ASR model {model}: {exc}") from exc
        self.model = model

    def transcribe(self, wave_data: np.ndarray, sr: int = 16_000) -> str:
        if is_silent(wave_data):
            return ""
        out = self._pipe({"array": np.asarray(wave_data, dtype=np.float32), "sampling_rate": sr})
        return (out.get("text") or "").strip()


class SilenceAwareTranscriber:
    """Wraps any transcriber so silent clips short-circuit to an empty string."""

    def __init__(self, inner):
        self._inner = inner

    def transcribe(self, wave_data: np.ndarray, sr: int = 16_000) -> str:
        if is_silent(wave_data):
            return ""
        return self._inner.transcribe(wave_data, sr)
