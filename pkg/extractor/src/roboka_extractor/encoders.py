"""Frozen-encoder backends.

The three supported speech encoders share one convolutional front end
(strides 5,2,2,2,2,2,2 and kernels 10,3,3,3,3,2,2 at 16 kHz), so the number
of output frames for a clip is

    T = floor((samples - 400) / 320) + 1

i.e. roughly 50 frames per second of audio. All backends emit float32
sequences of width 768 (the models' last hidden layer).

Hugging-Face-backed encoders load lazily and require the `models` extra plus
locally available weights. `SimulatedAudioEncoder` / `SimulatedTextEncoder`
reproduce the exact output geometry from content hashes alone; they exist so
pipelines and dataset plumbing can be exercised on machines without GPU
weights, and they are clearly labeled as such in the manifest revision field.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .jobs import AUDIO_ENCODERS, TEXT_ENCODERS

HIDDEN_DIM = 768
FRAME_WINDOW = 400  # samples at 16 kHz
FRAME_STRIDE = 320

HF_AUDIO_CHECKPOINTS = {
    "wav2vec2": "facebook/wav2vec2-base",
    "wavlm": "microsoft/wavlm-base",
    "hubert": "facebook/hubert-base-ls960",
}
HF_TEXT_CHECKPOINTS = {
    "bert": "bert-base-uncased",
    "roberta": "roberta-base",
    "gpt2": "gpt2",
}


class ModelLoadError(RuntimeError):
    """Encoder weights or runtime are unavailable."""


def audio_frame_count(n_samples: int) -> int:
    """Output frames of the shared conv front end; 0 for clips under 25 ms."""
    if n_samples < FRAME_WINDOW:
        return 0
    return (n_samples - FRAME_WINDOW) // FRAME_STRIDE + 1


def frames_per_second(sr: int = 16_000) -> float:
    return sr / FRAME_STRIDE


def _hash_rng(*parts: bytes) -> np.random.Generator:
    digest = hashlib.sha256(b"|".join(parts)).digest()
    return np.random.default_rng(np.frombuffer(digest[:16], dtype=np.uint64))


class SimulatedAudioEncoder:
    """Deterministic stand-in with the real encoders' frame geometry."""

    def __init__(self, name: str = "wav2vec2"):
        if name not in AUDIO_ENCODERS:
            raise ModelLoadError(f"unknown audio encoder {name!r}")
        self.name = name
        self.revision = "simulated"

    def encode(self, wave_data: np.ndarray, sr: int = 16_000) -> np.ndarray:
        frames = audio_frame_count(wave_data.size)
        if frames < 1:
            frames = 1  # degenerate clips still produce one frame
        rng = _hash_rng(
            self.name.encode(),
            np.asarray(wave_data, dtype=np.float32).tobytes(),
            str(sr).encode(),
        )
        return rng.normal(0.0, 1.0, (frames, HIDDEN_DIM)).astype(np.float32)


class SimulatedTextEncoder:
    """Deterministic stand-in; one vector per whitespace token plus BOS/EOS."""

    def __init__(self, name: str = "bert"):
        if name not in TEXT_ENCODERS:
            raise ModelLoadError(f"unknown text encoder {name!r}")
        self.name = name
        self.revision = "simulated"

    def encode(self, text: str) -> np.ndarray:
        tokens = text.split()
        # BOS/EOS around content; empty text floors to a single special token
        length = len(tokens) + 2 if tokens else 1
        rng = _hash_rng(self.name.encode(), text.encode())
        return rng.normal(0.0, 1.0, (length, HIDDEN_DIM)).astype(np.float32)


class HfAudioEncoder:
    """Last-hidden-state sequences from a frozen Hugging Face speech model."""

    def __init__(self, name: str, revision: str | None = None):
        if name not in AUDIO_ENCODERS:
            raise ModelLoadError(f"unknown audio encoder {name!r}")
        self.name = name
        checkpoint = HF_AUDIO_CHECKPOINTS[name]
        try:
            import torch
            from transformers import AutoFeatureExtractor, AutoModel
        except ImportError as exc:
            raise ModelLoadError(f"transformers/torch unavailable: {exc}") from exc
        try:
            self._fe = AutoFeatureExtractor.from_pretrained(checkpoint, revision=revision)
            self._model = AutoModel.from_pretrained(checkpoint, revision=revision)
        except Exception as exc:  # hub/network/cache failures surface here
            raise ModelLoadError(f"cannot load {checkpoint}: {exc}") from exc
        self._model.eval()
        self._torch = torch
        self.revision = revision or "default"
        if self._model.config.hidden_size != HIDDEN_DIM:
            raise ModelLoadError(f"{checkpoint}: hidden size != {HIDDEN_DIM}")

    def encode(self, wave_data: np.ndarray, sr: int = 16_000) -> np.ndarray:
        inputs = self._fe(wave_data, sampling_rate=sr, return_tensors="pt")
        with self._torch.no_grad():
            out = self._model(**inputs).last_hidden_state
        return out[0].cpu().numpy().astype(np.float32)


class HfTextEncoder:
    """Last-hidden-state token sequences from a frozen text model."""

    def __init__(self, name: str, revision: str | None = None):
        if name not in TEXT_ENCODERS:
            raise ModelLoadError(f"unknown text encoder {name!r}")
        self.name = name
        checkpoint = HF_TEXT_CHECKPOINTS[name]
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ModelLoadError(f"transformers/torch unavailable: {exc}") from exc
        try:
            self._tok = AutoTokenizer.from_pretrained(checkpoint, revision=revision)
            self._model = AutoModel.from_pretrained(checkpoint, revision=revision)
        except Exception as exc:
            raise ModelLoadError(f"cannot load {checkpoint}: {exc}") from exc
        self._model.eval()
        self._torch = torch
        self.revision = revision or "default"
        if self._model.config.hidden_size != HIDDEN_DIM:
            raise ModelLoadError(f"{checkpoint}: hidden size != {HIDDEN_DIM}")

    def encode(self, text: str) -> np.ndarray:
        if not text:
            text = self._tok.unk_token or "."
        inputs = self._tok(text, return_tensors="pt", truncation=True, max_length=512)
        with self._torch.no_grad():
            out = self._model(**inputs).last_hidden_state
        return out[0].cpu().numpy().astype(np.float32)


def get_audio_encoder(name: str, revision: str | None = None, simulated: bool = False):
    if simulated:
        return SimulatedAudioEncoder(name)
    return HfAudioEncoder(name, revision)


def get_text_encoder(name: str, revision: str | None = None, simulated: bool = False):
    if simulated:
        return SimulatedTextEncoder(name)
    return HfTextEncoder(name, revision)
