"""Tests that exercise the real pretrained backends.

These require the `models` extra and locally cached weights; they skip
cleanly on machines without them (CI runs the simulated-backend suite).
"""

import numpy as np
import pytest

from roboka_extractor.encoders import HIDDEN_DIM, ModelLoadError, audio_frame_count
from roboka_extractor.wer import word_error_rate


def _load_or_skip(factory, *args):
    try:
        return factory(*args)
    except ModelLoadError as exc:
        pytest.skip(f"model unavailable: {exc}")


def test_real_wav2vec2_frame_geometry():
    from roboka_extractor.encoders import HfAudioEncoder

    enc = _load_or_skip(HfAudioEncoder, "wav2vec2")
    wave_data = np.sin(np.arange(16_000) / 30.0).astype(np.float32)
    out = enc.encode(wave_data)
    assert out.shape[1] == HIDDEN_DIM
    assert abs(out.shape[0] - audio_frame_count(16_000)) <= 2


def test_real_bert_token_sequences():
    from roboka_extractor.encoders import HfTextEncoder

    enc = _load_or_skip(HfTextEncoder, "bert")
    out = enc.encode("press one to speak with an agent")
    assert out.shape[1] == HIDDEN_DIM
    assert out.shape[0] >= 7  # tokens plus specials


def test_real_whisper_short_clip_wer():
    # point REFERENCE_CLIP at a wav and REFERENCE_TEXT at its transcript
    import os

    clip = os.environ.get("REFERENCE_CLIP")
    text = os.environ.get("REFERENCE_TEXT")
    if not clip or not text:
        pytest.skip("set REFERENCE_CLIP and REFERENCE_TEXT to run the ASR check")
    from roboka_extractor.asr import WhisperTranscriber
    from roboka_extractor.audio import load_wav_16k

    transcriber = _load_or_skip(WhisperTranscriber)
    hypothesis = transcriber.transcribe(load_wav_16k(clip))
    assert word_error_rate(text.lower(), hypothesis.lower()) < 0.15


def test_wer_oracle_behaves_like_edit_distance():
    # the oracle itself, exercised without any model
    assert word_error_rate("remove me from your list", "remove me from the list") == 0.2
    assert word_error_rate("hello", "hello") == 0.0
