"""WAV decoding to mono float32 at 16 kHz."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

TARGET_SR = 16_000

_PCM_SCALE = {1: 127.0, 2: 32768.0, 4: 2147483648.0}


class AudioDecodeError(ValueError):
    """Unreadable or unsupported audio file."""


def load_wav(path) -> tuple[np.ndarray, int]:
    """Decode a PCM WAV file to (mono float32 in [-1, 1], sample_rate)."""
    try:
        with wave.open(str(Path(path)), "rb") as fh:
            sr = fh.getframerate()
            n_channels = fh.getnchannels()
            width = fh.getsampwidth()
            frames = fh.readframes(fh.getnframes())
    except (OSError, wave.Error, EOFError) as exc:
        raise AudioDecodeError(f"cannot decode {path}: {exc}") from exc
    if width not in _PCM_SCALE:
        raise AudioDecodeError(f"{path}: unsupported sample width {width}")
    if width == 1:  # unsigned 8-bit PCM
        data = np.frombuffer(frames, dtype=np.uint8).astype(np.float32) - 128.0
    else:
        dtype = "<i2" if width == 2 else "<i4"
        data = np.frombuffer(frames, dtype=dtype).astype(np.float32)
    data /= _PCM_SCALE[width]
    if n_channels > 1:
        data = data.reshape(-1, n_channels).mean(axis=1)
    return data, sr


def resample_linear(wave_data: np.ndarray, sr: int, target_sr: int = TARGET_SR) -> np.ndarray:
    """Linear-interpolation resampling; adequate for telephony-band speech."""
    if sr == target_sr:
        return wave_data.astype(np.float32)
    if wave_data.size == 0:
        return wave_data.astype(np.float32)
    duration = wave_data.size / sr
    n_out = max(1, int(round(duration * target_sr)))
    src_t = np.arange(wave_data.size) / sr
    dst_t = np.arange(n_out) / target_sr
    return np.interp(dst_t, src_t, wave_data).astype(np.float32)


def load_wav_16k(path) -> np.ndarray:
    data, sr = load_wav(path)
    return resample_linear(data, sr)


def is_silent(wave_data: np.ndarray, threshold: float = 1e-4) -> bool:
    if wave_data.size == 0:
        return True
    return float(np.sqrt(np.mean(wave_data**2))) < threshold


def write_wav(path, wave_data: np.ndarray, sr: int = TARGET_SR) -> None:
    """PCM16 writer used by fixtures and round-trip tests."""
    pcm = np.clip(np.asarray(wave_data, dtype=np.float64), -1.0, 1.0)
    pcm = (pcm * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sr)
        fh.writeframes(pcm.tobytes())
