"""RIFF/WAV read and write for :class:`~tvfx.dsp.AudioBuffer`."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import AudioBuffer

FORMATS = ("pcm16", "pcm24", "float32")


def write_wav(path: str | Path, buf: AudioBuffer, fmt: str = "float32") -> Path:
    path = Path(path)
    if fmt == "float32":
        wavfile.write(path, buf.sample_rate, buf.samples.astype(np.float32))
        return path
    if fmt not in FORMATS:
        raise ValueError(f"unknown WAV format {fmt!r}, expected one of {FORMATS}")
    bits = 16 if fmt == "pcm16" else 24
    scale = 2 ** (bits - 1)
    ints = np.clip(np.round(buf.samples * scale), -scale, scale - 1).astype("<i4")
    if bits == 16:
        data = ints.astype("<i2").tobytes()
    else:
        data = ints.view(np.uint8).reshape(-1, 4)[:, :3].tobytes()
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(bits // 8)
        w.setframerate(buf.sample_rate)
        w.writeframes(data)
    return path


def read_wav(path: str | Path, expected_rate: int | None = None) -> AudioBuffer:
    rate, data = wavfile.read(Path(path))
    if data.ndim > 1:
        raise ValueError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if expected_rate is not None and rate != expected_rate:
        raise ValueError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 2**15
    elif data.dtype == np.int32:
        # scipy left-justifies 24-bit samples into int32
        samples = data.astype(np.float64) / 2**31
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample type {data.dtype}")
    return AudioBuffer(samples, rate)
