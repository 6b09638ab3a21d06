"""16-bit PCM WAV read/write with optional ``path#start-end`` segment slicing."""

import os
import wave

import numpy as np


def write_wav(path, samples, sample_rate):
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype("<i2")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(sample_rate))
        fh.writeframes(pcm.tobytes())


def read_wav(path):
    with wave.open(str(path), "rb") as fh:
        if fh.getsampwidth() != 2:
            raise ValueError(f"{path}: only 16-bit PCM is supported")
        sr = fh.getframerate()
        channels = fh.getnchannels()
        raw = fh.readframes(fh.getnframes())
    x = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0
    if channels > 1:
        x = x.reshape(-1, channels).mean(axis=1)
    return x, sr


def split_segment(file_path):
    base, sep, span = file_path.rpartition("#")
    if not sep:
        return file_path, None
    start, _, end = span.partition("-")
    return base, (float(start), float(end))


def load_audio(file_path, root=None, expected_rate=None):
    base, span = split_segment(file_path)
    path = base if root is None or os.path.isabs(base) else os.path.join(root, base)
    x, sr = read_wav(path)
    if expected_rate is not None and sr != expected_rate:
        raise ValueError(f"{path}: sample rate {sr} Hz, model expects {expected_rate} Hz")
    if span is not None:
        x = x[int(round(span[0] * sr)):int(round(span[1] * sr))]
    return x
