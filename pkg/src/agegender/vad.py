"""Energy-based voice activity detection.

Frames whose power (dB) exceeds ``min(median + threshold, peak - threshold)``
are speech.  The peak-relative cap keeps stationary signals (where every
frame sits at the median) from being rejected wholesale; silent files never
pass the absolute floor.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels

SILENCE_FLOOR_DB = -80.0


@dataclass(frozen=True)
class VadConfig:
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    energy_threshold_db: float = 6.0
    min_segment_s: float = 0.5
    max_segment_s: float = 20.0

    def __post_init__(self):
        if not self.frame_ms >= self.hop_ms > 0:
            raise ValueError(f"need frame_ms >= hop_ms > 0, got {self.frame_ms}/{self.hop_ms}")
        if not 0 <= self.min_segment_s < self.max_segment_s:
            raise ValueError(f"need 0 <= min_segment_s < max_segment_s, got "
                             f"{self.min_segment_s}/{self.max_segment_s}")


def frame_energy_db(waveform, sample_rate, config):
    frame = max(1, int(round(config.frame_ms * sample_rate / 1000.0)))
    hop = max(1, int(round(config.hop_ms * sample_rate / 1000.0)))
    power = _kernels.frame_power(np.asarray(waveform, dtype=np.float64), frame, hop)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(power), frame, hop


def _runs(mask):
    """[(first, last)] index pairs of consecutive True values."""
    runs = []
    start = None
    for i, m in enumerate(mask):
        if m and start is None:
            start = i
        elif not m and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(mask) - 1))
    return runs


def vad_segment(waveform, sample_rate, config=VadConfig()):
    """Speech segments as ordered, non-overlapping ``(start_s, end_s)`` pairs."""
    x = np.asarray(waveform, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError("empty waveform")
    duration = x.size / sample_rate
    db, frame, hop = frame_energy_db(x, sample_rate, config)
    n = db.size
    if n == 0:
        return []
    finite = db[np.isfinite(db)]
    if finite.size == 0:
        return []
    thr = min(np.median(db) + config.energy_threshold_db, finite.max() - config.energy_threshold_db)
    speech = (db >= thr) & (db > SILENCE_FLOOR_DB)

    hop_s = hop / sample_rate
    centre0 = frame / (2.0 * sample_rate)

    def start_time(i):
        return 0.0 if i == 0 else centre0 + (i - 0.5) * hop_s

    def end_time(i):
        return duration if i == n - 1 else centre0 + (i + 0.5) * hop_s

    def split(first, last):
        length = end_time(last) - start_time(first)
        if length <= config.max_segment_s:
            return [(first, last)] if length >= config.min_segment_s else []
        # cut at the quietest interior frame that leaves both sides long enough
        candidates = [i for i in range(first + 1, last)
                      if end_time(i - 1) - start_time(first) >= config.min_segment_s
                      and end_time(last) - start_time(i + 1) >= config.min_segment_s]
        if not candidates:
            return []
        cut = min(candidates, key=lambda i: (db[i], i))
        return split(first, cut - 1) + split(cut + 1, last)

    segments = []
    for first, last in _runs(speech):
        segments += [(start_time(a), end_time(b)) for a, b in split(first, last)]
    return segments
