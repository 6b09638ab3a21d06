import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agegender.vad import VadConfig, vad_segment

SR = 8000
HOP_S = 0.010


def _tone(seconds, amp=1.0, f=220.0):
    t = np.arange(int(seconds * SR)) / SR
    return amp * np.sin(2 * np.pi * f * t)


def oracle_segments(x, sr, frame_ms=25, hop_ms=10, thr_db=6.0):
    """Plain-loop frame energies and run detection, written without numpy vector ops."""
    frame, hop = int(frame_ms * sr / 1000), int(hop_ms * sr / 1000)
    energies = []
    start = 0
    while start + frame <= len(x):
        acc = 0.0
        for v in x[start:start + frame]:
            acc += v * v
        p = acc / frame
        energies.append(10 * math.log10(p) if p > 0 else -math.inf)
        start += hop
    finite = sorted(e for e in energies if e != -math.inf)
    ordered = sorted(energies)
    mid = len(ordered) // 2
    median = ordered[mid] if len(ordered) % 2 else 0.5 * (ordered[mid - 1] + ordered[mid])
    thr = min(median + thr_db, finite[-1] - thr_db)
    runs, cur = [], None
    for i, e in enumerate(energies):
        on = e >= thr and e > -80
        if on and cur is None:
            cur = i
        if not on and cur is not None:
            runs.append((cur, i - 1))
            cur = None
    if cur is not None:
        runs.append((cur, len(energies) - 1))
    # edges sit half a hop either side of the frame centres; the outermost
    # frames extend to the ends of the file
    centre, half, dur = frame / 2 / sr, hop / 2 / sr, len(x) / sr
    last = len(energies) - 1
    return [(0.0 if a == 0 else centre + a * hop / sr - half, dur if b == last else centre + b * hop / sr + half)
            for a, b in runs]


def test_silence_has_no_segments():
    assert vad_segment(np.zeros(3 * SR), SR) == []


def test_constant_tone_is_one_segment():
    segs = vad_segment(_tone(3.0), SR)
    assert len(segs) == 1
    assert segs[0][0] == pytest.approx(0.0, abs=HOP_S) and segs[0][1] == pytest.approx(3.0, abs=HOP_S)


def test_tone_gap_tone_matches_oracle():
    x = np.concatenate([_tone(1.0), np.zeros(2 * SR), _tone(1.0)])
    segs = vad_segment(x, SR)
    assert len(segs) == 2
    for (a, b), (lo, hi) in zip(segs, [(0.0, 1.0), (3.0, 4.0)]):
        assert abs(a - lo) <= HOP_S and abs(b - hi) <= HOP_S
    ref = oracle_segments(x, SR)
    assert len(ref) == 2
    for (a, b), (ra, rb) in zip(segs, ref):
        assert abs(a - ra) <= HOP_S and abs(b - rb) <= HOP_S


def test_quiet_gap_in_noise_floor():
    rng = np.random.default_rng(0)
    x = np.concatenate([_tone(1.2, 0.5), np.zeros(SR), _tone(0.8, 0.5)]) + 1e-4 * rng.normal(size=3 * SR)
    segs = vad_segment(x, SR)
    assert [round(a, 1) for a, _ in segs] == [0.0, 2.2] and [round(b, 1) for _, b in segs] == [1.2, 3.0]


def test_short_bursts_are_dropped():
    x = np.concatenate([_tone(0.2), np.zeros(SR), _tone(1.0)])
    segs = vad_segment(x, SR)
    assert len(segs) == 1 and segs[0][0] == pytest.approx(1.2, abs=HOP_S)


def test_long_segment_is_split_at_quietest_frame():
    x = _tone(6.0)
    dip = slice(int(2.5 * SR), int(2.55 * SR))
    x[dip] *= 0.6  # slightly quieter, still speech
    segs = vad_segment(x, SR, VadConfig(max_segment_s=4.0))
    assert len(segs) == 2
    assert 2.45 < segs[0][1] < 2.6 and segs[0][1] <= segs[1][0]


def test_config_validation():
    with pytest.raises(ValueError):
        VadConfig(frame_ms=5, hop_ms=10)
    with pytest.raises(ValueError):
        VadConfig(min_segment_s=3, max_segment_s=2)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0.05, 1.5), st.floats(0.0, 1.0)), min_size=1, max_size=6),
       st.floats(0.3, 0.8), st.floats(1.0, 3.0))
def test_segments_are_sorted_disjoint_and_bounded(parts, min_s, max_s):
    x = np.concatenate([_tone(d, amp) for d, amp in parts])
    cfg = VadConfig(min_segment_s=min_s, max_segment_s=max_s)
    segs = vad_segment(x, SR, cfg)
    for a, b in segs:
        assert min_s - 1e-9 <= b - a <= max_s + 1e-9
        assert 0.0 <= a < b <= len(x) / SR + 1e-9
    for (_, b), (a, _) in zip(segs, segs[1:]):
        assert b <= a
