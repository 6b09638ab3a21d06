"""Synthetic voice-like corpora with recoverable age and gender labels.

Each utterance is a harmonic series on a slowly vibrating fundamental,
coloured by a one-pole filter, plus white noise, normalised to an RMS of
``TARGET_RMS`` so that 16-bit WAV files hold it without clipping.
Per gender the fundamental falls linearly with age, so it is injective in
age within a gender; the filter pole rises with age until it saturates at
0.95 for the oldest speakers.  Children occupy their own, higher fundamental band.

``f0_scale`` and ``tilt_offset`` move a whole corpus to a shifted parameter
band, which is how cross-corpus conditions are simulated.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .audio import write_wav
from .curation import SampleRecord, write_manifest
from .rng import numpy_rng

CHILD_AGES = (4, 14)
ADULT_AGES = (15, 89)

# (f0 at reference age, Hz per year, reference age)
F0_LAWS = {
    "child": (400.0, -8.0, 4),
    "female": (255.0, -0.8, 15),
    "male": (150.0, -0.6, 15),
}
TILT_BASE = -0.8
TILT_PER_YEAR = 0.02
TARGET_RMS = 0.25


def default_cells():
    cells = [(0, "child"), (1, "child")]
    cells += [(d, g) for d in range(1, 8) for g in ("female", "male")]
    return tuple(cells)


def grid_cells(decades, genders):
    return tuple((d, g) for d in decades for g in genders)


@dataclass(frozen=True)
class SynthSpec:
    cells: tuple = field(default_factory=default_cells)
    n_speakers: int = 3
    samples_per_speaker: int = 6
    duration_range: tuple = (0.6, 1.0)
    sample_rate: int = 8000
    noise_level: float = 0.05
    f0_scale: float = 1.0
    tilt_offset: float = 0.0
    dataset: str = "synth"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple((int(d), str(g)) for d, g in self.cells))
        object.__setattr__(self, "duration_range", tuple(float(v) for v in self.duration_range))
        for d, g in self.cells:
            if g not in F0_LAWS:
                raise ValueError(f"unknown gender {g!r} in cell ({d}, {g})")
            if cell_age_range(d, g) is None:
                raise ValueError(f"cell ({d}, {g}) has no valid ages")
        lo, hi = self.duration_range
        if not 0 < lo <= hi:
            raise ValueError(f"bad duration_range {self.duration_range}")
        if self.n_speakers < 1 or self.samples_per_speaker < 1:
            raise ValueError("n_speakers and samples_per_speaker must be >= 1")


def cell_age_range(decade, gender):
    lo, hi = CHILD_AGES if gender == "child" else ADULT_AGES
    lo, hi = max(lo, 10 * decade), min(hi, 10 * decade + 9)
    return (lo, hi) if lo <= hi else None


def voice_params(age, gender, f0_scale=1.0, tilt_offset=0.0):
    """(fundamental Hz, filter pole) for a speaker; f0 is strictly monotone in age."""
    f_ref, slope, a_ref = F0_LAWS[gender]
    f0 = (f_ref + slope * (age - a_ref)) * f0_scale
    tilt = TILT_BASE + TILT_PER_YEAR * age + tilt_offset
    return f0, float(np.clip(tilt, -0.95, 0.95))


def synth_waveform(f0, tilt, n_samples, sample_rate, noise_level, rng):
    t = np.arange(n_samples) / sample_rate
    vibrato = 1.0 + 0.01 * np.sin(2 * np.pi * 5.0 * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(f0 * vibrato) / sample_rate + rng.uniform(0, 2 * np.pi)
    x = np.zeros(n_samples)
    h = 1
    while h * f0 < sample_rate / 2:
        x += np.sin(h * phase) / h
        h += 1
    y = _kernels.one_pole(x, tilt)
    y = y + noise_level * np.std(y) * rng.standard_normal(n_samples)
    return TARGET_RMS * y / np.sqrt(np.mean(y * y))


@dataclass
class SynthCorpus:
    spec: SynthSpec
    records: list
    waveforms: dict

    def audio(self, record):
        return self.waveforms[record.file_path]


def generate_synth_corpus(spec):
    """Deterministic corpus: records sorted by speaker then path, plus waveforms."""
    records, waves = [], {}
    for d, g in sorted(spec.cells, key=lambda c: (c[0], c[1])):
        lo, hi = cell_age_range(d, g)
        for s in range(spec.n_speakers):
            spk = f"{spec.dataset}-{g[0]}{d}-{s:02d}"
            rng = numpy_rng(spec.seed, f"synth/{spec.dataset}/{spk}")
            age = int(rng.integers(lo, hi + 1))
            f0, tilt = voice_params(age, g, spec.f0_scale, spec.tilt_offset)
            f0 *= np.exp(rng.normal(0.0, 0.01))
            for i in range(spec.samples_per_speaker):
                dur = float(rng.uniform(*spec.duration_range))
                n = int(round(dur * spec.sample_rate))
                f_utt = f0 * np.exp(rng.normal(0.0, 0.01))
                path = f"{spk}/{i:03d}.wav"
                waves[path] = synth_waveform(f_utt, tilt, n, spec.sample_rate, spec.noise_level, rng)
                records.append(SampleRecord(path, spk, age, g, spec.dataset, n / spec.sample_rate))
    return SynthCorpus(spec, records, waves)


def write_corpus(corpus, out_dir):
    """Write WAVs under ``out_dir/audio`` and ``out_dir/manifest.csv``; returns the manifest path."""
    audio_root = os.path.join(out_dir, "audio")
    for r in corpus.records:
        write_wav(os.path.join(audio_root, r.file_path), corpus.waveforms[r.file_path], corpus.spec.sample_rate)
    path = os.path.join(out_dir, "manifest.csv")
    write_manifest(path, corpus.records)
    return path
