"""Sample manifests and the split-curation procedures.

A speaker is identified by ``(dataset, speaker_id)``.  All random choices go
through :class:`agegender.rng.SplitMix64` streams derived from the run seed
and a label naming the choice, so the whole pipeline is a pure function of
(manifest, parameters, seed).
"""

import csv
import io
import os
from collections import defaultdict
from dataclasses import dataclass, replace

from .config_types import GENDERS
from .metrics import round_half_up
from .rng import splitmix

COLUMNS = ("file_path", "speaker_id", "age_years", "gender", "dataset", "duration_s")
SPLITS = ("train", "devel", "test")


class ManifestError(ValueError):
    def __init__(self, path, problems):
        self.path = path
        self.problems = list(problems)
        super().__init__(f"{path}: " + "; ".join(self.problems))


@dataclass(frozen=True)
class SampleRecord:
    file_path: str
    speaker_id: str
    age_years: int
    gender: str
    dataset: str
    duration_s: float

    @property
    def speaker(self):
        return (self.dataset, self.speaker_id)

    @property
    def gender_index(self):
        return GENDERS.index(self.gender)

    @property
    def decade(self):
        return self.age_years // 10

    def row(self):
        return [self.file_path, self.speaker_id, str(self.age_years), self.gender,
                self.dataset, _fmt_duration(self.duration_s)]


@dataclass
class SplitManifest:
    train: list
    devel: list
    test: list

    def split(self, name):
        return getattr(self, name)

    def speakers(self, name):
        return {r.speaker for r in self.split(name)}


def _fmt_duration(d):
    return f"{d:.6g}"


def _sorted(records):
    return sorted(records, key=lambda r: (r.dataset, r.speaker_id, r.file_path))


# ---------------------------------------------------------------------------
# manifest IO
# ---------------------------------------------------------------------------

def parse_manifest(text, path="<manifest>"):
    lines = [(i, line) for i, line in enumerate(text.splitlines(), 1)
             if line.strip() and not line.startswith("#")]
    if not lines:
        raise ManifestError(path, ["empty file, expected a header"])
    header = next(csv.reader([lines[0][1]]))
    if tuple(h.strip() for h in header) != COLUMNS:
        raise ManifestError(path, [f"line {lines[0][0]}: header must be {','.join(COLUMNS)}"])
    problems = []
    records = []
    seen_paths = {}
    speaker_attrs = {}
    for lineno, line in lines[1:]:
        row = next(csv.reader([line]))
        if len(row) != len(COLUMNS):
            problems.append(f"line {lineno}: expected {len(COLUMNS)} fields, got {len(row)}")
            continue
        fp, spk, age, gender, dataset, dur = (v.strip() for v in row)
        bad = []
        try:
            age_i = int(age)
            if not 0 <= age_i <= 100:
                bad.append(f"age {age_i} outside 0..100")
        except ValueError:
            bad.append(f"age {age!r} is not an integer")
        if gender not in GENDERS:
            bad.append(f"gender {gender!r} not one of {'/'.join(GENDERS)}")
        try:
            dur_f = float(dur)
            if not dur_f > 0:
                bad.append(f"duration {dur} must be > 0")
        except ValueError:
            bad.append(f"duration {dur!r} is not a number")
        if not fp or not spk or not dataset:
            bad.append("empty file_path, speaker_id or dataset")
        if fp in seen_paths:
            bad.append(f"duplicate file_path {fp!r} (first on line {seen_paths[fp]})")
        else:
            seen_paths[fp] = lineno
        if bad:
            problems += [f"line {lineno}: {b}" for b in bad]
            continue
        key = (dataset, spk)
        if key in speaker_attrs:
            first_line, first_age, first_gender = speaker_attrs[key]
            if (first_age, first_gender) != (age_i, gender):
                problems.append(
                    f"line {lineno}: speaker {spk!r} ({dataset}) has age/gender {age_i}/{gender} "
                    f"but {first_age}/{first_gender} on line {first_line}")
                continue
        else:
            speaker_attrs[key] = (lineno, age_i, gender)
        records.append(SampleRecord(fp, spk, age_i, gender, dataset, dur_f))
    if problems:
        raise ManifestError(path, problems)
    return records


def load_manifest(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_manifest(fh.read(), str(path))


def manifest_text(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def write_manifest(path, records):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(manifest_text(records))


# ---------------------------------------------------------------------------
# curation steps
# ---------------------------------------------------------------------------

def group_by_speaker(records):
    groups = defaultdict(list)
    for r in records:
        groups[r.speaker].append(r)
    return {k: _sorted(v) for k, v in sorted(groups.items())}


def cap_per_speaker(records, cap, seed):
    """Keep a seeded uniform subset of ``cap`` samples for larger speakers."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    kept = []
    for (dataset, spk), recs in group_by_speaker(records).items():
        if len(recs) > cap:
            recs = _sorted(splitmix(seed, f"cap/{dataset}/{spk}").sample(recs, cap))
        kept += recs
    return kept


def speaker_cells(records):
    """{(dataset, decade, gender): sorted speaker keys}."""
    cells = defaultdict(set)
    for r in records:
        cells[(r.dataset, r.decade, r.gender)].add(r.speaker)
    return {k: sorted(v) for k, v in sorted(cells.items())}


def balanced_select(records, max_speakers_per_cell, test_speakers_per_cell, seed):
    """Per (dataset, age decade, gender) cell pick at most ``max_speakers_per_cell``
    speakers, the first ``test_speakers_per_cell`` of which go to test.

    Returns ``(test_speakers, pool_speakers)`` as sorted lists of speaker keys.
    """
    if max_speakers_per_cell < 1 or test_speakers_per_cell < 1:
        raise ValueError("cell limits must be >= 1")
    test, pool = [], []
    for (dataset, decade, gender), speakers in speaker_cells(records).items():
        picked = splitmix(seed, f"cell/{dataset}/{decade}/{gender}").sample(speakers, max_speakers_per_cell)
        test += picked[:test_speakers_per_cell]
        pool += picked[test_speakers_per_cell:]
    return sorted(test), sorted(pool)


def dev_count(n, dev_fraction):
    """round-half-up(fraction * n), at least 1 and at most n - 1."""
    return min(max(round_half_up(dev_fraction * n), 1), n - 1)


def split_dev(speakers, dev_fraction, seed):
    """Speaker-level train/devel split; returns ``(train, devel)`` sorted."""
    if not 0 < dev_fraction < 1:
        raise ValueError(f"dev_fraction must be in (0, 1), got {dev_fraction}")
    speakers = sorted(set(speakers))
    if len(speakers) < 2:
        raise ValueError(f"need at least 2 speakers for a dev split, got {len(speakers)}")
    order = splitmix(seed, "dev").shuffle(speakers)
    k = dev_count(len(speakers), dev_fraction)
    return sorted(order[k:]), sorted(order[:k])


def assemble(records, train_spk, devel_spk, test_spk):
    by = {"train": set(train_spk), "devel": set(devel_spk), "test": set(test_spk)}
    parts = {name: _sorted(r for r in records if r.speaker in by[name]) for name in SPLITS}
    return SplitManifest(**parts)


def curate(records, cap=20, cell_max=20, cell_test=7, dev_fraction=0.1, seed=0):
    """cap -> balanced selection -> dev split, per the default recipe."""
    capped = cap_per_speaker(records, cap, seed)
    test_spk, pool = balanced_select(capped, cell_max, cell_test, seed)
    train_spk, devel_spk = split_dev(pool, dev_fraction, seed)
    return assemble(capped, train_spk, devel_spk, test_spk)


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def count_cell(records):
    return f"{len(records)} ({len({r.speaker for r in records})})"


def summary_rows(manifest):
    """Per dataset: counts formatted ``#samples (#speakers)`` for train/devel/test."""
    datasets = sorted({r.dataset for name in SPLITS for r in manifest.split(name)})
    rows = []
    for ds in datasets:
        rows.append((ds, *[count_cell([r for r in manifest.split(s) if r.dataset == ds]) for s in SPLITS]))
    rows.append(("total", *[count_cell(manifest.split(s)) for s in SPLITS]))
    return rows


def summary_text(manifest, header=None):
    lines = [] if header is None else [f"# {header}"]
    lines.append("dataset\ttrain\tdevel\ttest")
    for ds, *cells in summary_rows(manifest):
        lines.append(f"{ds}\t" + "\t".join(cells))
    return "\n".join(lines) + "\n"


def parse_summary(text):
    out = {}
    for line in text.splitlines():
        if not line or line.startswith("#") or line.startswith("dataset\t"):
            continue
        ds, *cells = line.split("\t")
        out[ds] = tuple(cells)
    return out


def emit_split_lists(manifest, out_dir, header=None):
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name in SPLITS:
        paths[name] = os.path.join(out_dir, f"{name}.csv")
        write_manifest(paths[name], manifest.split(name))
    paths["summary"] = os.path.join(out_dir, "summary.txt")
    with open(paths["summary"], "w", encoding="utf-8", newline="") as fh:
        fh.write(summary_text(manifest, header))
    return paths


def load_splits(split_dir):
    return SplitManifest(**{n: load_manifest(os.path.join(split_dir, f"{n}.csv")) for n in SPLITS})


def check_disjoint(manifest):
    sets = [manifest.speakers(n) for n in SPLITS]
    return not (sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2])


def segment_records(records, segments_for):
    """Expand records into one record per VAD segment.

    ``segments_for(record)`` returns ``[(start_s, end_s), ...]``.  Segment
    paths get a ``#start-end`` suffix understood by :func:`agegender.audio.load_audio`.
    """
    out = []
    for r in records:
        for start, end in segments_for(r):
            out.append(replace(r, file_path=f"{r.file_path}#{start:.3f}-{end:.3f}", duration_s=end - start))
    return out
