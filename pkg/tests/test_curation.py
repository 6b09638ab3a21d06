import os
from collections import Counter

import pytest

from agegender.curation import (ManifestError, SampleRecord, SplitManifest, assemble, balanced_select,
                                cap_per_speaker, check_disjoint, curate, dev_count, emit_split_lists,
                                group_by_speaker, load_manifest, load_splits, manifest_text, parse_manifest,
                                parse_summary, speaker_cells, split_dev, summary_rows, summary_text)
from agegender.rng import SplitMix64, derive_seed, splitmix
from conftest import curation_params, random_records

HEADER = "file_path,speaker_id,age_years,gender,dataset,duration_s\n"


def _speaker(spk, n, age=30, gender="female", dataset="cv"):
    return [SampleRecord(f"{dataset}/{spk}/{i:03d}.wav", spk, age, gender, dataset, 2.0) for i in range(n)]


# --- manifest parsing ------------------------------------------------------

def test_parse_well_formed():
    text = HEADER + "a.wav,s1,30,female,cv,2.5\nb.wav,s1,30,female,cv,1\nc.wav,s2,8,child,cv,3\n"
    recs = parse_manifest(text)
    assert len(recs) == 3 and recs[2].gender_index == 0 and recs[0].decade == 3


def test_inconsistent_speaker_is_named():
    text = HEADER + "a.wav,s1,30,female,cv,2\nb.wav,s1,40,female,cv,2\n"
    with pytest.raises(ManifestError, match=r"speaker 's1'.*line 2"):
        parse_manifest(text)


def test_gender_vocabulary_is_strict():
    with pytest.raises(ManifestError, match="gender 'f' not one of child/female/male"):
        parse_manifest(HEADER + "a.wav,s1,30,f,cv,2\n")


def test_all_problems_are_reported_with_line_numbers():
    text = HEADER + "a.wav,s1,abc,female,cv,2\nb.wav,s2,30,female,cv,-1\na.wav,s3,30,male,cv,1\n"
    with pytest.raises(ManifestError) as err:
        parse_manifest(text, "m.csv")
    problems = err.value.problems
    assert [p.split(":")[0] for p in problems] == ["line 2", "line 3", "line 4"]
    assert "duplicate file_path" in problems[2]


def test_same_speaker_id_in_two_datasets_is_two_speakers():
    text = HEADER + "a.wav,s1,30,female,cv,2\nb.wav,s1,60,male,timit,2\n"
    assert len(group_by_speaker(parse_manifest(text))) == 2


def test_bad_header():
    with pytest.raises(ManifestError, match="header must be"):
        parse_manifest("path,speaker\n")


# --- PRNG ------------------------------------------------------------------

def test_splitmix_reference_output():
    # published first output of SplitMix64 from state 0
    assert SplitMix64(0).next_u64() == 0xE220A8397B1DCDAF


def test_derived_seeds_are_stable_and_distinct():
    assert derive_seed(42, "dev") == derive_seed(42, "dev")
    assert derive_seed(42, "dev") != derive_seed(43, "dev") != derive_seed(42, "cap")


def test_shuffle_is_a_permutation_and_roughly_uniform():
    counts = Counter()
    for s in range(3000):
        counts[tuple(splitmix(s, "t").shuffle("abc"))] += 1
    assert len(counts) == 6 and min(counts.values()) > 400


# --- cap -------------------------------------------------------------------

def test_small_speaker_keeps_everything():
    assert len(cap_per_speaker(_speaker("s1", 5), 20, 0)) == 5


def test_large_speaker_is_capped_deterministically():
    recs = _speaker("s1", 55)
    a, b = cap_per_speaker(recs, 20, 3), cap_per_speaker(recs, 20, 3)
    assert len(a) == 20 and a == b
    assert a != cap_per_speaker(recs, 20, 4)


# --- balanced selection ----------------------------------------------------

def _cell_population(n_per_cell):
    recs = []
    for decade in (2, 3, 4):
        for gender in ("female", "male"):
            for s in range(n_per_cell):
                recs += _speaker(f"{gender}{decade}_{s}", 2, age=decade * 10 + 5, gender=gender)
    return recs


@pytest.mark.parametrize("cell_max, cell_test", [(20, 7), (40, 5)])
def test_cell_bounds(cell_max, cell_test):
    recs = _cell_population(30)
    test, pool = balanced_select(recs, cell_max, cell_test, 1)
    cells = speaker_cells(recs)
    for members in cells.values():
        m = set(members)
        assert len(m & set(test)) <= cell_test
        assert len(m & (set(test) | set(pool))) <= cell_max


def test_underpopulated_cell_goes_to_test():
    test, pool = balanced_select(_cell_population(3), 20, 7, 1)
    assert len(test) == 18 and pool == []


# --- dev split -------------------------------------------------------------

@pytest.mark.parametrize("n, frac, expect", [(10, 0.1, 1), (131, 0.1, 13), (174, 0.1, 17), (1671, 0.1, 167),
                                             (15, 0.1, 2), (2, 0.5, 1), (3, 0.9, 2)])
def test_dev_count_rounding(n, frac, expect):
    assert dev_count(n, frac) == expect


def test_split_dev_partitions_and_is_seeded():
    spk = [("cv", f"s{i}") for i in range(50)]
    tr, dv = split_dev(spk, 0.1, 9)
    assert len(dv) == 5 and sorted(tr + dv) == sorted(spk)
    assert (tr, dv) == split_dev(list(reversed(spk)), 0.1, 9)
    assert dv != split_dev(spk, 0.1, 10)[1]


# --- summary ---------------------------------------------------------------

def _records_with_counts(dataset, n_speakers, n_samples, prefix):
    base, extra = divmod(n_samples, n_speakers)
    recs = []
    for s in range(n_speakers):
        recs += _speaker(f"{prefix}{s}", base + (s < extra), dataset=dataset)
    return recs


def test_table_style_summary_row():
    train = _records_with_counts("aGender", 324, 29553, "tr")
    devel = _records_with_counts("aGender", 35, 2974, "dv")
    test = _records_with_counts("aGender", 239, 20549, "te")
    man = assemble(train + devel + test, {r.speaker for r in train}, {r.speaker for r in devel},
                   {r.speaker for r in test})
    row = summary_rows(man)[0]
    assert row == ("aGender", "29553 (324)", "2974 (35)", "20549 (239)")
    assert " / ".join(row[1:]) == "29553 (324) / 2974 (35) / 20549 (239)"


def test_empty_split_emits_header_only(tmp_path):
    recs = _speaker("a", 3) + _speaker("b", 2)
    man = SplitManifest(train=recs, devel=[], test=[])
    paths = emit_split_lists(man, str(tmp_path))
    assert open(paths["devel"]).read() == HEADER
    assert parse_summary(open(paths["summary"]).read())["cv"] == ("5 (2)", "0 (0)", "0 (0)")


# --- invariants over random manifests ---------------------------------------

def check_curation_invariants(seed, out_a, out_b):
    """Raises AssertionError on any violated invariant; used by the acceptance gate too."""
    recs = random_records(seed)
    p = curation_params(seed)
    capped = cap_per_speaker(recs, p["cap"], p["seed"])
    before = Counter(r.speaker for r in recs)
    after = Counter(r.speaker for r in capped)
    for spk, n in before.items():
        assert after[spk] == min(n, p["cap"])
    test, pool = balanced_select(capped, p["cell_max"], p["cell_test"], p["seed"])
    for members in speaker_cells(capped).values():
        m = set(members)
        assert len(m & set(test)) <= p["cell_test"]
        assert len(m & (set(test) | set(pool))) <= p["cell_max"]
    if len(pool) < 2:
        return
    man = curate(recs, p["cap"], p["cell_max"], p["cell_test"], p["dev_fraction"], p["seed"])
    assert check_disjoint(man)
    assert {r.speaker for r in man.test} == set(test)
    for out in (out_a, out_b):
        emit_split_lists(man, out, header="run")
    for name in ("train.csv", "devel.csv", "test.csv", "summary.txt"):
        with open(os.path.join(out_a, name), "rb") as a, open(os.path.join(out_b, name), "rb") as b:
            assert a.read() == b.read(), name
    rerun = curate(recs, p["cap"], p["cell_max"], p["cell_test"], p["dev_fraction"], p["seed"])
    assert all(manifest_text(man.split(n)) == manifest_text(rerun.split(n)) for n in ("train", "devel", "test"))
    reloaded = load_splits(out_a)
    with open(os.path.join(out_a, "summary.txt")) as fh:
        assert parse_summary(fh.read()) == {row[0]: tuple(row[1:]) for row in summary_rows(reloaded)}
    assert summary_text(reloaded) == summary_text(man)


@pytest.mark.parametrize("block", range(4))
def test_invariants_on_random_manifests(tmp_path, block):
    for seed in range(block * 25, block * 25 + 25):
        check_curation_invariants(seed, str(tmp_path / f"a{seed}"), str(tmp_path / f"b{seed}"))


def test_manifest_round_trip(tmp_path):
    recs = random_records(3)
    path = tmp_path / "m.csv"
    path.write_text(manifest_text(recs))
    assert sorted(load_manifest(str(path)), key=lambda r: r.file_path) == sorted(recs, key=lambda r: r.file_path)
