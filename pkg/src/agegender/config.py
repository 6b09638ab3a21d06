"""Run configuration: one YAML document with nested sections.

See ``configs/SCHEMA.md`` for every key and its default.  Unknown keys and
ill-typed values are collected and reported together as a
:class:`~agegender.config_types.ConfigError` before any work starts.
"""

import hashlib
import json
from dataclasses import dataclass, field, fields

import yaml

from . import __version__
from .config_types import PRESETS, ConfigError, ModelConfig
from .synth import SynthSpec, default_cells
from .training import TrainConfig
from .vad import VadConfig

EXPERIMENT_KINDS = ("combined_vs_single", "layer_sweep", "cross_corpus")


@dataclass(frozen=True)
class CurationParams:
    cap: int = 20
    cell_max: int = 20
    cell_test: int = 7
    dev_fraction: float = 0.1
    use_vad: bool = False


@dataclass(frozen=True)
class Paths:
    manifest: str = None
    audio_root: str = None
    splits: str = None
    out: str = "runs/default"


@dataclass(frozen=True)
class ShiftParams:
    f0_scale: float = 1.25
    tilt_offset: float = -0.25


@dataclass(frozen=True)
class ExperimentParams:
    kind: str = "combined_vs_single"
    layer_counts: tuple = (1, 2, 4)
    seeds: tuple = (0,)
    shift: ShiftParams = field(default_factory=ShiftParams)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    threads: int = 1
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    vad: VadConfig = field(default_factory=VadConfig)
    curation: CurationParams = field(default_factory=CurationParams)
    synth: SynthSpec = field(default_factory=SynthSpec)
    paths: Paths = field(default_factory=Paths)
    experiment: ExperimentParams = field(default_factory=ExperimentParams)
    source: dict = field(default_factory=dict, compare=False)

    def digest(self):
        """Hash of the settings that shape results; ``paths`` only says where files live."""
        settings = {k: v for k, v in self.source.items() if k != "paths"}
        blob = json.dumps(settings, sort_keys=True, default=str).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def provenance(self):
        return f"agegender {__version__} seed={self.seed} config={self.digest()}"


# section -> allowed keys with expected python types
_NUM = (int, float)
_SCHEMA = {
    "model": {"preset": str, "num_layers": int, "hidden_dim": int, "ffn_dim": int, "num_heads": int,
              "head_hidden": int, "dropout_rate": _NUM, "conv_stage": list, "sample_rate": int,
              "pos_conv_kernel": int, "pos_conv_groups": int, "layer_norm_eps": _NUM},
    "train": {"learning_rate": _NUM, "epochs": int, "batch_size": int, "adam_beta1": _NUM,
              "adam_beta2": _NUM, "adam_eps": _NUM, "selection_metric": str, "clip_norm": _NUM},
    "vad": {"frame_ms": _NUM, "hop_ms": _NUM, "energy_threshold_db": _NUM, "min_segment_s": _NUM,
            "max_segment_s": _NUM},
    "curation": {"cap": int, "cell_max": int, "cell_test": int, "dev_fraction": _NUM, "use_vad": bool},
    "synth": {"cells": list, "n_speakers": int, "samples_per_speaker": int, "duration_range": list,
              "sample_rate": int, "noise_level": _NUM, "f0_scale": _NUM, "tilt_offset": _NUM,
              "dataset": str},
    "paths": {"manifest": str, "audio_root": str, "splits": str, "out": str},
    "experiment": {"kind": str, "layer_counts": list, "seeds": list, "shift": dict},
}
_TOP = {"seed": int, "threads": int}
_NULLABLE = {("train", "clip_norm"), ("paths", "manifest"), ("paths", "audio_root"), ("paths", "splits")}


def _type_ok(value, expected):
    if isinstance(value, bool) and expected is not bool:
        return False
    return isinstance(value, expected)


def _type_name(expected):
    if isinstance(expected, tuple):
        return "number"
    return {int: "integer", str: "string", list: "list", dict: "mapping", bool: "boolean"}[expected]


def validate(doc):
    """Return the list of schema problems in a raw config mapping."""
    errs = []
    if not isinstance(doc, dict):
        return ["config: top level must be a mapping"]
    for key, value in doc.items():
        if key in _TOP:
            if not _type_ok(value, _TOP[key]):
                errs.append(f"{key}: expected {_type_name(_TOP[key])}, got {value!r}")
        elif key in _SCHEMA:
            if not isinstance(value, dict):
                errs.append(f"{key}: expected a mapping")
                continue
            for sub, v in value.items():
                if sub not in _SCHEMA[key]:
                    errs.append(f"{key}.{sub}: unknown key")
                elif v is None and (key, sub) in _NULLABLE:
                    continue
                elif not _type_ok(v, _SCHEMA[key][sub]):
                    errs.append(f"{key}.{sub}: expected {_type_name(_SCHEMA[key][sub])}, got {v!r}")
        else:
            errs.append(f"{key}: unknown key")
    shift = doc.get("experiment", {}).get("shift") if isinstance(doc.get("experiment"), dict) else None
    if isinstance(shift, dict):
        for k, v in shift.items():
            if k not in ("f0_scale", "tilt_offset"):
                errs.append(f"experiment.shift.{k}: unknown key")
            elif not _type_ok(v, _NUM):
                errs.append(f"experiment.shift.{k}: expected number, got {v!r}")
    return errs


def _build(cls, section, values, errs, **fixed):
    try:
        return cls(**{**values, **fixed})
    except ConfigError as e:
        errs += [f"{section}.{m}" for m in e.errors]
    except (TypeError, ValueError) as e:
        errs.append(f"{section}: {e}")
    return None


def build_run_config(doc):
    doc = {} if doc is None else doc
    errs = validate(doc)
    if errs:
        raise ConfigError(errs)
    seed = doc.get("seed", 0)
    threads = doc.get("threads", 1)
    if threads < 1:
        errs.append("threads: must be >= 1")

    m = dict(doc.get("model", {}))
    preset = m.pop("preset", "toy")
    model = None
    if preset not in PRESETS:
        errs.append(f"model.preset: must be one of {sorted(PRESETS)}, got {preset!r}")
    else:
        base = PRESETS[preset]().to_dict()
        base.update(m)
        if "conv_stage" in m:
            base["conv_stage"] = tuple(tuple(c) for c in m["conv_stage"])
        model = _build(ModelConfig, "model", base, errs)

    train = _build(TrainConfig, "train", doc.get("train", {}), errs, seed=seed)
    vad = _build(VadConfig, "vad", doc.get("vad", {}), errs)
    cur = _build(CurationParams, "curation", doc.get("curation", {}), errs)
    if cur is not None:
        if cur.cap < 1 or cur.cell_max < 1 or cur.cell_test < 1:
            errs.append("curation: cap, cell_max and cell_test must be >= 1")
        if not 0 < cur.dev_fraction < 1:
            errs.append("curation.dev_fraction: must be in (0, 1)")

    s = dict(doc.get("synth", {}))
    if "cells" in s:
        s["cells"] = tuple(tuple(c) for c in s["cells"])
    else:
        s["cells"] = default_cells()
    if "duration_range" in s:
        s["duration_range"] = tuple(s["duration_range"])
    if model is not None:
        s.setdefault("sample_rate", model.sample_rate)
        if s["sample_rate"] != model.sample_rate:
            errs.append(f"synth.sample_rate: {s['sample_rate']} differs from model.sample_rate {model.sample_rate}")
    synth = _build(SynthSpec, "synth", s, errs, seed=seed)
    paths = _build(Paths, "paths", doc.get("paths", {}), errs)

    e = dict(doc.get("experiment", {}))
    shift = ShiftParams(**e.pop("shift", {}))
    if e.get("kind", "combined_vs_single") not in EXPERIMENT_KINDS:
        errs.append(f"experiment.kind: must be one of {EXPERIMENT_KINDS}, got {e.get('kind')!r}")
    for key in ("layer_counts", "seeds"):
        if key in e:
            if not all(_type_ok(v, int) for v in e[key]) or not e[key]:
                errs.append(f"experiment.{key}: expected a non-empty list of integers")
            e[key] = tuple(e[key])
    if model is not None and "layer_counts" in e:
        bad = [n for n in e["layer_counts"] if not 1 <= n <= model.num_layers]
        if bad:
            errs.append(f"experiment.layer_counts: {bad} outside 1..model.num_layers={model.num_layers}")
    experiment = _build(ExperimentParams, "experiment", e, errs, shift=shift)
    if errs:
        raise ConfigError(errs)
    return RunConfig(seed, threads, model, train, vad, cur, synth, paths, experiment, source=doc)


def apply_overrides(doc, overrides):
    """Set dotted keys (``model.num_layers``) on a copy of ``doc``; None values are skipped."""
    doc = json.loads(json.dumps(doc or {}))
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = doc
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return doc


def read_config(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise ConfigError([f"{path}: not valid YAML ({e})"]) from None
    return {} if doc is None else doc


def load_run_config(path=None, overrides=None):
    doc = read_config(path) if path else {}
    return build_run_config(apply_overrides(doc, overrides or {}))
