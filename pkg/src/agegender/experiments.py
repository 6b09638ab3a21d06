"""Single-vs-combined, layer-sweep and cross-corpus experiments on synthetic corpora."""

import csv
import io
import logging
from dataclasses import dataclass, replace

import numpy as np

from .cost import count_macs, count_params
from .curation import curate
from .model import build_model, detach_head, truncate_layers
from .synth import generate_synth_corpus, grid_cells
from .training import evaluate_utterances, prepare_records, train

log = logging.getLogger(__name__)

COST_DURATION_S = 3.0


@dataclass
class ExperimentResult:
    kind: str
    columns: tuple
    rows: list

    def table_csv(self, header=None):
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r.get(c)) for c in self.columns])
        return buf.getvalue()

    def tidy_csv(self, header=None):
        """One observation per row: every numeric cell becomes (id columns, metric, value)."""
        ids = [c for c in self.columns if c in ("model", "condition", "layers", "seed")]
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["experiment", *ids, "metric", "value"])
        for r in self.rows:
            for c in self.columns:
                if c in ids or r.get(c) is None:
                    continue
                w.writerow([self.kind, *[_fmt(r.get(i)) for i in ids], c, _fmt(r[c])])
        return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _splits(corpus, cfg, seed):
    c = cfg.curation
    return curate(corpus.records, c.cap, c.cell_max, c.cell_test, c.dev_fraction, seed)


def _prepared(model, corpus, manifest):
    return [prepare_records(model, manifest.split(n), corpus.audio) for n in ("train", "devel", "test")]


def combined_vs_single(cfg):
    """Age-only, gender-only and combined models from one seed and one data split."""
    corpus = generate_synth_corpus(cfg.synth)
    manifest = _splits(corpus, cfg, cfg.seed)
    base = build_model(cfg.model, cfg.seed)
    tr, dv, te = _prepared(base, corpus, manifest)
    rows = []
    variants = [("age_only", detach_head(base, "gender")), ("gender_only", detach_head(base, "age")),
                ("combined", base.copy())]
    for name, model in variants:
        best, _ = train(model, tr, dv, cfg.train)
        rep = evaluate_utterances(best, te)
        rows.append({"model": name, "mae_years": rep.mae_years, "ccc": rep.ccc, "gender_uar": rep.gender_uar,
                     "params": count_params(best.config, best.heads).total_params})
        log.info("%s: %s", name, rows[-1])
    return ExperimentResult("combined_vs_single", ("model", "mae_years", "ccc", "gender_uar", "params"), rows)


def layer_sweep(cfg):
    """Train truncated copies of a full-depth model at each layer count and seed."""
    counts = sorted(set(cfg.experiment.layer_counts))
    seeds = cfg.experiment.seeds
    rows = []
    for seed in seeds:
        corpus = generate_synth_corpus(replace(cfg.synth, seed=seed))
        manifest = _splits(corpus, cfg, seed)
        full = build_model(cfg.model, seed)
        tr, dv, te = _prepared(full, corpus, manifest)
        for n in counts:
            model = truncate_layers(full, n)
            best, _ = train(model, tr, dv, replace(cfg.train, seed=seed))
            rep = evaluate_utterances(best, te)
            rows.append({"layers": n, "seed": seed, "mae_years": rep.mae_years, "ccc": rep.ccc,
                         "gender_uar": rep.gender_uar,
                         "params": count_params(model.config).total_params,
                         "macs": count_macs(model.config, COST_DURATION_S).total_macs})
            log.info("layers=%d seed=%d: %s", n, seed, rows[-1])
    for n in counts:
        sel = [r for r in rows if r["layers"] == n and r["seed"] is not None]
        rows.append({"layers": n, "seed": "mean", "mae_years": float(np.mean([r["mae_years"] for r in sel])),
                     "ccc": float(np.mean([r["ccc"] for r in sel])),
                     "gender_uar": float(np.mean([r["gender_uar"] for r in sel])),
                     "params": sel[0]["params"], "macs": sel[0]["macs"]})
    return ExperimentResult("layer_sweep", ("layers", "seed", "mae_years", "ccc", "gender_uar", "params", "macs"), rows)


def shifted_spec(cfg):
    """Second corpus: adults only, voice parameters moved by the configured shift."""
    s = cfg.experiment.shift
    return replace(cfg.synth, cells=grid_cells(range(2, 8), ("female", "male")), dataset="shifted",
                   f0_scale=cfg.synth.f0_scale * s.f0_scale, tilt_offset=cfg.synth.tilt_offset + s.tilt_offset)


def cross_corpus(cfg):
    """Train on corpus A, test on corpus B; compare with training on A and B together."""
    corpus_a = generate_synth_corpus(cfg.synth)
    corpus_b = generate_synth_corpus(shifted_spec(cfg))
    man_a = _splits(corpus_a, cfg, cfg.seed)
    man_b = _splits(corpus_b, cfg, cfg.seed)
    base = build_model(cfg.model, cfg.seed)
    tr_a, dv_a, _ = _prepared(base, corpus_a, man_a)
    tr_b, dv_b, te_b = _prepared(base, corpus_b, man_b)
    rows = []
    conditions = [("cross_corpus", tr_a, dv_a), ("in_domain", tr_a + tr_b, dv_a + dv_b)]
    for name, tr, dv in conditions:
        best, _ = train(base.copy(), tr, dv, cfg.train)
        rep = evaluate_utterances(best, te_b)
        rows.append({"condition": name, "mae_years": rep.mae_years, "ccc": rep.ccc,
                     "gender_uar": rep.gender_uar, "mean_pred_years": rep.mean_pred_years,
                     "mean_true_years": rep.mean_true_years,
                     "train_mean_years": float(np.mean([u.age_years for u in tr]))})
        log.info("%s: %s", name, rows[-1])
    cols = ("condition", "mae_years", "ccc", "gender_uar", "mean_pred_years", "mean_true_years", "train_mean_years")
    return ExperimentResult("cross_corpus", cols, rows)


RUNNERS = {"combined_vs_single": combined_vs_single, "layer_sweep": layer_sweep, "cross_corpus": cross_corpus}


def run_experiment(kind, cfg):
    if kind not in RUNNERS:
        raise ValueError(f"unknown experiment {kind!r}; choose from {sorted(RUNNERS)}")
    return RUNNERS[kind](cfg)
