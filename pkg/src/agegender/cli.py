"""``agegender`` command-line entry point.

Exit status: 0 success, 1 runtime failure, 2 usage / schema / input error.
"""

import argparse
import hashlib
import logging
import os
import sys
from contextlib import nullcontext

from . import __version__
from .audio import load_audio
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import load_run_config
from .config_types import PRESETS, ConfigError
from .cost import count_macs, count_params
from .curation import (ManifestError, assemble, balanced_select, cap_per_speaker, emit_split_lists,
                       load_manifest, load_splits, segment_records, split_dev, summary_text)
from .experiments import run_experiment
from .model import build_model
from .synth import generate_synth_corpus, write_corpus
from .training import TrainingError, evaluate_utterances, history_csv, prepare_records, train
from .vad import vad_segment

log = logging.getLogger("agegender")


class UsageError(Exception):
    pass


def _threads(n):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(limits=n)


def _write(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _require_file(path, what):
    if path is None or not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")


def _file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()[:16]


def _audio_loader(root, sample_rate):
    return lambda r: load_audio(r.file_path, root, sample_rate)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args):
    cfg = load_run_config(args.config, {"seed": args.seed, "synth.n_speakers": args.speakers,
                                        "synth.samples_per_speaker": args.samples,
                                        "synth.dataset": args.dataset})
    corpus = generate_synth_corpus(cfg.synth)
    path = write_corpus(corpus, args.out)
    speakers = len({r.speaker for r in corpus.records})
    print(f"wrote {len(corpus.records)} samples from {speakers} speakers to {path}")
    return 0


def cmd_curate(args):
    _require_file(args.manifest, "manifest")
    cfg = load_run_config(args.config, {"seed": args.seed, "curation.cap": args.cap,
                                        "curation.cell_max": args.cell_max, "curation.cell_test": args.cell_test,
                                        "curation.dev_fraction": args.dev_frac,
                                        "curation.use_vad": True if args.vad else None,
                                        "paths.audio_root": args.audio_root})
    records = load_manifest(args.manifest)
    c = cfg.curation
    if c.use_vad:
        root = cfg.paths.audio_root or os.path.dirname(os.path.abspath(args.manifest))

        def segments(r):
            return vad_segment(load_audio(r.file_path, root), cfg.model.sample_rate, cfg.vad)

        records = segment_records(records, segments)
    capped = cap_per_speaker(records, c.cap, cfg.seed)
    test_spk, pool = balanced_select(capped, c.cell_max, c.cell_test, cfg.seed)
    train_spk, devel_spk = split_dev(pool, c.dev_fraction, cfg.seed)
    manifest = assemble(capped, train_spk, devel_spk, test_spk)
    header = (f"{cfg.provenance()} cap={c.cap} cell_max={c.cell_max} cell_test={c.cell_test} "
              f"dev_fraction={c.dev_fraction} vad={c.use_vad}")
    emit_split_lists(manifest, args.out, header)
    print(summary_text(manifest), end="")
    return 0


def cmd_train(args):
    cfg = load_run_config(args.config, {"seed": args.seed, "model.num_layers": args.layers,
                                        "paths.splits": args.splits, "paths.audio_root": args.audio_root,
                                        "paths.out": args.out, "train.epochs": args.epochs})
    if not cfg.paths.splits:
        raise UsageError("no split directory: set paths.splits or pass --splits")
    for name in ("train", "devel", "test"):
        _require_file(os.path.join(cfg.paths.splits, f"{name}.csv"), f"{name} split")
    splits = load_splits(cfg.paths.splits)
    out = cfg.paths.out
    with _threads(cfg.threads):
        model = build_model(cfg.model, cfg.seed)
        audio = _audio_loader(cfg.paths.audio_root, cfg.model.sample_rate)
        tr = prepare_records(model, splits.train, audio)
        dv = prepare_records(model, splits.devel, audio)
        te = prepare_records(model, splits.test, audio) if splits.test else []
        best, history = train(model, tr, dv, cfg.train,
                              on_epoch=lambda r: log.info("epoch %d train_loss %.5f dev_score %.5f",
                                                          r.epoch, r.train_loss, r.dev_score))
    header = [cfg.provenance(), f"num_layers={cfg.model.num_layers}"]
    os.makedirs(out, exist_ok=True)
    save_checkpoint(os.path.join(out, "best.ckpt"), best, extra={"provenance": cfg.provenance()})
    _write(os.path.join(out, "history.csv"), history_csv(history, header))
    if te:
        report = evaluate_utterances(best, te)
        report.extra.update(_cost_extra(best))
        head = f"{cfg.provenance()} split=test epoch={best.meta['epoch']}"
        _write(os.path.join(out, "test_report.txt"), report.to_text(head))
        _write(os.path.join(out, "test_report.csv"), report.to_csv(head))
        print(f"test mae_years={report.mae_years:.3f} gender_uar={report.gender_uar:.4f}")
    print(f"selected epoch {best.meta['epoch']}; outputs in {out}")
    return 0


def _cost_extra(model, duration_s=3.0):
    rep = count_macs(model.config, duration_s, model.heads)
    return {"params": rep.total_params, "macs_3s": rep.total_macs, "num_layers": model.config.num_layers}


def cmd_eval(args):
    _require_file(args.checkpoint, "checkpoint")
    _require_file(args.split, "split file")
    model, _, _ = load_checkpoint(args.checkpoint)
    records = load_manifest(args.split)
    if not records:
        raise UsageError(f"split file {args.split} has no samples")
    utts = prepare_records(model, records, _audio_loader(args.audio_root, model.config.sample_rate))
    report = evaluate_utterances(model, utts)
    report.extra.update(_cost_extra(model))
    name = args.name or os.path.splitext(os.path.basename(args.split))[0]
    head = f"agegender {__version__} checkpoint={_file_digest(args.checkpoint)} split={os.path.basename(args.split)}"
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, f"{name}_report.txt"), report.to_text(head))
    _write(os.path.join(args.out, f"{name}_report.csv"), report.to_csv(head))
    print(report.to_text(head), end="")
    return 0


def cmd_cost(args):
    if args.duration is not None and args.duration <= 0:
        raise UsageError(f"--duration must be positive, got {args.duration}")
    if args.config:
        cfg = load_run_config(args.config, {"model.num_layers": args.layers})
        config = cfg.model
    else:
        config = PRESETS[args.preset]()
        if args.layers is not None:
            if not 1 <= args.layers <= config.num_layers:
                raise UsageError(f"--layers must be in 1..{config.num_layers}")
            config = config.with_layers(args.layers)
    try:
        report = count_macs(config, args.duration)
    except ValueError as e:
        raise UsageError(str(e)) from None
    print(f"# agegender {__version__} layers={config.num_layers}")
    print(report.format(), end="")
    return 0


def cmd_experiment(args):
    cfg = load_run_config(args.config, {"seed": args.seed, "experiment.kind": args.kind, "paths.out": args.out})
    with _threads(cfg.threads):
        result = run_experiment(cfg.experiment.kind, cfg)
    out = cfg.paths.out
    head = f"{cfg.provenance()} experiment={result.kind}"
    _write(os.path.join(out, f"{result.kind}.csv"), result.table_csv(head))
    _write(os.path.join(out, f"{result.kind}_tidy.csv"), result.tidy_csv(head))
    print(result.table_csv(head), end="")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="agegender", description="Age/gender speech model toolkit")
    p.add_argument("--version", action="version", version=f"agegender {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic corpus (WAV files + manifest)")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--speakers", type=int, help="speakers per (decade, gender) cell")
    s.add_argument("--samples", type=int, help="samples per speaker")
    s.add_argument("--dataset")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("curate", help="cap, balance and split a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--cap", type=int)
    s.add_argument("--cell-max", type=int)
    s.add_argument("--cell-test", type=int)
    s.add_argument("--dev-frac", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--vad", action="store_true", help="segment samples with VAD before capping")
    s.add_argument("--audio-root")
    s.set_defaults(func=cmd_curate)

    s = sub.add_parser("train", help="fine-tune on curated splits")
    s.add_argument("--config", required=True)
    s.add_argument("--layers", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--splits")
    s.add_argument("--audio-root")
    s.add_argument("--out")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a split file")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", required=True)
    s.add_argument("--audio-root")
    s.add_argument("--out", required=True)
    s.add_argument("--name")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("cost", help="parameter and MAC accounting")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--config")
    g.add_argument("--preset", choices=sorted(PRESETS), default="large")
    s.add_argument("--layers", type=int)
    s.add_argument("--duration", type=float, default=3.0)
    s.set_defaults(func=cmd_cost)

    s = sub.add_parser("experiment", help="run a synthetic experiment")
    s.add_argument("--kind", choices=("combined_vs_single", "layer_sweep", "cross_corpus"))
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print("configuration errors:", file=sys.stderr)
        for err in e.errors:
            print(f"  {err}", file=sys.stderr)
        return 2
    except ManifestError as e:
        print(f"manifest errors in {e.path}:", file=sys.stderr)
        for err in e.problems:
            print(f"  {err}", file=sys.stderr)
        return 2
    except (UsageError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (TrainingError, OSError, ValueError) as e:
        print(f"failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
