"""Joint fine-tuning loop with per-epoch development selection."""

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .config_types import ConfigError
from .metrics import evaluate
from .model import extract_features, forward_features, predict_features
from .objectives import ccc_loss, ce_loss, combined_loss
from .optim import TrainState, adam_step
from .rng import numpy_rng

log = logging.getLogger(__name__)

SELECTION_METRICS = ("dev_combined", "dev_ccc", "dev_uar")
HISTORY_COLUMNS = ("epoch", "train_loss", "dev_mae_years", "dev_ccc", "dev_uar", "selected")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 5
    batch_size: int = 64
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    selection_metric: str = "dev_combined"
    clip_norm: float = None

    def __post_init__(self):
        errs = []
        if not self.learning_rate > 0:
            errs.append(f"learning_rate: must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            errs.append(f"epochs: must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            errs.append(f"batch_size: must be >= 2, got {self.batch_size}")
        if self.selection_metric not in SELECTION_METRICS:
            errs.append(f"selection_metric: must be one of {SELECTION_METRICS}, got {self.selection_metric!r}")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0 <= getattr(self, name) < 1:
                errs.append(f"{name}: must be in [0, 1)")
        if not self.adam_eps > 0:
            errs.append("adam_eps: must be > 0")
        if self.clip_norm is not None and not self.clip_norm > 0:
            errs.append("clip_norm: must be > 0 when set")
        if errs:
            raise ConfigError(errs)


@dataclass
class Utterance:
    features: np.ndarray
    age_years: float
    gender: int


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_mae_years: float
    dev_ccc: float
    dev_uar: float
    dev_score: float
    selected: bool = False


def prepare(model, waveforms, labels):
    """Run the frozen conv stage once per waveform."""
    return [Utterance(extract_features(model, w), float(a), int(g)) for w, (a, g) in zip(waveforms, labels)]


def prepare_records(model, records, audio_of):
    return prepare(model, [audio_of(r) for r in records], [(r.age_years, r.gender_index) for r in records])


def batch_loss(model, batch, rng):
    """Loss over a batch in train mode (graph attached)."""
    ages, logits = [], []
    for u in batch:
        outs = forward_features(model, u.features, "train", rng)
        if "age" in outs:
            ages.append(outs["age"])
        if "gender" in outs:
            logits.append(outs["gender"])
    losses = []
    if ages:
        target = np.array([u.age_years / 100.0 for u in batch])
        losses.append(ccc_loss(T.concat(ages), target))
    if logits:
        losses.append(ce_loss(T.stack(logits), [u.gender for u in batch]))
    return combined_loss(*losses) if len(losses) == 2 else losses[0]


def dev_score(report, metric, heads):
    if metric == "dev_ccc" or "gender" not in heads:
        return report.ccc
    if metric == "dev_uar" or "age" not in heads:
        return report.gender_uar
    return 0.5 * (report.ccc + report.gender_uar)


def evaluate_utterances(model, utts):
    return evaluate(predict_features(model, [u.features for u in utts]), [(u.age_years, u.gender) for u in utts])


def make_batches(n, batch_size, rng):
    order = rng.permutation(n)
    batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    return [b for b in batches if len(b) >= 2]


def select_epoch(scores):
    """1-based epoch with the highest score; the earliest wins ties."""
    if not scores:
        raise ValueError("no epochs to select from")
    return int(np.argmax(scores)) + 1


def train(model, train_set, devel_set, config, on_epoch=None):
    """Fine-tune ``model`` in place; returns ``(best_model, history)``.

    The returned model is a snapshot taken at the epoch with the highest
    development score (earliest epoch on ties) and carries its optimiser
    state in ``meta['train_state']``.
    """
    if not train_set or not devel_set:
        raise TrainingError("train and devel sets must be non-empty")
    if len(train_set) < 2:
        raise TrainingError("need at least 2 training utterances (CCC needs a batch of 2)")
    state = TrainState()
    drop_rng = numpy_rng(config.seed, "dropout")
    names = model.trainable_names()
    history = []
    best = None
    for epoch in range(1, config.epochs + 1):
        batches = make_batches(len(train_set), config.batch_size, numpy_rng(config.seed, f"shuffle/{epoch}"))
        losses = []
        for idx in batches:
            model.zero_grad()
            loss = batch_loss(model, [train_set[i] for i in idx], drop_rng)
            value = float(loss.data)
            if not math.isfinite(value):
                losses.append(value)
                continue
            loss.backward()
            adam_step(model.params, {n: model.params[n].grad for n in names}, model.trainable, state,
                      config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps,
                      config.clip_norm)
            losses.append(value)
        finite = [v for v in losses if math.isfinite(v)]
        if not finite:
            raise TrainingError(f"epoch {epoch}: every batch loss was non-finite")
        model.zero_grad()
        report = evaluate_utterances(model, devel_set)
        score = dev_score(report, config.selection_metric, model.heads)
        rec = EpochRecord(epoch, float(np.mean(finite)), report.mae_years, report.ccc, report.gender_uar, score)
        history.append(rec)
        state.epoch = epoch
        if best is None or score > state.best_dev_score:
            state.best_dev_score = score
            state.best_epoch = epoch
            best = model.copy()
            best.meta["train_state"] = _snapshot(state)
        log.info("epoch %d loss %.4f dev score %.4f", epoch, rec.train_loss, score)
        if on_epoch is not None:
            on_epoch(rec)
    for rec in history:
        rec.selected = rec.epoch == state.best_epoch
    best.meta["epoch"] = state.best_epoch
    return best, history


def _snapshot(state):
    return TrainState(state.step, {k: v.copy() for k, v in state.m.items()},
                      {k: v.copy() for k, v in state.v.items()}, state.epoch, state.best_dev_score,
                      state.best_epoch, state.rejected_steps)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def history_csv(history, header_lines=()):
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_COLUMNS)
    for r in history:
        w.writerow([_fmt(getattr(r, c)) for c in HISTORY_COLUMNS])
    return buf.getvalue()


def parse_history(text):
    rows = [line for line in text.splitlines() if line and not line.startswith("#")]
    return list(csv.DictReader(rows))
