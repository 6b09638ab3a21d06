"""Evaluation: MAE, CCC, ACC, UAR and confusion matrices for the age, gender,
4-class age-group and 7-class age/gender tasks."""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .config_types import GENDERS
from .objectives import ccc

AGE_GROUPS = ("child", "youth", "adult", "senior")
# lower bounds (rounded years) of youth, adult, senior
DEFAULT_AGE_BOUNDS = (15, 25, 55)
COMBINED7 = ("child", "youth_female", "youth_male", "adult_female", "adult_male",
             "senior_female", "senior_male")


def round_half_up(x):
    return int(math.floor(x + 0.5))


def map_age_to_group(age_years, bounds=DEFAULT_AGE_BOUNDS):
    if age_years < 0:
        raise ValueError(f"age must be >= 0, got {age_years}")
    years = round_half_up(age_years)
    for i, lo in enumerate(bounds):
        if years < lo:
            return AGE_GROUPS[i]
    return AGE_GROUPS[-1]


def map_to_combined7(age_group, gender):
    """Returns (class index, consistent).

    Children map to class 0 regardless of gender.  A child gender label with
    a non-child age group is inconsistent; it also maps to 0 and ``consistent``
    is False.
    """
    if age_group not in AGE_GROUPS:
        raise ValueError(f"unknown age group {age_group!r}")
    if isinstance(gender, (int, np.integer)):
        gender = GENDERS[gender]
    if gender not in GENDERS:
        raise ValueError(f"unknown gender {gender!r}")
    if age_group == "child":
        return 0, True
    if gender == "child":
        return 0, False
    return 1 + 2 * (AGE_GROUPS.index(age_group) - 1) + (gender == "male"), True


def confusion_matrix(truth, pred, n):
    cm = np.zeros((n, n), dtype=np.int64)
    for t, p in zip(truth, pred):
        cm[t, p] += 1
    return cm


def recalls(cm):
    """Per-class recall; NaN where a class has no support."""
    support = cm.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(support > 0, np.diag(cm) / np.maximum(support, 1), np.nan)


def uar(cm):
    r = recalls(cm)
    return float(np.nanmean(r)) if np.any(~np.isnan(r)) else float("nan")


def accuracy(cm):
    total = cm.sum()
    return float(np.trace(cm) / total) if total else float("nan")


@dataclass
class TaskResult:
    labels: tuple
    confusion: np.ndarray

    @property
    def acc(self):
        return accuracy(self.confusion)

    @property
    def uar(self):
        return uar(self.confusion)

    @property
    def recalls(self):
        return recalls(self.confusion)

    def missing(self):
        return [lab for lab, s in zip(self.labels, self.confusion.sum(axis=1)) if s == 0]


@dataclass
class EvalReport:
    n: int
    mae_years: float = None
    ccc: float = None
    mean_pred_years: float = None
    mean_true_years: float = None
    tasks: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def metric(self, task, name):
        res = self.tasks.get(task)
        if res is None:
            return None
        return getattr(res, name)

    @property
    def gender_acc(self):
        return self.metric("gender", "acc")

    @property
    def gender_uar(self):
        return self.metric("gender", "uar")

    @property
    def age4_acc(self):
        return self.metric("age4", "acc")

    @property
    def age4_uar(self):
        return self.metric("age4", "uar")

    @property
    def combined7_acc(self):
        return self.metric("combined7", "acc")

    @property
    def combined7_uar(self):
        return self.metric("combined7", "uar")

    def rows(self):
        """(task, metric, value) triples; age scalars use task ``age``."""
        out = [("all", "n", self.n)]
        for key in ("mae_years", "ccc", "mean_pred_years", "mean_true_years"):
            if getattr(self, key) is not None:
                out.append(("age", key, getattr(self, key)))
        for task, res in self.tasks.items():
            out.append((task, "acc", res.acc))
            out.append((task, "uar", res.uar))
            for lab, r in zip(res.labels, res.recalls):
                out.append((task, f"recall.{lab}", r))
            for i, ti in enumerate(res.labels):
                for j, pj in enumerate(res.labels):
                    out.append((task, f"confusion.{ti}.{pj}", int(res.confusion[i, j])))
        for k, v in self.extra.items():
            out.append(("cost", k, v))
        return out

    def flat(self):
        """Flat key/value view: ``mae_years``, ``gender_uar``, ``age4_confusion.child.youth``..."""
        out = {}
        for task, metric, value in self.rows():
            out[metric if task in ("all", "age", "cost") else f"{task}_{metric}"] = value
        for i, w in enumerate(self.warnings):
            out[f"warning.{i}"] = w
        return out

    def to_text(self, header=None):
        lines = [] if header is None else [f"# {header}"]
        for k, v in self.flat().items():
            lines.append(f"{k}={_fmt(v)}")
        return "\n".join(lines) + "\n"

    def to_csv(self, header=None):
        buf = io.StringIO()
        if header is not None:
            buf.write(f"# {header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["task", "metric", "value"])
        for task, metric, value in self.rows():
            w.writerow([task, metric, _fmt(value)])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def parse_report_text(text):
    out = {}
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        k, _, v = line.partition("=")
        out[k] = v
    return out


def evaluate(preds, truths, bounds=DEFAULT_AGE_BOUNDS):
    """Score predictions against ``(age_years, gender_index)`` truths.

    Age metrics use the clamped years of each prediction.  Tasks whose head
    is absent from the predictions are skipped.
    """
    preds = list(preds)
    truths = list(truths)
    if not preds:
        raise ValueError("evaluate needs at least one prediction")
    if len(preds) != len(truths):
        raise ValueError(f"{len(preds)} predictions but {len(truths)} truths")
    report = EvalReport(n=len(preds))
    true_age = np.array([float(a) for a, _ in truths])
    true_gender = [int(g) for _, g in truths]
    has_age = preds[0].age_norm is not None
    has_gender = preds[0].gender_scores is not None

    if has_age:
        pa = np.array([p.age_years for p in preds])
        report.mae_years = float(np.mean(np.abs(pa - true_age)))
        report.ccc = ccc(pa, true_age) if len(pa) >= 2 else float("nan")
        report.mean_pred_years = float(pa.mean())
        report.mean_true_years = float(true_age.mean())
        tg = [AGE_GROUPS.index(map_age_to_group(a, bounds)) for a in true_age]
        pg = [AGE_GROUPS.index(map_age_to_group(a, bounds)) for a in pa]
        report.tasks["age4"] = TaskResult(AGE_GROUPS, confusion_matrix(tg, pg, 4))
    if has_gender:
        pgen = [p.gender for p in preds]
        report.tasks["gender"] = TaskResult(GENDERS, confusion_matrix(true_gender, pgen, 3))
    if has_age and has_gender:
        t7, p7 = [], []
        bad_truth = bad_pred = 0
        for a, g, pa_i, pg_i in zip(true_age, true_gender, pa, pgen):
            c, ok = map_to_combined7(map_age_to_group(a, bounds), g)
            bad_truth += not ok
            t7.append(c)
            c, ok = map_to_combined7(map_age_to_group(pa_i, bounds), pg_i)
            bad_pred += not ok
            p7.append(c)
        report.tasks["combined7"] = TaskResult(COMBINED7, confusion_matrix(t7, p7, 7))
        if bad_truth:
            report.warnings.append(f"combined7: {bad_truth} truth labels child gender with non-child age")
        if bad_pred:
            report.warnings.append(f"combined7: {bad_pred} predictions child gender with non-child age")
    for task, res in report.tasks.items():
        missing = res.missing()
        if missing:
            report.warnings.append(f"{task}: no support for {','.join(missing)}; excluded from UAR")
    return report
