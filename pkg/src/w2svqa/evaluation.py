"""Rank and linear correlation against ground-truth quality."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import curve_fit
from scipy.stats import rankdata

from .errors import DomainError


@dataclass(frozen=True)
class EvalReport:
    dataset: str
    n: int
    srcc: float
    plcc: float

    def to_json(self) -> dict:
        return asdict(self)


def _pair(pred, gt):
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(gt, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError(f"prediction and truth shapes differ: {x.shape} vs {y.shape}")
    if len(x) < 3:
        raise DomainError(f"correlation needs at least 3 items, got {len(x)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("non-finite values in correlation input")
    return x, y


def _pearson(x, y):
    xc, yc = x - x.mean(), y - y.mean()
    den = np.sqrt((xc @ xc) * (yc @ yc))
    if den == 0:
        raise DomainError("correlation undefined: an input has zero variance")
    return float(np.clip((xc @ yc) / den, -1.0, 1.0))


def srcc(pred, gt) -> float:
    """Spearman correlation with average ranks for ties."""
    x, y = _pair(pred, gt)
    return _pearson(rankdata(x), rankdata(y))


def _logistic4(x, b1, b2, b3, b4):
    return (b1 - b2) / (1.0 + np.exp(-(x - b3) / np.abs(b4))) + b2


def logistic_map(pred, gt) -> np.ndarray:
    """Fit the four-parameter logistic from predictions to truth and apply it."""
    x, y = _pair(pred, gt)
    p0 = [y.max(), y.min(), float(np.median(x)), float(x.std()) or 1.0]
    params, _ = curve_fit(_logistic4, x, y, p0=p0, maxfev=20000)
    return _logistic4(x, *params)


def plcc(pred, gt, logistic: bool = False) -> float:
    x, y = _pair(pred, gt)
    if logistic:
        x = logistic_map(x, y)
    return _pearson(x, y)


def benchmark(scores: dict, truth: dict, dataset: str = "dataset", logistic: bool = False) -> EvalReport:
    common = sorted(set(scores) & set(truth))
    if len(common) < 3:
        raise DomainError(f"only {len(common)} ids shared between scores and truth; need 3")
    pred = [scores[i] for i in common]
    gt = [truth[i] for i in common]
    return EvalReport(dataset, len(common), srcc(pred, gt), plcc(pred, gt, logistic))


def read_truth_csv(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"video_id", "mos"} <= set(reader.fieldnames or ()):
            raise DomainError(f"{path}: ground truth needs columns video_id, mos")
        return {row["video_id"]: float(row["mos"]) for row in reader}


def write_truth_csv(truth: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("video_id", "mos"))
        for vid in sorted(truth):
            writer.writerow((vid, repr(float(truth[vid]))))


def write_report(report: EvalReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
