"""Five-level pairwise rank labels from teacher ensembles and severity ladders.

Every stored label describes the *second* video of a pair relative to the
first.  The ensemble rule is stated for the first video, so it is mirrored
before storage.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .artifacts import read_jsonl, write_jsonl
from .errors import DegenerateVarianceError, DomainError, InsufficientEnsembleError


class RankLabel(IntEnum):
    INFERIOR = 1
    WORSE = 2
    SIMILAR = 3
    BETTER = 4
    SUPERIOR = 5

    @property
    def mirror(self) -> "RankLabel":
        return RankLabel(6 - self.value)

    @property
    def token(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value) -> "RankLabel":
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise DomainError(f"unknown rank label {value!r}") from None
        return cls(int(value))


SOURCES = ("ensemble", "severity", "gmad")


@dataclass(frozen=True)
class ScorerPrediction:
    model_id: str
    video_id: str
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise DomainError(f"non-finite score from {self.model_id} on {self.video_id}")


@dataclass(frozen=True)
class PairAnnotation:
    first: str
    second: str
    label: RankLabel
    source: str
    stage: int = 1
    origin_stage: int | None = None  # stage that produced a carried-over pair

    def __post_init__(self):
        if self.first == self.second:
            raise DomainError(f"pair compares {self.first!r} with itself")
        if self.source not in SOURCES:
            raise DomainError(f"unknown annotation source {self.source!r}")
        if self.stage not in (1, 2, 3):
            raise DomainError(f"stage must be 1, 2 or 3, got {self.stage}")
        if self.source == "severity" and self.label == RankLabel.SIMILAR:
            raise DomainError("severity pairs never carry 'similar'")
        object.__setattr__(self, "label", RankLabel(self.label))

    @property
    def pair_id(self) -> str:
        return f"{self.first}|{self.second}"

    def mirrored(self) -> "PairAnnotation":
        return PairAnnotation(self.second, self.first, self.label.mirror, self.source,
                              self.stage, self.origin_stage)

    def to_json(self) -> dict:
        rec = {"first": self.first, "second": self.second, "label": self.label.token,
               "source": self.source, "stage": self.stage}
        if self.origin_stage is not None:
            rec["origin_stage"] = self.origin_stage
        return rec

    @classmethod
    def from_json(cls, rec: dict) -> "PairAnnotation":
        return cls(rec["first"], rec["second"], RankLabel.parse(rec["label"]), rec["source"],
                   int(rec.get("stage", 1)), rec.get("origin_stage"))


def ensemble_stats(preds, ddof: int = 0) -> tuple[float, float]:
    """Mean and variance (population by default) of one video's teacher scores."""
    preds = list(preds)
    if len(preds) < 2:
        raise InsufficientEnsembleError(f"need at least 2 predictions, got {len(preds)}")
    videos = {p.video_id for p in preds}
    if len(videos) != 1:
        raise DomainError(f"predictions span several videos: {sorted(videos)}")
    scores = np.array([p.score for p in preds], dtype=np.float64)
    return float(scores.mean()), float(scores.var(ddof=ddof))


def first_relative_label(delta: float, sigma: float, rule: str = "verbatim") -> RankLabel:
    """Bucket ``delta = mean_A - mean_B`` against ``sigma`` for video A.

    ``verbatim`` keeps the published inequalities: strict ``>`` on the
    upper side of each bucket boundary, weak ``<=`` below it, including on
    the negative side.  ``symmetric`` mirrors the positive boundaries so
    ``label(-delta) == mirror(label(delta))`` holds exactly.
    """
    if sigma == 0:
        if delta != 0:
            raise DegenerateVarianceError(f"zero pooled deviation with nonzero difference {delta}")
        return RankLabel.SIMILAR
    if rule == "verbatim":
        if delta > 2 * sigma:
            return RankLabel.SUPERIOR
        if delta > sigma:
            return RankLabel.BETTER
        if delta > -sigma:
            return RankLabel.SIMILAR
        if delta > -2 * sigma:
            return RankLabel.WORSE
        return RankLabel.INFERIOR
    if rule == "symmetric":
        if delta >= 0:
            return first_relative_label(delta, sigma, "verbatim") if delta > sigma else RankLabel.SIMILAR
        return first_relative_label(-delta, sigma, "verbatim").mirror
    raise DomainError(f"unknown label rule {rule!r}")


def label_pair(mean_a, var_a, mean_b, var_b, rule: str = "verbatim") -> RankLabel:
    """Stored label (B relative to A) from ensemble statistics."""
    if var_a < 0 or var_b < 0:
        raise DomainError("variances must be non-negative")
    delta = mean_a - mean_b
    sigma = math.sqrt(var_a + var_b)
    return first_relative_label(delta, sigma, rule).mirror


def severity_label(i: int, j: int) -> RankLabel:
    """Label of level ``j`` relative to level ``i``; lower level is better."""
    if i == j:
        raise DomainError(f"identical severity levels ({i}) are excluded")
    gap = abs(i - j)
    if j < i:
        return RankLabel.SUPERIOR if gap > 1 else RankLabel.BETTER
    return RankLabel.INFERIOR if gap > 1 else RankLabel.WORSE


class PredictionStore:
    """Teacher scores keyed by video id."""

    def __init__(self, preds=()):
        self._by_video = defaultdict(list)
        for p in preds:
            self.add(p)

    def add(self, pred: ScorerPrediction) -> None:
        self._by_video[pred.video_id].append(pred)

    def __contains__(self, video_id):
        return video_id in self._by_video

    def get(self, video_id):
        return list(self._by_video.get(video_id, ()))

    @property
    def video_ids(self):
        return sorted(self._by_video)

    @property
    def model_ids(self):
        return sorted({p.model_id for ps in self._by_video.values() for p in ps})

    def scores_of(self, model_id) -> dict:
        return {v: p.score for v, ps in self._by_video.items() for p in ps if p.model_id == model_id}


def oriented_label(a, b, stats, rule="verbatim") -> RankLabel:
    """Label ``b`` relative to ``a``, always evaluated with the smaller id first.

    The verbatim buckets are half-open on the same side for positive and
    negative differences, so evaluating from both ends of a pair would
    disagree exactly on the boundaries.  A canonical orientation keeps
    swapped pairs mirrored.
    """
    if a <= b:
        return label_pair(*stats[a], *stats[b], rule=rule)
    return label_pair(*stats[b], *stats[a], rule=rule).mirror


@dataclass
class AnnotationReport:
    annotations: list
    errors: dict  # pair index -> message


def annotate_corpus(pairs, store: PredictionStore, stage: int = 1, rule: str = "verbatim",
                    ddof: int = 0) -> AnnotationReport:
    """Label each pair from ensemble statistics; failures are itemized per pair."""
    stats = {}
    out, errors = [], {}
    for idx, (a, b) in enumerate(pairs):
        try:
            for v in (a, b):
                if v not in stats:
                    stats[v] = ensemble_stats(store.get(v), ddof=ddof)
            label = oriented_label(a, b, stats, rule)
            out.append(PairAnnotation(a, b, label, "ensemble", stage))
        except (InsufficientEnsembleError, DegenerateVarianceError, DomainError) as exc:
            errors[idx] = f"{a} vs {b}: {exc}"
    return AnnotationReport(out, errors)


def severity_pairs(ladder_ids, stage: int = 1):
    """Every ordered pair of distinct levels from one ladder (ids mildest first)."""
    out = []
    for i, a in enumerate(ladder_ids, start=1):
        for j, b in enumerate(ladder_ids, start=1):
            if i != j:
                out.append(PairAnnotation(a, b, severity_label(i, j), "severity", stage))
    return out


def sample_pairs(video_ids, n_pairs: int, rng: np.random.Generator):
    """Uniform sample of unordered pairs without replacement, random order within each."""
    combos = list(itertools.combinations(sorted(video_ids), 2))
    if n_pairs > len(combos):
        raise DomainError(f"requested {n_pairs} pairs from only {len(combos)} available")
    picks = np.sort(rng.choice(len(combos), size=n_pairs, replace=False))
    flips = rng.random(n_pairs) < 0.5
    return [(combos[k][1], combos[k][0]) if f else combos[k] for k, f in zip(picks, flips)]


# -- JSONL -----------------------------------------------------------------

def read_predictions(path) -> PredictionStore:
    return PredictionStore(ScorerPrediction(str(r["model_id"]), str(r["video_id"]), float(r["score"]))
                           for r in read_jsonl(path))


def write_predictions(preds, path, header=None) -> None:
    write_jsonl(path, ({"model_id": p.model_id, "video_id": p.video_id, "score": p.score} for p in preds), header)


def read_annotations(path) -> list:
    return [PairAnnotation.from_json(r) for r in read_jsonl(path)]


def write_annotations(annotations, path, header=None) -> None:
    write_jsonl(path, (a.to_json() for a in annotations), header)
