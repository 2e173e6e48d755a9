"""Iterative weak-to-strong training on a synthetic, desk-scale corpus.

Stage 1 trains a student on teacher-ensemble pairs plus severity-ladder
pairs.  Each later stage mines a fresh pool: gMAD pairs where the prior
student and a teacher disagree most (labelled by the teachers plus the
prior student), and ladder pairs the prior student gets wrong (labelled by
severity).  A fresh student then trains on the mined pairs plus a carried-
over sample of earlier annotations.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass

import numpy as np

from .annotation import (
    PairAnnotation,
    PredictionStore,
    ScorerPrediction,
    annotate_corpus,
    sample_pairs,
    severity_pairs,
)
from .distortions import SPATIAL, severity_ladder
from .errors import DomainError, PreconditionError
from .evaluation import benchmark
from .gmad import mine_gmad_multi, misclassified_synthetic
from .inference import calibrate
from .metrics import METRIC_NAMES, MetricConfig, MetricVector, metric_vector
from .student import StudentRanker, TrainConfig, anchor_block, predict_labels, predict_pair, train_student
from .synthetic import corpus_source

STUDENT_ID = "student"


# -- corpus --------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusConfig:
    n_sources: int = 40
    size: int = 64
    n_frames: int = 4
    fps: int = 25
    families: tuple = SPATIAL


@dataclass
class Corpus:
    features: dict   # clip id -> MetricVector
    truth: dict      # clip id -> -level
    ladders: dict    # source id -> clip ids, mildest first
    families: dict   # source id -> distortion family

    def clips_of(self, sources) -> list:
        return [c for s in sources for c in self.ladders[s]]


def build_corpus(config: CorpusConfig = CorpusConfig(), seed: int = 0,
                 metric_config: MetricConfig = MetricConfig()) -> Corpus:
    features, truth, ladders, families = {}, {}, {}, {}
    for s in range(config.n_sources):
        src_seed = seed * 100_003 + s
        fam = config.families[s % len(config.families)]
        src = corpus_source(src_seed, config.size, config.n_frames, config.fps)
        sid = f"s{s:03d}"
        ids = []
        for level, clip in enumerate(severity_ladder(src, fam, seed=src_seed), start=1):
            cid = f"{sid}_{fam}_{level}"
            features[cid] = metric_vector(clip, metric_config)
            truth[cid] = -float(level)
            ids.append(cid)
        ladders[sid], families[sid] = ids, fam
    return Corpus(features, truth, ladders, families)


# -- script teachers -------------------------------------------------------------

@dataclass(frozen=True)
class TeacherSpec:
    """Linear scorer over standardised metrics, minus ``|z|`` penalties, plus noise."""
    name: str
    weights: tuple                # ((metric, weight), ...)
    noise: float = 0.5            # std of added noise, in units of the clean score's std
    deviation: tuple = ()         # ((metric, weight), ...) penalising distance from the corpus mean


DEFAULT_TEACHERS = (
    TeacherSpec("sharpness", (("blur", 1.0), ("si", 0.6), ("contrast", 0.3)), 0.6),
    TeacherSpec("cleanliness", (("noise", -1.0), ("contrast", 0.5), ("blockiness", -0.3)), 0.6),
    TeacherSpec("exposure", (("contrast", 0.6), ("colourfulness", 0.3)), 0.6, (("luminance", 1.0),)),
)


def _standardised(features: dict):
    ids = sorted(features)
    x = np.stack([features[i].as_array() for i in ids])
    sd = x.std(axis=0)
    z = (x - x.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    return ids, z


def teacher_scores(features: dict, teachers=DEFAULT_TEACHERS, seed: int = 0) -> dict:
    """Teacher name -> {clip id: score}; every teacher is standardised to one shared scale."""
    ids, z = _standardised(features)
    col = {m: k for k, m in enumerate(METRIC_NAMES)}
    out = {}
    for t_idx, spec in enumerate(teachers):
        clean = np.zeros(len(ids))
        for m, w in spec.weights:
            clean += w * z[:, col[m]]
        for m, w in spec.deviation:
            clean -= w * np.abs(z[:, col[m]])
        sd = clean.std()
        clean = clean / sd if sd > 0 else clean
        rng = np.random.default_rng([seed, t_idx])
        noisy = clean + rng.normal(0.0, spec.noise, len(ids))
        noisy = (noisy - noisy.mean()) / noisy.std()
        out[spec.name] = dict(zip(ids, noisy.tolist()))
    return out


def prediction_store(scores: dict, ids) -> PredictionStore:
    return PredictionStore(ScorerPrediction(m, v, scores[m][v]) for m in sorted(scores) for v in ids)


# -- student scoring ---------------------------------------------------------------

def choose_anchors(pseudo: dict, n_anchors: int = 5) -> list:
    """Ids nearest the evenly spaced percentiles (10/30/50/70/90 for five anchors)."""
    ids = sorted(pseudo)
    vals = np.array([pseudo[i] for i in ids])
    pcts = 100.0 * (np.arange(n_anchors) + 0.5) / n_anchors
    chosen = []
    for p in pcts:
        target = np.percentile(vals, p)
        order = np.lexsort((np.arange(len(ids)), np.abs(vals - target)))
        pick = next(ids[k] for k in order if ids[k] not in chosen)
        chosen.append(pick)
    return chosen


@dataclass
class Calibrator:
    model: StudentRanker
    anchors: list          # MetricVectors
    block: np.ndarray

    @classmethod
    def build(cls, model, anchor_vectors):
        return cls(model, list(anchor_vectors), anchor_block(model, anchor_vectors))

    def score(self, vec: MetricVector) -> float:
        fwd = [predict_pair(self.model, a, vec) for a in self.anchors]
        rev = [predict_pair(self.model, vec, a) for a in self.anchors]
        return calibrate(fwd, self.block, reverse=rev)

    def score_all(self, features: dict, ids) -> dict:
        return {i: self.score(features[i]) for i in sorted(ids)}


def _zmap(scores: dict, reference: dict) -> dict:
    """Affinely map ``scores`` onto the mean/std of ``reference`` over shared ids."""
    ids = sorted(scores)
    x = np.array([scores[i] for i in ids])
    r = np.array([reference[i] for i in ids])
    sx = x.std()
    mapped = (x - x.mean()) / (sx if sx > 0 else 1.0) * r.std() + r.mean()
    return dict(zip(ids, mapped.tolist()))


# -- stages ----------------------------------------------------------------------

@dataclass(frozen=True)
class StageConfig:
    stage: int
    n_ensemble_pairs: int = 250      # stage 1 only
    severity: bool = True            # stage 1: all ladder pairs
    k_levels: int = 10
    per_level: int = 2
    carryover: float = 0.2
    max_misclassified: int | None = None


@dataclass(frozen=True)
class W2SConfig:
    seed: int = 0
    corpus: CorpusConfig = CorpusConfig()
    teachers: tuple = DEFAULT_TEACHERS
    held_out_fraction: float = 0.25
    n_anchors: int = 5
    label_rule: str = "verbatim"
    train: TrainConfig = TrainConfig()
    stages: tuple = (StageConfig(1), StageConfig(2), StageConfig(3))


@dataclass
class StageResult:
    stage: int
    model: StudentRanker
    annotations: list            # full training set, carryover included
    new_annotations: list        # produced in this stage
    report: dict


@dataclass
class RunState:
    config: W2SConfig
    corpus: Corpus
    teachers: dict
    splits: dict                 # "held_out" / 1 / 2 / 3 -> source ids
    results: list = field(default_factory=list)


def split_sources(sources, held_out_fraction, n_stages, seed):
    rng = np.random.default_rng([seed, 7])
    order = [sources[k] for k in rng.permutation(len(sources))]
    n_held = max(1, round(held_out_fraction * len(order)))
    rest = order[n_held:]
    splits = {"held_out": sorted(order[:n_held])}
    for k, chunk in enumerate(np.array_split(np.arange(len(rest)), n_stages), start=1):
        splits[k] = sorted(rest[i] for i in chunk)
    return splits


def prepare(config: W2SConfig, corpus: Corpus | None = None) -> RunState:
    corpus = corpus if corpus is not None else build_corpus(config.corpus, config.seed)
    teachers = teacher_scores(corpus.features, config.teachers, config.seed)
    splits = split_sources(sorted(corpus.ladders), config.held_out_fraction, len(config.stages), config.seed)
    return RunState(config, corpus, teachers, splits)


def _ensemble_mean(teachers: dict, ids) -> dict:
    return {i: float(np.mean([teachers[m][i] for m in sorted(teachers)])) for i in ids}


def _ladder_pairs(corpus, sources, stage):
    return [a for s in sources for a in severity_pairs(corpus.ladders[s], stage)]


def evaluate(calibrator: Calibrator, corpus: Corpus, ids, dataset="held_out") -> dict:
    scores = calibrator.score_all(corpus.features, ids)
    rep = benchmark(scores, corpus.truth, dataset)
    return {"n": rep.n, "srcc": rep.srcc, "plcc": rep.plcc}


def run_iteration(state: RunState, stage_cfg: StageConfig, prior: StageResult | None = None) -> StageResult:
    cfg, corpus, teachers = state.config, state.corpus, state.teachers
    stage = stage_cfg.stage
    if stage == 1 and prior is not None:
        raise PreconditionError("stage 1 runs without a prior student")
    if stage > 1 and prior is None:
        raise PreconditionError(f"stage {stage} needs the stage {stage - 1} student")
    rng = np.random.default_rng([cfg.seed, stage, 11])
    pool = corpus.clips_of(state.splits[stage])
    counts = {}

    if stage == 1:
        store = prediction_store(teachers, pool)
        pairs = sample_pairs(pool, stage_cfg.n_ensemble_pairs, rng)
        ann = annotate_corpus(pairs, store, stage, cfg.label_rule)
        if ann.errors:
            raise DomainError(f"ensemble annotation failed for {len(ann.errors)} pairs")
        new = list(ann.annotations)
        counts["ensemble"] = len(new)
        if stage_cfg.severity:
            sev = _ladder_pairs(corpus, state.splits[stage], stage)
            new += sev
            counts["severity"] = len(sev)
        carried = []
    else:
        prior_cal, _ = _calibrator(prior.model, corpus, teachers, corpus.clips_of(state.splits[stage - 1]), cfg)
        student = prior_cal.score_all(corpus.features, pool)
        ens = _ensemble_mean(teachers, pool)
        weak = {m: {i: teachers[m][i] for i in pool} for m in sorted(teachers)}
        mined = mine_gmad_multi(weak, student, stage_cfg.k_levels, stage_cfg.per_level)
        labellers = dict(weak)
        labellers[STUDENT_ID] = _zmap(student, ens)
        store = prediction_store(labellers, pool)
        ann = annotate_corpus([(p.first, p.second) for p in mined.pairs], store, stage, cfg.label_rule)
        if ann.errors:
            raise DomainError(f"gMAD annotation failed for {len(ann.errors)} pairs")
        gmad = [PairAnnotation(a.first, a.second, a.label, "gmad", stage) for a in ann.annotations]
        ladder = _ladder_pairs(corpus, state.splits[stage], stage)
        predicted = predict_labels(prior.model, corpus.features, [(a.first, a.second) for a in ladder])
        wrong = misclassified_synthetic(predicted, [a.label for a in ladder])
        hard = [ladder[k] for k in wrong]
        if stage_cfg.max_misclassified is not None and len(hard) > stage_cfg.max_misclassified:
            keep = np.sort(rng.choice(len(hard), stage_cfg.max_misclassified, replace=False))
            hard = [hard[k] for k in keep]
        new = gmad + hard
        counts.update(gmad=len(gmad), misclassified=len(hard), ladder_pairs=len(ladder))
        history = [a for r in state.results for a in r.new_annotations]
        n_carry = int(round(stage_cfg.carryover * len(history)))
        picks = np.sort(rng.choice(len(history), n_carry, replace=False)) if n_carry else []
        carried = [PairAnnotation(h.first, h.second, h.label, h.source, stage, h.origin_stage or h.stage)
                   for h in (history[k] for k in picks)]
        counts["carryover"] = len(carried)

    _assert_disjoint(state, new)
    train_set = new + carried
    tcfg = TrainConfig(**{**asdict(cfg.train), "seed": cfg.train.seed + 1000 * stage + cfg.seed})
    model, train_report = train_student(train_set, corpus.features, tcfg)
    cal, _ = _calibrator(model, corpus, teachers, pool, cfg)
    held = corpus.clips_of(state.splits["held_out"])
    report = {
        "stage": stage,
        "counts": counts,
        "n_train": len(train_set),
        "provenance": _provenance(train_set),
        "train": {"final": train_report.epochs[-1] if train_report.epochs else None,
                  "train_accuracy": train_report.train_accuracy},
        "held_out": evaluate(cal, corpus, held),
    }
    if stage == 1:
        report["teachers"] = {m: benchmark({i: teachers[m][i] for i in held}, corpus.truth, m).srcc
                              for m in sorted(teachers)}
        report["teacher_mean_srcc"] = float(np.mean(list(report["teachers"].values())))
    result = StageResult(stage, model, train_set, new, report)
    state.results.append(result)
    return result


def _calibrator(model, corpus, teachers, pool, cfg):
    anchors = choose_anchors(_ensemble_mean(teachers, pool), cfg.n_anchors)
    return Calibrator.build(model, [corpus.features[a] for a in anchors]), anchors


def final_calibrator(state: RunState):
    """Calibrator of the last stage's student, anchored in that stage's pool; also returns anchor ids."""
    last = state.results[-1]
    pool = state.corpus.clips_of(state.splits[last.stage])
    return _calibrator(last.model, state.corpus, state.teachers, pool, state.config)


def _provenance(train_set):
    out = {}
    for a in train_set:
        key = f"{a.source}@{a.origin_stage or a.stage}"
        out[key] = out.get(key, 0) + 1
    return dict(sorted(out.items()))


def _assert_disjoint(state, new):
    seen = {a.pair_id for r in state.results for a in r.new_annotations}
    clash = [a.pair_id for a in new if a.pair_id in seen]
    if clash:
        raise DomainError(f"stage data overlaps earlier stages on {len(clash)} pairs, e.g. {clash[0]}")


def run_all(config: W2SConfig, corpus: Corpus | None = None) -> RunState:
    state = prepare(config, corpus)
    prior = None
    for stage_cfg in config.stages:
        prior = run_iteration(state, stage_cfg, prior)
    return state


# -- config plumbing ---------------------------------------------------------------

def config_to_dict(obj):
    if is_dataclass(obj):
        return {f.name: config_to_dict(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [config_to_dict(v) for v in obj]
    return obj


def config_digest(config: W2SConfig) -> str:
    blob = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
