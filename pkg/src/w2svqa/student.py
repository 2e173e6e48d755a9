"""Desk-scale pairwise ranking student and its training objective.

The student is a linear softmax over 27 pair features ``[a, b, b - a]``
built from two metric vectors, predicting the five rank tokens for "second
relative to first".  Training mixes cross-entropy with an entropy penalty
whose weight ``lambda`` follows a warm-up schedule and a temperature-scaled
comparison of the two losses.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .annotation import RankLabel
from .errors import DomainError, MissingFeaturesError, TrainingDivergedError
from .inference import ALPHA, TokenDistribution, softmax, symmetrize
from .metrics import METRIC_NAMES, MetricVector

N_CLASSES = 5
N_FEATURES = 3 * len(METRIC_NAMES)
CHECKPOINT_VERSION = 1


# -- losses and schedule -----------------------------------------------------

def entropy(probs: np.ndarray) -> np.ndarray:
    """Row-wise Shannon entropy in nats, with 0 log 0 = 0."""
    p = np.asarray(probs, dtype=np.float64)
    logp = np.log(np.where(p > 0, p, 1.0))
    return -(p * logp).sum(axis=-1)


def confidence_loss(dists) -> float:
    """Mean entropy of the predicted token distributions."""
    rows = [d.as_array() if isinstance(d, TokenDistribution) else np.asarray(d) for d in dists]
    if not rows:
        return 0.0
    return float(entropy(np.vstack(rows)).mean())


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    p = probs[np.arange(len(targets)), targets]
    return float(-np.log(np.maximum(p, 1e-300)).mean())


def combined_loss(ce: float, conf: float, lam: float) -> float:
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda must lie in [0, 1], got {lam}")
    return (1.0 - lam) * ce + lam * conf


@dataclass(frozen=True)
class LossSchedule:
    t: float = 0.0
    t_warmup: float = 0.10
    t_start: float = 0.5
    t_end: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise DomainError(f"training progress must lie in [0, 1], got {self.t}")
        if not 0.0 < self.t_warmup <= 1.0:
            raise DomainError("warm-up fraction must lie in (0, 1]")

    @property
    def warmup_fraction(self) -> float:
        return min(1.0, self.t / self.t_warmup)

    @property
    def temperature(self) -> float:
        return self.t_start + (self.t_end - self.t_start) * self.warmup_fraction

    def at(self, t: float) -> "LossSchedule":
        return replace(self, t=t)


def alpha(l_ce: float, l_conf: float, temperature: float) -> float:
    """``exp(L_conf/T) / (exp(L_conf/T) + exp(L_CE/T))``, evaluated stably."""
    a, b = l_conf / temperature, l_ce / temperature
    m = max(a, b)
    ea, eb = math.exp(a - m), math.exp(b - m)
    return ea / (ea + eb)


def lambda_at(schedule: LossSchedule, l_ce: float, l_conf: float):
    """Return ``(lambda, alpha, T)`` for the schedule's current progress."""
    if not (math.isfinite(l_ce) and math.isfinite(l_conf)):
        raise DomainError("losses must be finite")
    temp = schedule.temperature
    a = alpha(l_ce, l_conf, temp)
    return a * schedule.warmup_fraction, a, temp


# -- model -------------------------------------------------------------------

def pair_features(a, b) -> np.ndarray:
    """``[a, b, b - a]`` for metric vectors (or stacked arrays of them)."""
    a = a.as_array() if isinstance(a, MetricVector) else np.asarray(a, dtype=np.float64)
    b = b.as_array() if isinstance(b, MetricVector) else np.asarray(b, dtype=np.float64)
    return np.concatenate([a, b, b - a], axis=-1)


@dataclass
class StudentRanker:
    weights: np.ndarray                     # (5, 27)
    bias: np.ndarray                        # (5,)
    feat_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    feat_scale: np.ndarray = field(default_factory=lambda: np.ones(N_FEATURES))

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64).reshape(N_CLASSES, N_FEATURES)
        self.bias = np.array(self.bias, dtype=np.float64).reshape(N_CLASSES)
        self.feat_mean = np.array(self.feat_mean, dtype=np.float64).reshape(N_FEATURES)
        self.feat_scale = np.array(self.feat_scale, dtype=np.float64).reshape(N_FEATURES)
        for name in ("weights", "bias", "feat_mean", "feat_scale"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DomainError(f"non-finite student parameter {name}")

    @classmethod
    def zeros(cls) -> "StudentRanker":
        return cls(np.zeros((N_CLASSES, N_FEATURES)), np.zeros(N_CLASSES))

    @classmethod
    def initial(cls, seed: int, feat_mean=None, feat_scale=None, init_scale: float = 0.01) -> "StudentRanker":
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, init_scale, (N_CLASSES, N_FEATURES)), np.zeros(N_CLASSES),
                   np.zeros(N_FEATURES) if feat_mean is None else feat_mean,
                   np.ones(N_FEATURES) if feat_scale is None else feat_scale)

    def copy(self) -> "StudentRanker":
        return StudentRanker(self.weights.copy(), self.bias.copy(), self.feat_mean.copy(), self.feat_scale.copy())

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feat_mean) / self.feat_scale

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.standardize(x) @ self.weights.T + self.bias

    def probs(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.logits(x))

    def to_json(self) -> dict:
        return {"version": CHECKPOINT_VERSION, "weights": self.weights.tolist(), "bias": self.bias.tolist(),
                "feat_mean": self.feat_mean.tolist(), "feat_scale": self.feat_scale.tolist()}

    @classmethod
    def from_json(cls, rec: dict) -> "StudentRanker":
        if rec.get("version") != CHECKPOINT_VERSION:
            raise DomainError(f"unsupported checkpoint version {rec.get('version')!r}")
        return cls(rec["weights"], rec["bias"], rec["feat_mean"], rec["feat_scale"])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "StudentRanker":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def predict_pair(model: StudentRanker, a, b) -> TokenDistribution:
    p = model.probs(pair_features(a, b)[None])[0]
    return TokenDistribution(tuple(p / p.sum()))


def predict_labels(model: StudentRanker, features: dict, pairs) -> list:
    """Argmax label for each (first, second) pair."""
    if not pairs:
        return []
    x = np.stack([pair_features(features[a], features[b]) for a, b in pairs])
    return [RankLabel(int(k) + 1) for k in np.argmax(model.logits(x), axis=1)]


# -- training ----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    lr: float = 0.05
    batch_size: int = 32
    seed: int = 0
    use_conf: bool = True
    mirror: bool = True
    t_warmup: float = 0.10
    init_scale: float = 0.01


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)   # dicts with l_ce, l_conf, lam, alpha, temperature
    n_examples: int = 0
    train_accuracy: float | None = None

    def to_json(self) -> dict:
        return {"epochs": self.epochs, "n_examples": self.n_examples, "train_accuracy": self.train_accuracy}


def _design(annotations, features, mirror):
    missing = sorted({v for a in annotations for v in (a.first, a.second) if v not in features})
    if missing:
        raise MissingFeaturesError(missing)
    firsts = np.stack([features[a.first].as_array() for a in annotations])
    seconds = np.stack([features[a.second].as_array() for a in annotations])
    y = np.array([int(a.label) - 1 for a in annotations])
    x = pair_features(firsts, seconds)
    if mirror:
        x = np.vstack([x, pair_features(seconds, firsts)])
        y = np.concatenate([y, (N_CLASSES - 1) - y])
    return x, y


def feature_stats(x: np.ndarray):
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    return mean, np.where(scale > 1e-12, scale, 1.0)


def train_student(annotations, features: dict, config: TrainConfig = TrainConfig()):
    """Mini-batch gradient descent on ``(1 - lambda) L_CE + lambda L_conf``.

    ``lambda`` is recomputed per batch from the batch losses and treated
    as a constant in the gradient.  Returns ``(model, report)``.
    """
    annotations = list(annotations)
    if not annotations:
        raise DomainError("training needs at least one annotation")
    x, y = _design(annotations, features, config.mirror)
    mean, scale = feature_stats(x)
    model = StudentRanker.initial(config.seed, mean, scale, config.init_scale)
    xs = model.standardize(x)
    n = len(y)
    onehot = np.eye(N_CLASSES)[y]
    rng = np.random.default_rng(config.seed + 1)
    batches_per_epoch = math.ceil(n / config.batch_size)
    total = max(1, config.epochs * batches_per_epoch)
    schedule = LossSchedule(t_warmup=config.t_warmup)
    report = TrainReport(n_examples=n)
    step = 0
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        sums = np.zeros(5)
        for b in range(batches_per_epoch):
            idx = perm[b * config.batch_size:(b + 1) * config.batch_size]
            xb = xs[idx]
            p = softmax(xb @ model.weights.T + model.bias)
            l_ce = cross_entropy(p, y[idx])
            h = entropy(p)
            l_conf = float(h.mean())
            if not (math.isfinite(l_ce) and math.isfinite(l_conf)):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {b}: L_CE={l_ce}, L_conf={l_conf}, "
                    f"max |W|={np.abs(model.weights).max():.3g}")
            if config.use_conf:
                lam, a, temp = lambda_at(schedule.at(step / total), l_ce, l_conf)
            else:
                lam, a, temp = 0.0, 0.0, schedule.at(step / total).temperature
            g_ce = p - onehot[idx]
            g_conf = -p * (np.log(np.maximum(p, 1e-300)) + h[:, None])
            g = ((1.0 - lam) * g_ce + lam * g_conf) / len(idx)
            model.weights -= config.lr * (g.T @ xb)
            model.bias -= config.lr * g.sum(axis=0)
            sums += (l_ce, l_conf, lam, a, temp)
            step += 1
        m = sums / batches_per_epoch
        report.epochs.append(dict(zip(("l_ce", "l_conf", "lam", "alpha", "temperature"), m.tolist())))
    logits = xs @ model.weights.T + model.bias
    report.train_accuracy = float(np.mean(np.argmax(logits, axis=1) == y))
    return model, report


def anchor_block(model: StudentRanker, anchors: list) -> np.ndarray:
    """Reciprocal anchor preference matrix from the student's own comparisons.

    ``raw[i, j]`` is the soft preference for anchor ``i`` when shown second
    after anchor ``j``.
    """
    n = len(anchors)
    raw = np.full((n, n), 0.5)
    for i in range(n):
        for j in range(n):
            if i != j:
                raw[i, j] = float(ALPHA @ predict_pair(model, anchors[j], anchors[i]).as_array())
    return symmetrize(raw)
