"""Hard-pair mining by group maximum differentiation (gMAD).

One model's scores are cut into equal-width levels.  Inside a level that
model sees the videos as roughly equal, so the pair the *other* model
separates most is where the two disagree hardest.  Both role orders are
mined: fixing the weak teacher and fixing the student.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .artifacts import read_jsonl, write_jsonl
from .errors import DomainError

FIX_WEAK = "fix_weak"        # weak levels fixed, student difference maximised
FIX_STUDENT = "fix_student"  # student levels fixed, weak difference maximised
ROLE_ORDERS = (FIX_WEAK, FIX_STUDENT)


@dataclass(frozen=True)
class ScoredPool:
    weak: dict
    student: dict

    def __post_init__(self):
        if set(self.weak) != set(self.student):
            missing = sorted(set(self.weak) ^ set(self.student))
            raise DomainError(f"pool ids lack a weak or student score: {missing[:5]}")
        if not self.weak:
            raise DomainError("scored pool is empty")
        for d in (self.weak, self.student):
            bad = [k for k, v in d.items() if not math.isfinite(v)]
            if bad:
                raise DomainError(f"non-finite scores for {bad[:5]}")

    @property
    def ids(self):
        return sorted(self.weak)

    def swapped(self) -> "ScoredPool":
        return ScoredPool(dict(self.student), dict(self.weak))

    def scores(self, by: str) -> dict:
        if by == "weak":
            return self.weak
        if by == "student":
            return self.student
        raise DomainError(f"unknown scorer {by!r}; expected 'weak' or 'student'")


@dataclass(frozen=True)
class LevelAssignment:
    levels: dict        # id -> level index in 0..k-1
    edges: np.ndarray   # k + 1 edges
    width: float
    degenerate: bool


def partition_levels(pool: ScoredPool, by: str, k_levels: int) -> LevelAssignment:
    """Equal-width levels over the observed range; bins are half-open, the last closed."""
    if k_levels < 2:
        raise DomainError(f"need at least 2 levels, got {k_levels}")
    scores = pool.scores(by)
    ids = pool.ids
    vals = np.array([scores[i] for i in ids], dtype=np.float64)
    lo, hi = float(vals.min()), float(vals.max())
    if hi == lo:
        warnings.warn(f"all {by} scores are identical; every video falls in one level", stacklevel=2)
        return LevelAssignment({i: 0 for i in ids}, np.array([lo, hi]), 0.0, True)
    edges = np.linspace(lo, hi, k_levels + 1)
    lvl = np.searchsorted(edges[1:-1], vals, side="right")
    return LevelAssignment(dict(zip(ids, lvl.tolist())), edges, (hi - lo) / k_levels, False)


@dataclass(frozen=True)
class GMADPair:
    first: str
    second: str
    role_order: str
    level: int
    disagreement: float
    low_value: bool = False

    def to_json(self) -> dict:
        return {"first": self.first, "second": self.second, "role_order": self.role_order,
                "level": self.level, "disagreement": self.disagreement, "low_value": self.low_value}


@dataclass
class MiningResult:
    pairs: list
    skipped: list  # (role_order, level) with fewer than two videos


def _top_pairs(members, other, per_level):
    """Top pairs by |other difference|, ties to the lexicographically smallest id pair."""
    ids = sorted(members)
    vals = np.array([other[i] for i in ids])
    iu, ju = np.triu_indices(len(ids), k=1)
    diff = np.abs(vals[iu] - vals[ju])
    # ids are sorted, so (iu, ju) order is lexicographic (min id, max id)
    order = np.lexsort((ju, iu, -diff))[:per_level]
    out = []
    for k in order:
        a, b = ids[iu[k]], ids[ju[k]]
        hi, lo = (a, b) if other[a] >= other[b] else (b, a)
        out.append((hi, lo, float(diff[k])))
    return out


def _mine_role(pool, role, k_levels, per_level):
    fixed, other = ("weak", pool.student) if role == FIX_WEAK else ("student", pool.weak)
    assign = partition_levels(pool, fixed, k_levels)
    vals = np.array(list(other.values()))
    threshold = (vals.max() - vals.min()) / k_levels
    groups = {}
    for vid, lvl in assign.levels.items():
        groups.setdefault(lvl, []).append(vid)
    pairs, skipped = [], []
    for lvl in range(k_levels):
        members = groups.get(lvl, [])
        if len(members) < 2:
            skipped.append((role, lvl))
            continue
        for hi, lo, diff in _top_pairs(members, other, per_level):
            pairs.append(GMADPair(hi, lo, role, lvl, diff, bool(diff <= threshold)))
    return pairs, skipped


def mine_gmad(pool: ScoredPool, k_levels: int = 10, per_level: int = 1) -> MiningResult:
    """Both role orders; within each fixed level, the ``per_level`` most separated pairs.

    A pair is ``low_value`` when its disagreement does not exceed one level
    width of the other model, i.e. the two models effectively agree on it.
    """
    if per_level < 1:
        raise DomainError("per_level budget must be at least 1")
    pairs, skipped = [], []
    for role in ROLE_ORDERS:
        p, s = _mine_role(pool, role, k_levels, per_level)
        pairs += p
        skipped += s
    return MiningResult(pairs, skipped)


def mine_gmad_multi(weak_scores: dict, student: dict, k_levels: int = 10, per_level: int = 1) -> MiningResult:
    """Union over several weak models, deduplicated by unordered video pair."""
    seen, pairs, skipped = set(), [], []
    for model_id in sorted(weak_scores):
        ids = set(weak_scores[model_id]) & set(student)
        pool = ScoredPool({i: weak_scores[model_id][i] for i in ids}, {i: student[i] for i in ids})
        res = mine_gmad(pool, k_levels, per_level)
        skipped += [(model_id, role, lvl) for role, lvl in res.skipped]
        for p in res.pairs:
            key = frozenset((p.first, p.second))
            if key not in seen:
                seen.add(key)
                pairs.append(p)
    return MiningResult(pairs, skipped)


def misclassified_synthetic(predicted, truth, adjacent_tolerance: bool = False) -> list:
    """Keys (or indices) of pairs whose predicted label differs from the severity label."""
    if isinstance(predicted, dict) or isinstance(truth, dict):
        if not (isinstance(predicted, dict) and isinstance(truth, dict)) or set(predicted) != set(truth):
            raise DomainError("predictions and truth cover different pairs")
        keys = sorted(truth)
    else:
        predicted, truth = list(predicted), list(truth)
        if len(predicted) != len(truth):
            raise DomainError(f"{len(predicted)} predictions for {len(truth)} labels")
        keys = range(len(truth))
    out = []
    for k in keys:
        gap = abs(int(predicted[k]) - int(truth[k]))
        if gap > (1 if adjacent_tolerance else 0):
            out.append(k)
    return out


def read_scored_pool(path) -> ScoredPool:
    recs = read_jsonl(path)
    return ScoredPool({str(r["video_id"]): float(r["weak_score"]) for r in recs},
                      {str(r["video_id"]): float(r["student_score"]) for r in recs})


def write_pairs(pairs, path, header=None) -> None:
    write_jsonl(path, (p.to_json() for p in pairs), header)
