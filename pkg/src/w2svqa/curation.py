"""Histogram-matching subset selection over the nine low-level metrics.

The objective is the per-metric L1 distance between the selected subset's
normalised histograms and a target, summed over metrics.  ``exact`` runs a
depth-first branch-and-bound (small pools only); ``greedy`` adds one video
at a time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ModeError
from .metrics import METRIC_NAMES, MetricVector

EXACT_POOL_CAP = 25
DEFAULT_BINS = 10


@dataclass(frozen=True)
class HistogramSet:
    edges: np.ndarray   # (n_metrics, bins + 1), strictly increasing per row
    masses: np.ndarray  # (n_metrics, bins), each row sums to 1

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.float64)
        masses = np.asarray(self.masses, dtype=np.float64)
        if edges.shape != (masses.shape[0], masses.shape[1] + 1):
            raise DomainError(f"edges {edges.shape} do not fit masses {masses.shape}")
        if np.any(np.diff(edges, axis=1) <= 0):
            raise DomainError("histogram edges must be strictly increasing")
        if np.any(masses < 0) or np.any(np.abs(masses.sum(axis=1) - 1) > 1e-9):
            raise DomainError("histogram masses must be non-negative and sum to 1")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "masses", masses)

    @property
    def bins(self) -> int:
        return self.masses.shape[1]

    def to_json(self) -> dict:
        return {name: {"edges": e.tolist(), "masses": m.tolist()}
                for name, e, m in zip(METRIC_NAMES, self.edges, self.masses)}

    @classmethod
    def from_json(cls, rec: dict) -> "HistogramSet":
        missing = [m for m in METRIC_NAMES if m not in rec]
        if missing:
            raise DomainError(f"target histogram lacks metrics {missing}")
        return cls(np.array([rec[m]["edges"] for m in METRIC_NAMES]),
                   np.array([rec[m]["masses"] for m in METRIC_NAMES]))


@dataclass(frozen=True)
class CurationPlan:
    selected: tuple
    distances: dict
    objective: float

    def to_json(self) -> dict:
        return {"selected": list(self.selected), "distances": self.distances, "objective": self.objective}


def _as_matrix(vectors) -> np.ndarray:
    rows = [v.as_array() if isinstance(v, MetricVector) else np.asarray(v, dtype=np.float64) for v in vectors]
    if not rows:
        raise DomainError("histograms need at least one metric vector")
    return np.vstack(rows)


def target_edges(vectors, bins: int = DEFAULT_BINS, lo_pct: float = 1, hi_pct: float = 99) -> np.ndarray:
    """Equal-width edges spanning the 1st to 99th percentile of each metric."""
    x = _as_matrix(vectors)
    lo = np.percentile(x, lo_pct, axis=0)
    hi = np.percentile(x, hi_pct, axis=0)
    flat = hi - lo <= 0
    lo, hi = np.where(flat, lo - 0.5, lo), np.where(flat, hi + 0.5, hi)
    return np.linspace(lo, hi, bins + 1, axis=1)


def bin_indices(x: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bin of each value; values beyond the outer edges fall in the end bins."""
    return np.stack([np.searchsorted(e[1:-1], x[:, m], side="right") for m, e in enumerate(edges)], axis=1)


def build_histograms(vectors, bins: int = DEFAULT_BINS, edges=None) -> HistogramSet:
    x = _as_matrix(vectors)
    edges = target_edges(x, bins) if edges is None else np.asarray(edges, dtype=np.float64)
    idx = bin_indices(x, edges)
    nb = edges.shape[1] - 1
    masses = np.stack([np.bincount(idx[:, m], minlength=nb) for m in range(edges.shape[0])]) / len(x)
    return HistogramSet(edges, masses)


def per_metric_distance(a: HistogramSet, b: HistogramSet) -> np.ndarray:
    if a.edges.shape != b.edges.shape or not np.allclose(a.edges, b.edges, rtol=0, atol=1e-12):
        raise DomainError("histogram edges differ; build both sets on shared edges")
    return np.abs(a.masses - b.masses).sum(axis=1)


def histogram_distance(a: HistogramSet, b: HistogramSet) -> float:
    return float(per_metric_distance(a, b).sum())


# -- solvers ---------------------------------------------------------------

def _greedy(idx, target_counts, k):
    n_metrics = idx.shape[1]
    counts = np.zeros_like(target_counts)
    chosen = []
    available = np.ones(idx.shape[0], bool)
    cols = np.arange(n_metrics)
    for _ in range(k):
        cur = counts[cols, idx]                       # (n, n_metrics)
        tgt = target_counts[cols, idx]
        gain = (np.abs(cur + 1 - tgt) - np.abs(cur - tgt)).sum(axis=1)
        gain[~available] = np.inf
        best = int(np.argmin(gain))                   # first minimum = lowest id
        chosen.append(best)
        available[best] = False
        counts[cols, idx[best]] += 1
    return chosen


def _lower_bound(counts, target_counts, rem_idx, r):
    """Per-metric exact optimum of the remaining fill, ignoring cross-metric coupling."""
    base = np.abs(counts - target_counts).sum()
    if r == 0:
        return base
    total = base
    for m in range(counts.shape[0]):
        bins_m = rem_idx[:, m]
        order = np.argsort(bins_m, kind="stable")
        sb = bins_m[order]
        # rank of each remaining candidate within its bin, starting at 1
        first = np.searchsorted(sb, sb, side="left")
        rank = np.arange(len(sb)) - first + 1
        c, t = counts[m, sb], target_counts[m, sb]
        marg = np.abs(c + rank - t) - np.abs(c + rank - 1 - t)
        total += np.partition(marg, r - 1)[:r].sum()
    return total


def _branch_and_bound(idx, target_counts, k, incumbent):
    n, n_metrics = idx.shape
    cols = np.arange(n_metrics)

    def objective(sel):
        counts = np.zeros_like(target_counts)
        for i in sel:
            counts[cols, idx[i]] += 1
        return np.abs(counts - target_counts).sum()

    best_sel = list(incumbent)
    best = objective(best_sel)
    counts = np.zeros_like(target_counts)
    chosen = []
    tol = 1e-12

    def visit(pos):
        nonlocal best, best_sel
        if best <= tol:
            return
        r = k - len(chosen)
        if r == 0:
            val = np.abs(counts - target_counts).sum()
            if val < best - tol:
                best, best_sel = val, list(chosen)
            return
        if n - pos < r:
            return
        if _lower_bound(counts, target_counts, idx[pos:], r) >= best - tol:
            return
        counts[cols, idx[pos]] += 1
        chosen.append(pos)
        visit(pos + 1)
        chosen.pop()
        counts[cols, idx[pos]] -= 1
        visit(pos + 1)

    visit(0)
    return best_sel


def match_subset(pool: dict, target: HistogramSet, k: int, mode: str = "greedy") -> CurationPlan:
    """Choose ``k`` ids from ``pool`` (id -> MetricVector) to match ``target``."""
    if k < 1 or k > len(pool):
        raise DomainError(f"subset size {k} outside 1..{len(pool)}")
    if mode not in ("exact", "greedy"):
        raise ModeError(f"unknown curation mode {mode!r}; expected 'exact' or 'greedy'")
    if mode == "exact" and len(pool) > EXACT_POOL_CAP:
        raise ModeError(f"exact mode is limited to pools of {EXACT_POOL_CAP}; use mode='greedy'")
    ids = sorted(pool)
    x = _as_matrix([pool[i] for i in ids])
    idx = bin_indices(x, target.edges)
    target_counts = target.masses * k
    sel = _greedy(idx, target_counts, k)
    if mode == "exact":
        sel = _branch_and_bound(idx, target_counts, k, sel)
    chosen = sorted(ids[i] for i in sel)
    achieved = build_histograms([pool[i] for i in chosen], edges=target.edges)
    dists = per_metric_distance(achieved, target)
    return CurationPlan(tuple(chosen), dict(zip(METRIC_NAMES, dists.tolist())), float(dists.sum()))


def random_subset_distance(pool: dict, target: HistogramSet, k: int, rng: np.random.Generator) -> float:
    ids = sorted(pool)
    pick = rng.choice(len(ids), size=k, replace=False)
    hist = build_histograms([pool[ids[i]] for i in pick], edges=target.edges)
    return histogram_distance(hist, target)


def read_target(path) -> HistogramSet:
    with open(path) as fh:
        return HistogramSet.from_json(json.load(fh))


def write_target(hist: HistogramSet, path) -> None:
    with open(path, "w") as fh:
        json.dump(hist.to_json(), fh, indent=2, sort_keys=True)
