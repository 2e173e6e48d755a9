import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from w2svqa.errors import DomainError
from w2svqa.gmad import (
    FIX_STUDENT,
    FIX_WEAK,
    ScoredPool,
    mine_gmad,
    mine_gmad_multi,
    misclassified_synthetic,
    partition_levels,
    read_scored_pool,
    write_pairs,
)


def _pool(rng, n):
    ids = [f"v{i:02d}" for i in range(n)]
    return ScoredPool(dict(zip(ids, rng.normal(0, 1, n).tolist())), dict(zip(ids, rng.normal(0, 1, n).tolist())))


def _brute_force(pool, role, k):
    fixed = pool.weak if role == FIX_WEAK else pool.student
    other = pool.student if role == FIX_WEAK else pool.weak
    lo, hi = min(fixed.values()), max(fixed.values())
    width = (hi - lo) / k

    def level(v):
        return min(int((fixed[v] - lo) // width), k - 1) if width > 0 else 0

    best = {}
    for a, b in itertools.combinations(sorted(fixed), 2):
        if level(a) != level(b):
            continue
        d = abs(other[a] - other[b])
        cur = best.get(level(a))
        if cur is None or d > cur[0]:
            best[level(a)] = (d, frozenset((a, b)))
    return {lvl: pair for lvl, (d, pair) in best.items()}


def test_partition_boundary_goes_up():
    pool = ScoredPool({"a": 0.0, "b": 0.5, "c": 1.0}, {"a": 0, "b": 0, "c": 0})
    assign = partition_levels(pool, "weak", 2)
    assert assign.levels == {"a": 0, "b": 1, "c": 1}
    assert assign.width == 0.5 and not assign.degenerate


def test_partition_errors_and_degenerate():
    pool = ScoredPool({"a": 1.0, "b": 1.0}, {"a": 0.0, "b": 1.0})
    with pytest.raises(DomainError):
        partition_levels(pool, "weak", 1)
    with pytest.warns(UserWarning):
        assign = partition_levels(pool, "weak", 4)
    assert assign.degenerate and set(assign.levels.values()) == {0}


def test_pool_requires_both_scores():
    with pytest.raises(DomainError):
        ScoredPool({"a": 1.0, "b": 2.0}, {"a": 1.0})


def test_six_video_hand_pool():
    weak = {"a": 0.0, "b": 0.1, "c": 0.2, "d": 0.8, "e": 0.9, "f": 1.0}
    student = {"a": 0.0, "b": 0.9, "c": 0.5, "d": 0.3, "e": 0.35, "f": 0.9}
    res = mine_gmad(ScoredPool(weak, student), k_levels=2)
    fw = {p.level: (p.first, p.second) for p in res.pairs if p.role_order == FIX_WEAK}
    assert fw == {0: ("b", "a"), 1: ("f", "d")}


@pytest.mark.parametrize("seed", range(20))
def test_enumeration_equivalence(seed):
    rng = np.random.default_rng(seed)
    pool = _pool(rng, int(rng.integers(5, 51)))
    res = mine_gmad(pool, k_levels=5)
    for role in (FIX_WEAK, FIX_STUDENT):
        mined = {p.level: frozenset((p.first, p.second)) for p in res.pairs if p.role_order == role}
        assert mined == _brute_force(pool, role, 5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 40), st.integers(2, 8), st.integers(1, 3))
def test_same_level_and_budget(seed, n, k, per_level):
    pool = _pool(np.random.default_rng(seed), n)
    res = mine_gmad(pool, k_levels=k, per_level=per_level)
    for role, by in ((FIX_WEAK, "weak"), (FIX_STUDENT, "student")):
        assign = partition_levels(pool, by, k)
        fixed = pool.scores(by)
        pairs = [p for p in res.pairs if p.role_order == role]
        for p in pairs:
            assert assign.levels[p.first] == assign.levels[p.second] == p.level
            assert abs(fixed[p.first] - fixed[p.second]) <= assign.width + 1e-12
        counts = np.bincount([p.level for p in pairs], minlength=k)
        assert counts.max(initial=0) <= per_level


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 30))
def test_role_symmetry(seed, n):
    pool = _pool(np.random.default_rng(seed), n)
    a, b = mine_gmad(pool), mine_gmad(pool.swapped())

    def key(res, role):
        return [(p.first, p.second, p.level, p.disagreement) for p in res.pairs if p.role_order == role]

    assert key(a, FIX_WEAK) == key(b, FIX_STUDENT)
    assert key(a, FIX_STUDENT) == key(b, FIX_WEAK)


def test_agreeing_models_flag_low_value():
    rng = np.random.default_rng(0)
    scores = dict(zip([f"v{i}" for i in range(30)], rng.uniform(0, 1, 30).tolist()))
    res = mine_gmad(ScoredPool(scores, dict(scores)), k_levels=5)
    assert res.pairs and all(p.low_value for p in res.pairs)


def test_sparse_levels_reported_skipped():
    pool = ScoredPool({"a": 0.0, "b": 0.01, "c": 1.0}, {"a": 0.0, "b": 1.0, "c": 0.5})
    res = mine_gmad(pool, k_levels=4)
    assert (FIX_WEAK, 1) in res.skipped and (FIX_WEAK, 3) in res.skipped


def test_multi_union_deduplicated():
    rng = np.random.default_rng(4)
    ids = [f"v{i}" for i in range(20)]
    student = dict(zip(ids, rng.normal(size=20).tolist()))
    weak = dict(zip(ids, rng.normal(size=20).tolist()))
    res = mine_gmad_multi({"m1": weak, "m2": dict(weak)}, student, k_levels=4)
    keys = [frozenset((p.first, p.second)) for p in res.pairs]
    assert len(keys) == len(set(keys))
    assert set(keys) == {frozenset((p.first, p.second)) for p in mine_gmad(ScoredPool(weak, student), 4).pairs}


def test_misclassified_cases():
    truth = [1, 2, 4, 5, 1, 2, 4, 5, 2, 4]
    assert misclassified_synthetic(truth, truth) == []
    assert misclassified_synthetic([3] * 10, truth) == list(range(10))
    pred = list(truth)
    for k in (1, 4, 8):
        pred[k] = 3
    assert misclassified_synthetic(pred, truth) == [1, 4, 8]
    with pytest.raises(DomainError):
        misclassified_synthetic(pred[:5], truth)
    assert misclassified_synthetic({"x": 2, "y": 5}, {"x": 1, "y": 5}) == ["x"]
    assert misclassified_synthetic({"x": 2}, {"x": 1}, adjacent_tolerance=True) == []


def test_jsonl_io(tmp_path):
    path = tmp_path / "pool.jsonl"
    path.write_text('{"video_id": "a", "weak_score": 1, "student_score": 0}\n'
                    '{"video_id": "b", "weak_score": 1.1, "student_score": 2}\n'
                    '{"video_id": "c", "weak_score": 3.0, "student_score": 1}\n')
    res = mine_gmad(read_scored_pool(path), k_levels=2)
    write_pairs(res.pairs, tmp_path / "pairs.jsonl")
    lines = (tmp_path / "pairs.jsonl").read_text().splitlines()
    assert len(lines) == len(res.pairs) > 0
    assert '"role_order"' in lines[0] and '"disagreement"' in lines[0]
