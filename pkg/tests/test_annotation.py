import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from w2svqa.annotation import (
    PairAnnotation,
    PredictionStore,
    RankLabel,
    ScorerPrediction,
    annotate_corpus,
    ensemble_stats,
    first_relative_label,
    label_pair,
    read_annotations,
    read_predictions,
    sample_pairs,
    severity_label,
    severity_pairs,
    write_annotations,
    write_predictions,
)
from w2svqa.errors import DegenerateVarianceError, DomainError, InsufficientEnsembleError

R = RankLabel


def _preds(video, scores):
    return [ScorerPrediction(f"m{i}", video, s) for i, s in enumerate(scores)]


def _store(table):
    return PredictionStore(p for v, scores in table.items() for p in _preds(v, scores))


def test_mirror_is_involution():
    assert [label.mirror for label in R] == [R.SUPERIOR, R.BETTER, R.SIMILAR, R.WORSE, R.INFERIOR]
    assert all(label.mirror.mirror is label for label in R)
    assert R.parse("better") is R.BETTER and R.parse(2) is R.WORSE


def test_ensemble_stats_cases():
    assert ensemble_stats(_preds("v", [1, 2, 3])) == pytest.approx((2.0, 2 / 3))
    assert ensemble_stats(_preds("v", [5] * 5))[1] == 0.0
    with pytest.raises(InsufficientEnsembleError):
        ensemble_stats(_preds("v", [1]))
    assert ensemble_stats(_preds("v", [1, 2, 3]), ddof=1)[1] == pytest.approx(1.0)


def test_label_pair_examples():
    # A better than B -> stored (B relative to A) is worse
    assert label_pair(3, 0.5, 1, 0.5) is R.WORSE
    assert label_pair(2, 0.3, 2, 0.7) is R.SIMILAR
    assert label_pair(0, 0.5, 5, 0.5) is R.SUPERIOR


def test_degenerate_variance():
    with pytest.raises(DegenerateVarianceError):
        label_pair(1, 0, 2, 0)
    assert label_pair(1, 0, 1, 0) is R.SIMILAR


def _reference_first_relative(delta, sigma):
    if delta > 2 * sigma:
        return R.SUPERIOR
    if sigma < delta <= 2 * sigma:
        return R.BETTER
    if -sigma < delta <= sigma:
        return R.SIMILAR
    if -2 * sigma < delta <= -sigma:
        return R.WORSE
    return R.INFERIOR


@settings(max_examples=200, deadline=None)
@given(st.floats(-10, 10, allow_nan=False), st.floats(1e-3, 5))
def test_first_relative_matches_reference(delta, sigma):
    assert first_relative_label(delta, sigma) is _reference_first_relative(delta, sigma)


@settings(max_examples=200, deadline=None)
@given(st.floats(-10, 10, allow_nan=False), st.floats(1e-3, 5))
def test_symmetric_rule_is_mirror_exact(delta, sigma):
    assert first_relative_label(-delta, sigma, "symmetric") is first_relative_label(delta, sigma, "symmetric").mirror


def test_severity_examples():
    assert severity_label(1, 4) is R.INFERIOR
    assert severity_label(3, 2) is R.BETTER
    with pytest.raises(DomainError):
        severity_label(2, 2)


def test_severity_pairs_never_similar():
    pairs = severity_pairs([f"l{k}" for k in range(1, 6)])
    assert len(pairs) == 20
    assert R.SIMILAR not in {p.label for p in pairs}
    with pytest.raises(DomainError):
        PairAnnotation("a", "b", R.SIMILAR, "severity")


def test_annotate_corpus_counts_and_errors():
    store = _store({"a": [1, 2], "b": [3, 4], "c": [0, 0.5], "d": [9]})
    assert annotate_corpus([], store).annotations == []
    rep = annotate_corpus([("a", "b"), ("b", "c"), ("a", "c")], store)
    assert len(rep.annotations) == 3 and rep.errors == {}
    rep = annotate_corpus([("a", "b"), ("a", "d"), ("x", "a"), ("b", "c")], store)
    assert [(a.first, a.second) for a in rep.annotations] == [("a", "b"), ("b", "c")]
    assert sorted(rep.errors) == [1, 2]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.booleans())
def test_annotate_mirror_property(seed, quantized):
    rng = np.random.default_rng(seed)
    ids = [f"v{i}" for i in range(6)]
    # quantized scores hit bucket boundaries often
    raw = rng.integers(0, 4, (6, 3)) if quantized else rng.normal(0, 1, (6, 3))
    store = _store({v: [float(x) for x in raw[i]] for i, v in enumerate(ids)})
    pairs = list(itertools.permutations(ids, 2))
    rep = annotate_corpus(pairs, store)
    labels = {(a.first, a.second): a.label for a in rep.annotations}
    for (a, b), lab in labels.items():
        if (b, a) in labels:
            assert labels[(b, a)] is lab.mirror


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(-200, 200), st.booleans())
def test_labels_invariant_to_common_shift(seed, c, on_grid):
    # dyadic scores with 4 teachers keep mean and variance exact, so boundary ties survive the shift
    rng = np.random.default_rng(seed)
    raw = rng.integers(0, 5, (5, 4)) / 4.0 if on_grid else rng.normal(0, 1, (5, 4))
    c = c / 8.0
    ids = [f"v{i}" for i in range(5)]
    pairs = list(itertools.combinations(ids, 2))
    base = annotate_corpus(pairs, _store({v: list(raw[i]) for i, v in enumerate(ids)}))
    shifted = annotate_corpus(pairs, _store({v: list(raw[i] + c) for i, v in enumerate(ids)}))
    assert [a.label for a in base.annotations] == [a.label for a in shifted.annotations]
    assert base.errors.keys() == shifted.errors.keys()


def test_sample_pairs_unique_and_deterministic():
    ids = [f"v{i}" for i in range(10)]
    a = sample_pairs(ids, 30, np.random.default_rng(1))
    b = sample_pairs(ids, 30, np.random.default_rng(1))
    assert a == b
    assert len({frozenset(p) for p in a}) == 30
    with pytest.raises(DomainError):
        sample_pairs(ids, 46, np.random.default_rng(0))


def test_jsonl_roundtrip(tmp_path):
    preds = _preds("a", [1.0, 2.0]) + _preds("b", [0.5, 0.25])
    write_predictions(preds, tmp_path / "p.jsonl", header={"config_digest": "x", "seed": 0, "timestamp": "t"})
    store = read_predictions(tmp_path / "p.jsonl")
    assert store.video_ids == ["a", "b"] and store.model_ids == ["m0", "m1"]
    anns = annotate_corpus([("a", "b")], store).annotations + severity_pairs(["s1", "s2"], stage=2)
    write_annotations(anns, tmp_path / "a.jsonl")
    assert read_annotations(tmp_path / "a.jsonl") == anns
