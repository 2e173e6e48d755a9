import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from w2svqa.errors import DomainError
from w2svqa.evaluation import benchmark, plcc, read_truth_csv, srcc, write_report, write_truth_csv


def _ranks(x):
    # average ranks by direct counting
    x = list(x)
    return [sum(v < xi for v in x) + (sum(v == xi for v in x) + 1) / 2 for xi in x]


def _pearson(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    dx, dy = x - x.mean(), y - y.mean()
    return float((dx * dy).sum() / np.sqrt((dx**2).sum() * (dy**2).sum()))


def test_srcc_cases():
    gt = [1, 2, 3, 4, 5]
    assert srcc(gt, gt) == pytest.approx(1.0)
    assert srcc(gt[::-1], gt) == pytest.approx(-1.0)
    assert srcc([1, 2, 3, 5, 4], gt) == pytest.approx(0.9)


def test_plcc_cases():
    gt = np.array([0.3, 1.0, 2.2, 4.0, 4.1])
    assert plcc(2 * gt + 3, gt) == pytest.approx(1.0)
    assert plcc(-gt, gt) == pytest.approx(-1.0)
    x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    y = np.array([2.0, -1.0, 0.0, -1.0, 2.0])  # symmetric about the mean of x
    assert abs(plcc(y, x)) <= 1e-9


def test_undefined_correlation_errors():
    with pytest.raises(DomainError):
        srcc([1, 1, 1, 1], [1, 2, 3, 4])
    with pytest.raises(DomainError):
        plcc([1, 2, 3], [5, 5, 5])
    with pytest.raises(DomainError):
        srcc([1, 2], [1, 2])
    with pytest.raises(DomainError):
        plcc([1, 2, np.nan], [1, 2, 3])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=4, max_size=20), st.integers(0, 2**31 - 1))
def test_srcc_matches_rank_oracle_with_ties(xs, seed):
    ys = np.random.default_rng(seed).integers(-5, 5, len(xs)).tolist()
    if len(set(xs)) < 2 or len(set(ys)) < 2:
        return
    assert srcc(xs, ys) == pytest.approx(_pearson(_ranks(xs), _ranks(ys)), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10), st.floats(-10, 10))
def test_invariances_and_symmetry(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=12), rng.normal(size=12)
    assert srcc(np.exp(x), y) == pytest.approx(srcc(x, y), abs=1e-12)
    assert srcc(x, y ** 3) == pytest.approx(srcc(x, y), abs=1e-12)
    assert plcc(a * x + b, y) == pytest.approx(plcc(x, y), abs=1e-9)
    assert srcc(x, y) == pytest.approx(srcc(y, x), abs=1e-12)
    assert plcc(x, y) == pytest.approx(plcc(y, x), abs=1e-12)
    assert plcc(x, y) == pytest.approx(_pearson(x, y), abs=1e-12)


def test_logistic_option_improves_nonlinear_fit():
    pred = np.linspace(0, 1, 40)
    gt = 1 + 4 / (1 + np.exp(-12 * (pred - 0.5)))
    assert plcc(pred, gt, logistic=True) == pytest.approx(1.0, abs=1e-6)
    assert plcc(pred, gt) < 0.97


def test_benchmark_overlap():
    truth = {f"v{i}": float(i) for i in range(6)}
    with pytest.raises(DomainError):
        benchmark({"x": 1.0, "y": 2.0, "z": 3.0}, truth)
    full = benchmark({k: 2 * v for k, v in truth.items()}, truth, "demo")
    assert (full.n, full.srcc, full.plcc) == (6, pytest.approx(1.0), pytest.approx(1.0))
    part = benchmark({"v0": 0.0, "v2": 1.0, "v4": 5.0, "other": 3.0}, truth)
    assert part.n == 3


def test_truth_csv_and_report(tmp_path):
    truth = {"a": 1.5, "b": 2.5, "c": 0.5}
    write_truth_csv(truth, tmp_path / "t.csv")
    assert read_truth_csv(tmp_path / "t.csv") == truth
    rep = benchmark({"a": 1, "b": 3, "c": 0}, truth, "demo")
    write_report(rep, tmp_path / "r.json")
    assert '"srcc"' in (tmp_path / "r.json").read_text()
