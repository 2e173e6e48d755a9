"""From five-level comparison outputs to absolute quality scores.

A test video is compared with ``n`` anchors.  Each comparison's token
distribution collapses to a soft preference; together with the anchors'
mutual preferences this forms an ``(n+1) x (n+1)`` matrix ``M`` where
``M[i, j]`` is the probability that ``i`` beats ``j``.  Thurstone Case V
scores maximise ``sum M[i, j] log Phi(q_i - q_j)`` on the plane
``sum q = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from .artifacts import read_jsonl
from .errors import ConvergenceError, DomainError

ALPHA = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
SIMPLEX_TOL = 1e-9
RECIPROCITY_TOL = 1e-9
PRIORS = ("linear", "gaussian", "none")
_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


@dataclass(frozen=True)
class TokenDistribution:
    """Probabilities of (inferior, worse, similar, better, superior)."""
    probs: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (5,) or not np.all(np.isfinite(p)) or np.any(p < 0):
            raise DomainError(f"token distribution needs 5 non-negative reals, got {self.probs}")
        if abs(p.sum() - 1.0) > SIMPLEX_TOL:
            raise DomainError(f"token distribution sums to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", tuple(float(v) for v in p))

    def as_array(self) -> np.ndarray:
        return np.array(self.probs)

    @property
    def argmax(self) -> int:
        """Most likely label index, 1..5."""
        return int(np.argmax(self.probs)) + 1


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def token_probs(logits) -> TokenDistribution:
    z = np.asarray(logits, dtype=np.float64)
    if z.shape != (5,):
        raise DomainError(f"expected 5 logits, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise DomainError(f"non-finite logit in {z.tolist()}")
    p = softmax(z)
    return TokenDistribution(tuple(p / p.sum()))


def soft_score(dist: TokenDistribution) -> float:
    """Preference mass for the second video of the comparison."""
    return float(np.clip(ALPHA @ dist.as_array(), 0.0, 1.0))


@dataclass(frozen=True)
class ProbabilityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
            raise DomainError(f"probability matrix must be square and at least 2x2, got {m.shape}")
        _check_reciprocal(m, "matrix")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def to_json(self) -> list:
        return self.entries.tolist()


def _check_reciprocal(m, what):
    if np.any(~np.isfinite(m)) or np.any(m < 0) or np.any(m > 1):
        raise DomainError(f"{what} entries must lie in [0, 1]")
    if np.any(np.diag(m) != 0.5):
        i = int(np.flatnonzero(np.diag(m) != 0.5)[0])
        raise DomainError(f"{what} diagonal entry ({i}, {i}) = {m[i, i]!r}, expected 0.5")
    gap = np.abs(m + m.T - 1.0)
    if gap.max() > RECIPROCITY_TOL:
        i, j = np.unravel_index(int(np.argmax(gap)), gap.shape)
        raise DomainError(f"{what} entries ({i}, {j}) and ({j}, {i}) violate reciprocity: "
                          f"{m[i, j]!r} + {m[j, i]!r} != 1")


def assemble_matrix(anchor_block, comparisons) -> ProbabilityMatrix:
    """Append the test video as the last row/column.

    ``comparisons[i]`` is the probability that anchor ``i`` beats the test.
    """
    block = np.asarray(anchor_block, dtype=np.float64)
    c = np.asarray(comparisons, dtype=np.float64)
    n = block.shape[0]
    if block.shape != (n, n) or c.shape != (n,):
        raise DomainError(f"anchor block {block.shape} does not match {c.shape[0]} comparisons")
    _check_reciprocal(block, "anchor block")
    if np.any(~np.isfinite(c)) or np.any(c < 0) or np.any(c > 1):
        raise DomainError("comparisons must lie in [0, 1]")
    m = np.full((n + 1, n + 1), 0.5)
    m[:n, :n] = block
    m[:n, n] = c
    m[n, :n] = 1.0 - c
    return ProbabilityMatrix(m)


@dataclass(frozen=True)
class LatentScores:
    values: np.ndarray
    iterations: int
    grad_norm: float

    def __post_init__(self):
        if abs(float(np.sum(self.values))) > 1e-7:
            raise DomainError("latent scores must sum to zero")


def _log_pdf(x):
    return -0.5 * x * x - _LOG_SQRT_2PI


def thurstone_objective(q, m, prior: str = "linear") -> float:
    d = q[:, None] - q[None, :]
    val = float(np.sum(m * log_ndtr(d)))
    if prior == "gaussian":
        val -= 0.5 * float(q @ q)
    elif prior == "linear":
        val -= 0.5 * float(q.sum())
    return val


def _grad_hess(q, m, prior):
    d = q[:, None] - q[None, :]
    r = np.exp(_log_pdf(d) - log_ndtr(d))          # phi / Phi
    w = m * r
    g = w.sum(axis=1) - w.sum(axis=0)
    c = m * (-r * (d + r))                           # d/dd of r, weighted
    s = c + c.T
    h = np.diag(s.sum(axis=1)) - s
    if prior == "gaussian":
        g = g - q
        h = h - np.eye(len(q))
    elif prior == "linear":
        g = g - 0.5
    return g, h


def map_scores(m: ProbabilityMatrix, clamp: float = 1e-4, prior: str = "linear",
               tol: float = 1e-8, max_iter: int = 10_000) -> LatentScores:
    """Thurstone Case V scores with ``sum q = 0``.

    ``prior`` selects the penalty: ``linear`` is ``-sum(q)/2`` (constant on
    the constraint plane, so this is the maximum-likelihood estimate),
    ``gaussian`` is ``-sum(q**2)/2``, ``none`` drops it.  The search takes
    Newton steps projected onto the plane with Armijo backtracking, falling
    back to the projected gradient when the Newton step is not an ascent
    direction.
    """
    if prior not in PRIORS:
        raise DomainError(f"unknown prior {prior!r}; expected one of {PRIORS}")
    mat = m.entries if isinstance(m, ProbabilityMatrix) else ProbabilityMatrix(m).entries
    mc = np.clip(mat, clamp, 1.0 - clamp)
    n = mc.shape[0]
    proj = np.eye(n) - 1.0 / n
    ones = np.full((n, n), 1.0 / n)
    q = np.zeros(n)
    f = thurstone_objective(q, mc, prior)
    gnorm = np.inf
    for it in range(max_iter + 1):
        g, h = _grad_hess(q, mc, prior)
        pg = proj @ g
        gnorm = float(np.linalg.norm(pg))
        if gnorm < tol:
            q = q - q.mean()
            return LatentScores(q, it, gnorm)
        if it == max_iter:
            break
        try:
            step = -np.linalg.solve(proj @ h @ proj - ones, pg)
        except np.linalg.LinAlgError:
            step = pg
        step = proj @ step
        slope = float(pg @ step)
        if not np.isfinite(slope) or slope <= 0:
            step, slope = pg, gnorm**2
        # near the optimum objective gains fall below round-off; allow that much slack
        slack = 1e-13 * max(1.0, abs(f))
        t = 1.0
        while True:
            cand = q + t * step
            fc = thurstone_objective(cand, mc, prior)
            if fc >= f + 1e-4 * t * slope - slack or t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12 and fc < f - slack:
            break
        q, f = cand - cand.mean(), fc
    raise ConvergenceError(f"MAP search stopped with gradient norm {gnorm:.3g}", q.copy(), gnorm)


def comparison_preferences(forward, reverse=None) -> np.ndarray:
    """Probability that each anchor beats the test video.

    ``forward[i]`` is the distribution for (anchor i, test), so its soft
    score is the test's preference.  ``reverse[i]``, when given, is the
    distribution for (test, anchor i); the two orders are averaged.
    """
    p_test = np.array([soft_score(d) for d in forward])
    if reverse is not None:
        if len(reverse) != len(forward):
            raise DomainError("forward and reverse comparisons differ in length")
        p_rev = np.array([soft_score(d) for d in reverse])
        p_test = 0.5 * (p_test + 1.0 - p_rev)
    return 1.0 - p_test


def calibrate(test_comparisons, anchor_block, reverse=None, clamp: float = 1e-4,
              prior: str = "linear") -> float:
    """Absolute score of a test video on the anchors' latent scale."""
    c = comparison_preferences(test_comparisons, reverse)
    scores = map_scores(assemble_matrix(anchor_block, c), clamp=clamp, prior=prior)
    return float(scores.values[-1])


def symmetrize(raw) -> np.ndarray:
    """``(P(i, j) + 1 - P(j, i)) / 2`` with an exact 0.5 diagonal."""
    raw = np.asarray(raw, dtype=np.float64)
    out = 0.5 * (raw + 1.0 - raw.T)
    np.fill_diagonal(out, 0.5)
    return out


def read_logits(path) -> list:
    """JSONL records ``{first, second, logits}`` as (first, second, TokenDistribution)."""
    return [(str(r["first"]), str(r["second"]), token_probs(r["logits"])) for r in read_jsonl(path)]
