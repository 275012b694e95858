"""Monte Carlo risk estimation, enumeration oracles, and rate fits.

The decomposition estimator separates the mean-squared prediction error
into an estimation-variance term and a squared-bias term:

* variance at a query point is the unbiased sample variance of the forest
  prediction across independent training sets, which equals the average of
  half squared differences over all dataset pairs (so it is unbiased at any
  replicate count, with no nested-centering bias);
* squared bias is the squared deviation of the across-dataset mean from the
  truth, minus an explicit variance/replicates correction whose magnitude
  is reported alongside the estimate.

Exact enumeration over multinomial supports provides the oracle for the
tree-correlation factor E[2^(-sum |K_j - K'_j| / 2)] and hence for the
expected overlap of two trees' cells around a common point.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import gammaln

from .forest import ModelSpec, depth_for_leaves, _leaf_table, _query_table
from .rng import derive, generator
from .trees import CenteredTree, SelectionProbs, _route_arrays

#: exact enumeration refuses grids with more pairwise terms than this
MAX_EXACT_PAIR_TERMS = 10**7


# ---------------------------------------------------------------------------
# forest simulation core
# ---------------------------------------------------------------------------

def simulate_forest_predictions(
    spec: ModelSpec,
    n: int,
    k_n: float,
    probs: SelectionProbs,
    n_trees: int,
    query_xs: np.ndarray,
    data_seed: int,
    trees_seed: int,
) -> np.ndarray:
    """Forest predictions at fixed queries for one fresh training sample.

    In one dimension every centered tree is the same dyadic grid, so the
    M-tree average equals a single tree's prediction and is computed as
    such (exactly, not approximately).
    """
    data = spec.sample(n, generator(data_seed))
    depth = depth_for_leaves(k_n)
    m_eff = 1 if spec.dim == 1 else n_trees
    acc = np.zeros(len(query_xs))
    for m in range(m_eff):
        tree = CenteredTree(derive(trees_seed, m), depth, probs)
        table = _leaf_table(tree, data.xs, data.ys)
        acc += _query_table(table, tree.leaf_indices(query_xs))
    return acc / m_eff


def _map_indexed(worker, count: int, threads: int) -> list:
    """Run ``worker(i)`` for i in range(count); slot-indexed, order-free."""
    if threads <= 1 or count <= 1:
        return [worker(i) for i in range(count)]
    out = [None] * count
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for i, res in zip(range(count), pool.map(worker, range(count))):
            out[i] = res
    return out


class RiskEstimate(NamedTuple):
    mse: float
    stderr: float


def mc_risk(
    spec: ModelSpec,
    n: int,
    k_n: float,
    probs: SelectionProbs,
    n_trees: int,
    replicates: int,
    seed: int,
    queries: int = 8,
    threads: int = 1,
) -> RiskEstimate:
    """Unbiased MC estimate of the mean-squared prediction error.

    Each replicate draws a fresh training sample, fresh tree seeds and fresh
    query points; the replicate value is the mean squared error over its
    queries.
    """
    if replicates < 1:
        raise ValueError("need at least one replicate")

    def one(r: int) -> float:
        qx = generator(derive(seed, r, 0)).random((queries, spec.dim))
        preds = simulate_forest_predictions(
            spec, n, k_n, probs, n_trees, qx,
            data_seed=derive(seed, r, 1), trees_seed=derive(seed, r, 2),
        )
        return float(np.mean((preds - spec.predict(qx)) ** 2))

    values = np.array(_map_indexed(one, replicates, threads))
    stderr = float(values.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else float("inf")
    return RiskEstimate(float(values.mean()), stderr)


@dataclass(frozen=True)
class DecompositionEstimate:
    """Bias/variance split of the prediction error with standard errors."""

    variance_term: float
    bias_sq_term: float
    total_mse: float
    variance_se: float
    bias_sq_se: float
    total_se: float
    correction: float  # mean subtracted variance/replicates term
    r_outer: int
    r_inner: int
    n_trees: int
    queries: int


def mc_bias_variance(
    spec: ModelSpec,
    n: int,
    k_n: float,
    probs: SelectionProbs,
    n_trees: int,
    r_outer: int,
    r_inner: int,
    seed: int,
    queries: int = 16,
    threads: int = 1,
) -> DecompositionEstimate:
    """Estimate the variance and squared-bias terms of the prediction error.

    ``r_outer`` independent blocks each draw ``queries`` fresh query points
    and ``r_inner`` fresh training samples; block summaries are i.i.d., so
    across-block spread gives honest standard errors.  Within a block the
    three per-query estimators satisfy mse = variance + bias^2 exactly.
    """
    if r_inner < 2:
        raise ValueError("need at least two inner replicates for a variance")
    if r_outer < 2:
        raise ValueError("need at least two outer blocks for standard errors")

    def one_block(b: int):
        qx = generator(derive(seed, b, 0)).random((queries, spec.dim))
        truth = spec.predict(qx)
        preds = np.empty((r_inner, queries))
        for r in range(r_inner):
            preds[r] = simulate_forest_predictions(
                spec, n, k_n, probs, n_trees, qx,
                data_seed=derive(seed, b, r, 1), trees_seed=derive(seed, b, r, 2),
            )
        s2 = preds.var(axis=0, ddof=1)
        abar = preds.mean(axis=0)
        corr = s2 / r_inner
        bias_sq = (abar - truth) ** 2 - corr
        mse = np.mean((preds - truth) ** 2, axis=0)
        return float(s2.mean()), float(bias_sq.mean()), float(mse.mean()), float(corr.mean())

    rows = np.array(_map_indexed(one_block, r_outer, threads))
    means = rows.mean(axis=0)
    ses = rows.std(axis=0, ddof=1) / math.sqrt(r_outer)
    return DecompositionEstimate(
        variance_term=float(means[0]),
        bias_sq_term=float(means[1]),
        total_mse=float(means[2]),
        variance_se=float(ses[0]),
        bias_sq_se=float(ses[1]),
        total_se=float(ses[2]),
        correction=float(means[3]),
        r_outer=r_outer,
        r_inner=r_inner,
        n_trees=n_trees,
        queries=queries,
    )


# ---------------------------------------------------------------------------
# multinomial enumeration oracles
# ---------------------------------------------------------------------------

def _compositions(m: int, k: int) -> np.ndarray:
    """All ways to place m trials into k categories, as an (N, k) int array."""
    out = np.empty((math.comb(m + k - 1, k - 1), k), dtype=np.int64)
    for row, bars in enumerate(combinations(range(m + k - 1), k - 1)):
        prev = -1
        for col, bar in enumerate(bars):
            out[row, col] = bar - prev - 1
            prev = bar
        out[row, k - 1] = m + k - 2 - prev
    return out


def _multinomial_pmf(counts: np.ndarray, p: np.ndarray) -> np.ndarray:
    m = int(counts[0].sum())
    with np.errstate(divide="ignore"):
        logp = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), -np.inf)
    support = np.all((counts == 0) | (p > 0), axis=1)
    ll = gammaln(m + 1) - gammaln(counts + 1).sum(axis=1)
    ll = ll + np.where(counts > 0, counts * logp, 0.0).sum(axis=1)
    return np.where(support, np.exp(ll), 0.0)


def _halving_binomial(m: int, p1: float) -> float:
    """E[2^-|M1 - M1'|] for independent Binomial(m, p1) copies, exact in O(m).

    Factored full-support sum: with prefix recursions L_i = (L_{i-1} +
    pmf_{i-1}) / 2 and the mirrored R_i, the double sum over all pairs
    collapses to one pass.
    """
    i = np.arange(m + 1)
    pmf = np.exp(gammaln(m + 1) - gammaln(i + 1) - gammaln(m - i + 1)
                 + i * math.log(p1) + (m - i) * math.log1p(-p1)) if 0 < p1 < 1 else None
    if pmf is None:
        return 1.0  # degenerate category: copies always agree
    left = np.zeros(m + 1)
    for idx in range(1, m + 1):
        left[idx] = 0.5 * (left[idx - 1] + pmf[idx - 1])
    right = np.zeros(m + 1)
    for idx in range(m - 1, -1, -1):
        right[idx] = 0.5 * (right[idx + 1] + pmf[idx + 1])
    return float(np.sum(pmf * (pmf + left + right)))


def multinomial_halving_expectation(m: int, p: Sequence[float]) -> float:
    """Exact E[2^(-sum_j |M_j - M_j'|/2)] for two independent multinomials.

    Enumerates the full support (factored in O(m) for two categories,
    pairwise over compositions otherwise; refuses more than
    ``MAX_EXACT_PAIR_TERMS`` pair terms).
    """
    p = np.asarray(p, dtype=float)
    if m < 0:
        raise ValueError("m must be non-negative")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p must be a probability vector")
    if m == 0 or len(p) == 1:
        return 1.0
    if len(p) == 2:
        # |M1-M1'| + |M2-M2'| = 2|M1-M1'| since the counts sum to m
        return _halving_binomial(m, float(p[0]))
    n_comp = math.comb(m + len(p) - 1, len(p) - 1)
    if n_comp * n_comp > MAX_EXACT_PAIR_TERMS:
        raise ValueError(
            f"support too large for exact mode: {n_comp}^2 pair terms exceed {MAX_EXACT_PAIR_TERMS}"
        )
    counts = _compositions(m, len(p))
    pmf = _multinomial_pmf(counts, p)
    diff = np.abs(counts[:, None, :] - counts[None, :, :]).sum(axis=2)
    return float((pmf[:, None] * pmf[None, :] * np.exp2(-0.5 * diff)).sum())


class McEstimate(NamedTuple):
    value: float
    stderr: float


def multinomial_halving_mc(m: int, p: Sequence[float], samples: int, seed: int) -> McEstimate:
    """Plain MC companion of :func:`multinomial_halving_expectation`."""
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = generator(seed)
    p = np.asarray(p, dtype=float)
    a = rng.multinomial(m, p, size=samples)
    b = rng.multinomial(m, p, size=samples)
    vals = np.exp2(-0.5 * np.abs(a - b).sum(axis=1))
    return McEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples)))


def halving_upper_bound(m: int, p: Sequence[float]) -> float:
    """8^(k-1) / sqrt(m^(k-1) p_1 ... p_(k-1) p_k^(k-1)) for positive p."""
    p = np.asarray(p, dtype=float)
    k = len(p)
    if np.any(p <= 0):
        raise ValueError("bound requires probabilities bounded away from zero")
    denom = m ** (k - 1) * np.prod(p[:-1]) * p[-1] ** (k - 1)
    return float(8.0 ** (k - 1) / math.sqrt(denom))


def expected_overlap(p: Sequence[float], depth: int) -> float:
    """Exact E[volume of the two leaf cells' intersection around one point].

    Equals 2^-depth times the halving expectation of the split-count
    multinomial, by the nesting of per-coordinate dyadic intervals.
    """
    return math.ldexp(multinomial_halving_expectation(depth, p), -depth)


def expected_overlap_mc(p: Sequence[float], depth: int, samples: int, seed: int) -> McEstimate:
    """MC over (point, tree pair) triples using the count identity."""
    if samples < 2:
        raise ValueError("need at least two samples")
    probs = SelectionProbs(tuple(p))
    rng = generator(seed)
    xs = rng.random((samples, probs.dim))
    seeds_a = rng.integers(0, 2**63, size=samples, dtype=np.uint64)
    seeds_b = rng.integers(0, 2**63, size=samples, dtype=np.uint64)
    _, counts_a, _ = _route_arrays(seeds_a, depth, probs, xs)
    _, counts_b, _ = _route_arrays(seeds_b, depth, probs, xs)
    expo = depth + 0.5 * np.abs(counts_a - counts_b).sum(axis=1)
    vals = np.exp2(-expo)
    return McEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples)))


class NormalApproxCheck(NamedTuple):
    exact: float
    approx: float
    ratio: float


def normal_approx_check(m: int, p1: float) -> NormalApproxCheck:
    """Exact two-category halving expectation vs its normal approximation.

    The approximation 1 / (log 2 * sqrt(pi m p1 p2)) comes from treating the
    count difference as Gaussian and using the Mills-ratio asymptote.
    """
    if not 0.0 < p1 < 1.0:
        raise ValueError("p1 must lie strictly between 0 and 1")
    exact = _halving_binomial(m, p1)
    approx = 1.0 / (math.log(2.0) * math.sqrt(math.pi * m * p1 * (1.0 - p1)))
    return NormalApproxCheck(exact, approx, exact / approx)


# ---------------------------------------------------------------------------
# rate fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    """Least-squares power-law fit value = exp(intercept) * scale^exponent."""

    exponent: float
    intercept: float
    stderr: float
    r_squared: float
    log_x: tuple[float, ...]
    log_y: tuple[float, ...]


def fit_rate_exponent(points: Iterable[tuple[float, float]]) -> RateFit:
    """OLS on (log scale, log value); exact on pure power laws."""
    pts = [(float(a), float(b)) for a, b in points]
    if len(pts) < 3:
        raise ValueError("need at least three points")
    if any(a <= 0 or b <= 0 for a, b in pts):
        raise ValueError("scales and values must be positive")
    x = np.log([a for a, _ in pts])
    y = np.log([b for _, b in pts])
    xc = x - x.mean()
    sxx = float(np.sum(xc**2))
    if sxx == 0:
        raise ValueError("scales must not all coincide")
    slope = float(np.sum(xc * y) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    rss = float(np.sum(resid**2))
    syy = float(np.sum((y - y.mean()) ** 2))
    dof = len(pts) - 2
    stderr = math.sqrt(rss / dof / sxx) if dof > 0 else 0.0
    r_squared = 1.0 - rss / syy if syy > 0 else 1.0
    return RateFit(slope, intercept, stderr, r_squared, tuple(x), tuple(y))
