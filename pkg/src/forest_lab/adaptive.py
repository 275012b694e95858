"""Data-driven coordinate selection.

The selection criterion is the weighted post-split conditional variance of
the responses inside a node: candidate coordinates with small criterion
values are the informative ones.  Selection probabilities are estimated by
repeating the root-cell selection over fresh second samples.  For the
noiseless linear model the whole tree reduces to a deterministic score
recursion on the per-coordinate split counts, which is also implemented
here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cells import DyadicCell
from .forest import Dataset, ModelSpec
from .rng import derive, generator
from .trees import SelectionProbs

_REL_TOL = 1e-12


@dataclass(frozen=True)
class SplitEvaluation:
    """Best split found for one coordinate inside a node."""

    coord: int
    split: float
    value: float


@dataclass(frozen=True)
class AdaptiveCounts:
    """Per-coordinate split counts of one adaptive tree."""

    counts: tuple[int, ...]

    @property
    def depth(self) -> int:
        return sum(self.counts)


def empirical_delta(left_ys, right_ys, n_node: int | None = None) -> float:
    """Weighted empirical post-split conditional variance.

    Sum of squared deviations from each side's own mean, divided by the node
    sample size; an empty side contributes 0.
    """
    left = np.asarray(left_ys, dtype=float)
    right = np.asarray(right_ys, dtype=float)
    total = len(left) + len(right)
    if n_node is None:
        n_node = total
    if n_node != total:
        raise ValueError(f"node size {n_node} != |left| + |right| = {total}")
    if n_node == 0:
        raise ValueError("empty node")
    sse = 0.0
    for side in (left, right):
        if len(side):
            sse += float(np.sum((side - side.mean()) ** 2))
    return sse / n_node


def criterion_drop(node_ys, left_mask) -> float:
    """Within-node variance minus the post-split criterion (the decrement).

    For the noiseless linear model the population decrement of a midpoint
    split on coordinate j equals |beta_j|^2 (b_j - a_j)^2 / 16, which is the
    quantity the adaptive score recursion tracks.
    """
    node_ys = np.asarray(node_ys, dtype=float)
    left_mask = np.asarray(left_mask, dtype=bool)
    if node_ys.shape != left_mask.shape:
        raise ValueError("mask and responses must have equal length")
    within = float(np.sum((node_ys - node_ys.mean()) ** 2)) / len(node_ys)
    return within - empirical_delta(node_ys[left_mask], node_ys[~left_mask])


def best_split(data: Dataset, node: DyadicCell, coord: int) -> SplitEvaluation | None:
    """Criterion-minimising split for one coordinate, or None if unsplittable.

    Candidate splits are midpoints between consecutive distinct sample
    values inside the node; ties go to the smallest split.
    """
    if not 0 <= coord < data.dim:
        raise ValueError(f"coordinate {coord} outside [0, {data.dim})")
    mask = node.contains_batch(data.xs)
    xs = data.xs[mask, coord]
    ys = data.ys[mask]
    n = len(ys)
    if n < 2 or np.unique(xs).size < 2:
        return None
    order = np.argsort(xs, kind="stable")
    x_sorted = xs[order]
    y_sorted = ys[order]
    c1 = np.cumsum(y_sorted)
    c2 = np.cumsum(y_sorted**2)
    tot1, tot2 = c1[-1], c2[-1]
    i = np.arange(1, n)
    sse_left = c2[:-1] - c1[:-1] ** 2 / i
    right_n = n - i
    sse_right = (tot2 - c2[:-1]) - (tot1 - c1[:-1]) ** 2 / right_n
    delta = (sse_left + sse_right) / n
    boundary = x_sorted[1:] > x_sorted[:-1]
    cand = np.flatnonzero(boundary)
    values = delta[cand]
    best = int(cand[int(np.argmin(values))])  # argmin keeps the first, i.e. smallest split
    split = 0.5 * (x_sorted[best] + x_sorted[best + 1])
    return SplitEvaluation(coord, float(split), max(float(delta[best]), 0.0))


def _minimizers(values: list[float]) -> list[int]:
    """Indices within relative tolerance of the minimum (inf = unsplittable)."""
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return []
    lo = min(finite)
    tol = _REL_TOL * lo
    return [i for i, v in enumerate(values) if math.isfinite(v) and v - lo <= tol]


def select_coordinate(
    data: Dataset,
    node: DyadicCell,
    m_n: int,
    rng: np.random.Generator,
    with_replacement: bool = False,
) -> int:
    """Draw a random coordinate subset and pick a criterion minimiser.

    The best split is evaluated on every drawn coordinate and a uniform draw
    among the (tolerance-equal) minimisers is returned.  If no drawn
    coordinate is splittable the choice is uniform over the subset.
    """
    if not 1 <= m_n <= data.dim:
        raise ValueError(f"subset size {m_n} outside [1, {data.dim}]")
    if m_n == data.dim and not with_replacement:
        subset = np.arange(data.dim)
    else:
        subset = rng.choice(data.dim, size=m_n, replace=with_replacement)
    coords = sorted(set(int(j) for j in subset))
    values = []
    for j in coords:
        ev = best_split(data, node, j)
        values.append(ev.value if ev is not None else math.inf)
    winners = _minimizers(values)
    if not winners:
        return int(coords[rng.integers(len(coords))])
    if len(winners) == 1:
        return coords[winners[0]]
    return coords[winners[int(rng.integers(len(winners)))]]


def estimate_selection_probs(
    spec: ModelSpec,
    n: int,
    m_n: int,
    trials: int,
    seed: int,
    with_replacement: bool = False,
) -> SelectionProbs:
    """Empirical root-cell selection frequencies over independent trials.

    Each trial draws a fresh second sample from ``spec`` and runs the
    subset-and-minimise selection at the root cell; the returned frequencies
    estimate the per-coordinate selection probabilities.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    root = DyadicCell.unit(spec.dim)
    hits = np.zeros(spec.dim, dtype=np.int64)
    for t in range(trials):
        data = spec.sample(n, generator(derive(seed, t, 0)))
        rng = generator(derive(seed, t, 1))
        hits[select_coordinate(data, root, m_n, rng, with_replacement)] += 1
    return SelectionProbs(tuple(hits / trials))


def adaptive_linear_tree(
    beta,
    m_n: int,
    depth: int,
    rng: np.random.Generator,
    with_replacement: bool = False,
) -> AdaptiveCounts:
    """Split-count recursion of the noiseless-linear-model adaptive tree.

    At each of ``depth`` steps a random subset of m_n coordinates is drawn
    and the one maximising |beta_j|^2 * 4**-(K_j + 2) takes the split.
    Scores are compared in the log2 domain (4**-K underflows long before
    depth 1024); the ordering is identical.
    """
    beta = np.asarray(beta, dtype=float)
    d = len(beta)
    if d < 1 or not np.any(beta != 0):
        raise ValueError("beta must have at least one non-zero entry")
    if not 1 <= m_n <= d:
        raise ValueError(f"subset size {m_n} outside [1, {d}]")
    if depth < 0:
        raise ValueError("depth must be non-negative")
    with np.errstate(divide="ignore"):
        log_beta_sq = np.where(beta != 0.0, 2 * np.log2(np.abs(np.where(beta != 0.0, beta, 1.0))), -np.inf)
    counts = np.zeros(d, dtype=np.int64)
    fixed_subset = m_n == d and not with_replacement
    all_coords = np.arange(d)
    for _ in range(depth):
        if fixed_subset:
            subset = all_coords
        else:
            subset = np.unique(rng.choice(d, size=m_n, replace=with_replacement))
        scores = log_beta_sq[subset] - 2.0 * counts[subset]
        top = scores.max()
        if top == -np.inf:
            winners = subset
        else:
            winners = subset[scores >= top - _REL_TOL]
        j = int(winners[0]) if len(winners) == 1 else int(winners[rng.integers(len(winners))])
        counts[j] += 1
    return AdaptiveCounts(tuple(int(c) for c in counts))


def approx_split_counts(beta, depth: int) -> np.ndarray:
    """Closed-form split-count profile for ordered non-zero coefficients.

    With |beta_1| >= ... >= |beta_S| > 0, full-subset sampling without
    replacement gives approximately depth/S splits per coordinate, shifted
    by log2 coefficient ratios; the entries sum to the depth exactly.
    """
    beta = np.asarray(beta, dtype=float)
    s = len(beta)
    if s < 1:
        raise ValueError("beta is empty")
    if np.any(beta == 0.0):
        raise ValueError("coefficients must be non-zero")
    mags = np.abs(beta)
    if np.any(np.diff(mags) > 0):
        raise ValueError("coefficients must be ordered by non-increasing magnitude")
    ratios = np.log2(mags / mags[-1])
    out = depth / s - ratios / s
    out[-1] = depth / s + ratios[:-1].sum() / s
    return out
