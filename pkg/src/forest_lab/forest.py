"""The centered-forest estimator.

A fitted forest is nothing but M tree seeds plus a reference to the
training sample: a tree prediction at x is the mean response over training
points sharing x's leaf (0 if the leaf is empty), and the forest averages
the M tree predictions.  Leaf aggregates are computed per query and cached
per tree, so fitting is lazy and depth is unconstrained by table sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
import numpy as np

from .rng import derive
from .trees import CenteredTree, SelectionProbs

#: leaf tables become dense bincount arrays up to this depth, sorted maps beyond
_DENSE_TABLE_MAX_DEPTH = 22


@dataclass(frozen=True)
class Dataset:
    """n observations (x in [0,1)^d, y real); immutable after construction."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.array(self.xs, dtype=float, copy=True)
        ys = np.array(self.ys, dtype=float, copy=True)
        if xs.ndim != 2 or len(xs) < 1:
            raise ValueError("xs must be a non-empty (n, d) array")
        if ys.shape != (len(xs),):
            raise ValueError("ys must be a length-n vector")
        if np.any(xs < 0.0) or np.any(xs >= 1.0):
            raise ValueError("training points must lie in [0, 1)^d")
        xs.flags.writeable = False
        ys.flags.writeable = False
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return len(self.xs)

    @property
    def dim(self) -> int:
        return self.xs.shape[1]


_MODEL_KINDS = ("sparse-linear", "lipschitz-test", "constant", "indicator")


@dataclass(frozen=True)
class ModelSpec:
    """Data-generating model: y = f(x) + sigma * eps with eps ~ N(0, 1).

    Kinds:
      sparse-linear   f(x) = <beta, x>, beta zero off the strong set
      lipschitz-test  f(x) = sum_{j strong} |x_j - 1/2|
      constant        f(x) = value
      indicator       f(x) = 1{x_j < 1/2 for all strong j} (not Lipschitz)
    """

    kind: str
    dim: int
    strong: tuple[int, ...]
    sigma: float
    beta: tuple[float, ...] | None = None
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in _MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        strong = tuple(int(j) for j in self.strong)
        if len(set(strong)) != len(strong) or not all(0 <= j < self.dim for j in strong):
            raise ValueError("strong set must be distinct in-range coordinates")
        object.__setattr__(self, "strong", strong)
        if self.kind == "sparse-linear":
            if self.beta is None or len(self.beta) != self.dim:
                raise ValueError("sparse-linear requires a dim-length beta")
            beta = tuple(float(b) for b in self.beta)
            support = tuple(j for j, b in enumerate(beta) if b != 0.0)
            if set(support) - set(strong):
                raise ValueError("beta must vanish off the strong set")
            object.__setattr__(self, "beta", beta)
        elif self.kind != "sparse-linear" and self.beta is not None:
            raise ValueError(f"beta is only meaningful for sparse-linear, not {self.kind!r}")
        if self.kind != "constant" and not strong:
            raise ValueError(f"{self.kind} requires a non-empty strong set")

    # -- constructors ------------------------------------------------------
    @classmethod
    def sparse_linear(cls, beta, sigma: float = 0.0) -> "ModelSpec":
        beta = tuple(float(b) for b in beta)
        strong = tuple(j for j, b in enumerate(beta) if b != 0.0)
        return cls("sparse-linear", len(beta), strong, sigma, beta=beta)

    @classmethod
    def lipschitz_test(cls, dim: int, strong, sigma: float = 0.0) -> "ModelSpec":
        return cls("lipschitz-test", dim, tuple(strong), sigma)

    @classmethod
    def constant(cls, dim: int, value: float = 0.0, sigma: float = 0.0) -> "ModelSpec":
        return cls("constant", dim, (), sigma, value=value)

    @classmethod
    def indicator(cls, dim: int, strong, sigma: float = 0.0) -> "ModelSpec":
        return cls("indicator", dim, tuple(strong), sigma)

    # -- structure ---------------------------------------------------------
    @property
    def s(self) -> int:
        """Number of strong coordinates."""
        return len(self.strong)

    @property
    def lipschitz_const(self) -> float:
        """L2 Lipschitz constant of the regression function."""
        if self.kind == "sparse-linear":
            return math.sqrt(sum(b * b for b in self.beta))
        if self.kind == "lipschitz-test":
            return math.sqrt(self.s)
        if self.kind == "constant":
            return 0.0
        raise ValueError(f"{self.kind} is not Lipschitz")

    @property
    def sup_norm(self) -> float:
        if self.kind == "sparse-linear":
            return max(sum(b for b in self.beta if b > 0), -sum(b for b in self.beta if b < 0))
        if self.kind == "lipschitz-test":
            return self.s / 2.0
        if self.kind == "constant":
            return abs(self.value)
        return 1.0

    # -- evaluation --------------------------------------------------------
    def predict(self, xs: np.ndarray) -> np.ndarray:
        """Noiseless regression function values at rows of ``xs``."""
        xs = np.asarray(xs, dtype=float)
        single = xs.ndim == 1
        if single:
            xs = xs[None, :]
        if xs.shape[1] != self.dim:
            raise ValueError(f"points have dim {xs.shape[1]}, model has dim {self.dim}")
        if self.kind == "sparse-linear":
            out = xs @ np.asarray(self.beta)
        elif self.kind == "lipschitz-test":
            out = np.abs(xs[:, list(self.strong)] - 0.5).sum(axis=1)
        elif self.kind == "constant":
            out = np.full(len(xs), self.value)
        else:
            out = np.all(xs[:, list(self.strong)] < 0.5, axis=1).astype(float)
        return float(out[0]) if single else out

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        """Draw a fresh sample of n points with uniform design."""
        xs = rng.random((n, self.dim))
        ys = self.predict(xs)
        if self.sigma > 0:
            ys = ys + self.sigma * rng.standard_normal(n)
        return Dataset(xs, ys)


def depth_for_leaves(k_n: float) -> int:
    """Tree depth realising a requested leaf count: ceil(log2 k_n)."""
    if k_n < 2:
        raise ValueError(f"leaf parameter {k_n} must be at least 2")
    return int(math.ceil(math.log2(k_n) - 1e-12))


@dataclass(frozen=True, eq=False)
class ForestModel:
    """M centered trees with i.i.d. seeds plus the training data."""

    trees: tuple[CenteredTree, ...]
    data: Dataset
    k_requested: float | None = None
    _tables: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.trees:
            raise ValueError("forest needs at least one tree")
        first = self.trees[0]
        for t in self.trees:
            if (t.dim, t.depth, t.probs) != (first.dim, first.depth, first.probs):
                raise ValueError("all trees must share dim, depth and probs")
        if first.dim != self.data.dim:
            raise ValueError("tree and data dimensions differ")

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def dim(self) -> int:
        return self.trees[0].dim

    @property
    def depth(self) -> int:
        return self.trees[0].depth

    def _table(self, m: int):
        table = self._tables.get(m)
        if table is None:
            table = _leaf_table(self.trees[m], self.data.xs, self.data.ys)
            self._tables[m] = table
        return table

    def predict_batch(self, xs: np.ndarray) -> np.ndarray:
        """Forest predictions at rows of ``xs``: mean of per-tree leaf means."""
        xs = np.asarray(xs, dtype=float)
        acc = np.zeros(len(xs))
        for m, tree in enumerate(self.trees):
            acc += _query_table(self._table(m), tree.leaf_indices(xs))
        return acc / self.n_trees

    def predict(self, x) -> float:
        return float(self.predict_batch(np.asarray(x, dtype=float)[None, :])[0])

    def weights(self, x) -> np.ndarray:
        """Per-observation weights w with <w, ys> == predict(x).

        Each tree contributes indicator(X_i in leaf(x)) / leaf count when the
        leaf is occupied and the zero vector otherwise; the forest averages.
        """
        x = np.asarray(x, dtype=float)
        w = np.zeros(self.data.n)
        for tree in self.trees:
            leaf = tree.route(x).leaf_index
            members = tree.leaf_indices(self.data.xs) == np.uint64(leaf)
            count = int(members.sum())
            if count:
                w += members / count
        return w / self.n_trees


def _leaf_table(tree: CenteredTree, xs: np.ndarray, ys: np.ndarray):
    """Aggregate training responses per leaf: (response sums, member counts)."""
    leaves = tree.leaf_indices(xs)
    if tree.depth <= _DENSE_TABLE_MAX_DEPTH:
        size = tree.n_leaves
        idx = leaves.astype(np.int64)
        return ("dense", np.bincount(idx, weights=ys, minlength=size), np.bincount(idx, minlength=size))
    order = np.argsort(leaves, kind="stable")
    sorted_leaves = leaves[order]
    sums = np.concatenate(([0.0], np.cumsum(ys[order])))
    return ("sorted", sorted_leaves, sums)


def _query_table(table, query_leaves: np.ndarray) -> np.ndarray:
    """Leaf means at query leaves; empty leaves predict exactly 0."""
    if table[0] == "dense":
        _, sums, counts = table
        idx = query_leaves.astype(np.int64)
        c = counts[idx]
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(c > 0, sums[idx] / np.maximum(c, 1), 0.0)
        return out
    _, sorted_leaves, csums = table
    lo = np.searchsorted(sorted_leaves, query_leaves, side="left")
    hi = np.searchsorted(sorted_leaves, query_leaves, side="right")
    c = hi - lo
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(c > 0, (csums[hi] - csums[lo]) / np.maximum(c, 1), 0.0)


def fit_forest(
    data: Dataset,
    k_n: float,
    probs: SelectionProbs,
    n_trees: int,
    seed: int,
) -> ForestModel:
    """Draw n_trees i.i.d. tree seeds at depth ceil(log2 k_n) over ``data``."""
    if n_trees < 1:
        raise ValueError("need at least one tree")
    depth = depth_for_leaves(k_n)
    trees = tuple(CenteredTree(derive(seed, m), depth, probs) for m in range(n_trees))
    return ForestModel(trees, data, k_requested=k_n)


def tree_predict(tree: CenteredTree, data: Dataset, x) -> float:
    """Mean response over training points in x's leaf; 0 for an empty leaf."""
    x = np.asarray(x, dtype=float)
    leaf = tree.route(x).leaf_index
    members = tree.leaf_indices(data.xs) == np.uint64(leaf)
    count = int(members.sum())
    return float(data.ys[members].sum() / count) if count else 0.0


def forest_predict(model: ForestModel, x) -> float:
    """Functional alias for :meth:`ForestModel.predict`."""
    return model.predict(x)


def weights(model: ForestModel, x) -> np.ndarray:
    """Functional alias for :meth:`ForestModel.weights`."""
    return model.weights(x)
