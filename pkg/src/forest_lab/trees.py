"""Lazily realised centered trees.

A centered tree of depth D picks a coordinate at random at every node and
splits the node's box at its midpoint.  The coordinate drawn at a node is a
pure function of ``(tree seed, breadth-first node index)``, so routing a
point costs O(D) time and O(1) memory and two routings of the same tree
always agree; the 2**D leaves are never materialised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np

from .cells import MAX_SPLITS_PER_COORD, DyadicCell
from .rng import unit_float

#: node indices are carried in uint64: 2**(depth+1) - 2 must fit
MAX_DEPTH = 62

_PROB_TOL = 1e-12


@dataclass(frozen=True)
class SelectionProbs:
    """Per-coordinate selection probabilities for the splitting draw."""

    p: tuple[float, ...]

    def __post_init__(self):
        if not self.p:
            raise ValueError("need at least one coordinate")
        arr = np.asarray(self.p, dtype=float)
        if np.any(arr < 0):
            raise ValueError("selection probabilities must be non-negative")
        if abs(arr.sum() - 1.0) > _PROB_TOL:
            raise ValueError(f"selection probabilities sum to {arr.sum()!r}, not 1")
        object.__setattr__(self, "p", tuple(float(v) for v in arr))

    @classmethod
    def uniform(cls, dim: int) -> "SelectionProbs":
        return cls((1.0 / dim,) * dim)

    @classmethod
    def ideal(cls, strong: tuple[int, ...], dim: int) -> "SelectionProbs":
        """1/S on each strong coordinate, 0 elsewhere."""
        strong = tuple(strong)
        if not strong:
            raise ValueError("strong set is empty")
        if len(set(strong)) != len(strong) or not all(0 <= j < dim for j in strong):
            raise ValueError("strong set must be distinct coordinates in range")
        p = np.zeros(dim)
        p[list(strong)] = 1.0 / len(strong)
        return cls(tuple(p))

    @property
    def dim(self) -> int:
        return len(self.p)

    @cached_property
    def _cumulative(self) -> np.ndarray:
        c = np.cumsum(self.p)
        c[-1] = 1.0
        return c


@dataclass(frozen=True)
class LeafAssignment:
    """Result of routing one point: its leaf cell and leaf position."""

    cell: DyadicCell
    leaf_index: int

    @property
    def counts(self) -> tuple[int, ...]:
        return self.cell.counts


@dataclass(frozen=True)
class RouteBatch:
    """Vectorized routing result for n points (arrays are read-only)."""

    leaf_index: np.ndarray  # (n,) uint64 in [0, 2**depth)
    counts: np.ndarray      # (n, dim) int64, rows sum to depth
    prefixes: np.ndarray    # (n, dim) uint64 dyadic numerators


def _coordinate_draws(seed, node: np.ndarray, probs: SelectionProbs) -> np.ndarray:
    """Coordinate index drawn at each node index (vectorized, deterministic)."""
    u = unit_float(seed, node)
    if probs.dim == 1:
        return np.zeros(node.shape, dtype=np.int64)
    j = np.searchsorted(probs._cumulative, u, side="right")
    return np.minimum(j, probs.dim - 1).astype(np.int64)


def _route_arrays_numpy(seed, depth: int, probs: SelectionProbs, xs: np.ndarray):
    """Reference vectorized routing; ``seed`` may be scalar or (n,)."""
    n, d = xs.shape
    node = np.zeros(n, dtype=np.uint64)
    counts = np.zeros((n, d), dtype=np.int64)
    prefixes = np.zeros((n, d), dtype=np.uint64)
    if depth == 0:
        return node, counts, prefixes
    rows = np.arange(n)
    check_precision = depth > MAX_SPLITS_PER_COORD
    with np.errstate(over="ignore"):
        for _ in range(depth):
            j = _coordinate_draws(seed, node, probs)
            k = counts[rows, j]
            if check_precision and k.max() >= MAX_SPLITS_PER_COORD:
                raise ValueError(f"more than {MAX_SPLITS_PER_COORD} splits on one coordinate: endpoints not exact")
            a = prefixes[rows, j]
            mid = np.ldexp((2 * a + np.uint64(1)).astype(np.float64), -(k + 1).astype(np.int32))
            right = xs[rows, j] >= mid
            prefixes[rows, j] = 2 * a + right.astype(np.uint64)
            counts[rows, j] = k + 1
            node = node * np.uint64(2) + np.uint64(1) + right.astype(np.uint64)
    leaf = node - np.uint64((1 << depth) - 1)
    return leaf, counts, prefixes


def _build_numba_kernel():
    try:
        import numba
    except ImportError:
        return None

    inv_pow2 = 0.5 ** np.arange(MAX_SPLITS_PER_COORD + 2)

    @numba.njit(cache=True, nogil=True)
    def kernel(xs, seeds, depth, cum, leaf, counts, prefixes):  # pragma: no cover - jitted
        n, d = xs.shape
        golden = np.uint64(0x9E3779B97F4A7C15)
        mix1 = np.uint64(0xBF58476D1CE4E5B9)
        mix2 = np.uint64(0x94D049BB133111EB)
        inv53 = 2.0**-53
        one = np.uint64(1)
        for i in range(n):
            node = np.uint64(0)
            seed = seeds[i]
            for _ in range(depth):
                z = seed + golden * (node + one)
                z = (z ^ (z >> np.uint64(30))) * mix1
                z = (z ^ (z >> np.uint64(27))) * mix2
                z = z ^ (z >> np.uint64(31))
                u = np.float64(z >> np.uint64(11)) * inv53
                j = 0
                while j < d - 1 and u >= cum[j]:
                    j += 1
                k = counts[i, j]
                a = prefixes[i, j]
                # (2a+1) * 2^-(k+1): power-of-two scaling, exact
                mid = np.float64((a << one) + one) * inv_pow2[k + 1]
                right = xs[i, j] >= mid
                if right:
                    prefixes[i, j] = (a << one) + one
                    node = (node << one) + np.uint64(2)
                else:
                    prefixes[i, j] = a << one
                    node = (node << one) + one
                counts[i, j] = k + 1
            leaf[i] = node - (one << np.uint64(depth)) + one

    return kernel


_NUMBA_KERNEL = _build_numba_kernel()


def _route_arrays(seed, depth: int, probs: SelectionProbs, xs: np.ndarray):
    """Route points (n, d) through a tree; ``seed`` may be scalar or (n,).

    A compiled kernel handles the general case when numba is available; the
    numpy implementation is the behavioural reference and both agree
    bit-for-bit (asserted in the test suite).
    """
    n, d = xs.shape
    if depth == 0 or d == 1:
        counts = np.zeros((n, d), dtype=np.int64)
        prefixes = np.zeros((n, d), dtype=np.uint64)
        if depth == 0:
            return np.zeros(n, dtype=np.uint64), counts, prefixes
        # one coordinate: every split lands on it and the leaf is the bit prefix
        if depth > MAX_SPLITS_PER_COORD:
            raise ValueError(f"depth {depth} exceeds {MAX_SPLITS_PER_COORD} splits on one coordinate")
        pref = np.floor(np.ldexp(xs[:, 0], depth)).astype(np.uint64)
        counts[:, 0] = depth
        prefixes[:, 0] = pref
        return pref.copy(), counts, prefixes
    if _NUMBA_KERNEL is not None and depth <= MAX_SPLITS_PER_COORD:
        seeds = np.broadcast_to(np.asarray(seed, dtype=np.uint64).reshape(-1), (n,)) \
            if not np.isscalar(seed) else np.full(n, np.uint64(seed & ((1 << 64) - 1)))
        leaf = np.empty(n, dtype=np.uint64)
        counts = np.zeros((n, d), dtype=np.int64)
        prefixes = np.zeros((n, d), dtype=np.uint64)
        _NUMBA_KERNEL(
            np.ascontiguousarray(xs), np.ascontiguousarray(seeds), depth,
            probs._cumulative, leaf, counts, prefixes,
        )
        return leaf, counts, prefixes
    return _route_arrays_numpy(seed, depth, probs, xs)


@dataclass(frozen=True)
class CenteredTree:
    """A depth-D random binary midpoint partition of [0, 1)^d, keyed by seed."""

    seed: int
    depth: int
    probs: SelectionProbs

    def __post_init__(self):
        if not 0 <= self.depth <= MAX_DEPTH:
            raise ValueError(f"depth {self.depth} outside [0, {MAX_DEPTH}]")

    @property
    def dim(self) -> int:
        return self.probs.dim

    @property
    def n_leaves(self) -> int:
        return 1 << self.depth

    def route(self, x) -> LeafAssignment:
        """Leaf cell containing ``x``; pure and repeatable."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"point has shape {x.shape}, tree has dim {self.dim}")
        if np.any(x < 0.0) or np.any(x >= 1.0):
            raise ValueError(f"point {x} outside [0, 1)^d")
        leaf, counts, prefixes = _route_arrays(self.seed, self.depth, self.probs, x[None, :])
        cell = DyadicCell(tuple(int(c) for c in counts[0]), tuple(int(p) for p in prefixes[0]))
        return LeafAssignment(cell, int(leaf[0]))

    def route_batch(self, xs: np.ndarray) -> RouteBatch:
        """Route many points at once; identical to per-point :meth:`route`."""
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 2 or xs.shape[1] != self.dim:
            raise ValueError(f"points have shape {xs.shape}, tree has dim {self.dim}")
        if np.any(xs < 0.0) or np.any(xs >= 1.0):
            raise ValueError("points outside [0, 1)^d")
        leaf, counts, prefixes = _route_arrays(self.seed, self.depth, self.probs, xs)
        return RouteBatch(leaf, counts, prefixes)

    def leaf_indices(self, xs: np.ndarray) -> np.ndarray:
        return self.route_batch(xs).leaf_index

    def leaves(self) -> Iterator[DyadicCell]:
        """Materialise all 2**depth leaf cells (small depths only)."""
        if self.depth > 20:
            raise ValueError("refusing to enumerate more than 2**20 leaves")

        def descend(node: int, counts: list[int], prefixes: list[int], level: int):
            if level == self.depth:
                yield DyadicCell(tuple(counts), tuple(prefixes))
                return
            j = int(_coordinate_draws(self.seed, np.array([node], dtype=np.uint64), self.probs)[0])
            for bit in (0, 1):
                counts[j] += 1
                prefixes[j] = 2 * prefixes[j] + bit
                yield from descend(2 * node + 1 + bit, counts, prefixes, level + 1)
                prefixes[j] = (prefixes[j] - bit) // 2
                counts[j] -= 1

        yield from descend(0, [0] * self.dim, [0] * self.dim, 0)


def route(tree: CenteredTree, x) -> LeafAssignment:
    """Functional alias for :meth:`CenteredTree.route`."""
    return tree.route(x)


def overlap_via_counts(x, tree_a: CenteredTree, tree_b: CenteredTree) -> float:
    """Overlap volume of the two leaf cells of ``x`` from the count identity.

    Routing the same point through two depth-D trees gives per-coordinate
    split counts K and K'; the cells are nested coordinate-wise, so the
    intersection volume is exactly ``2**-(D + sum|K - K'| / 2)``.
    """
    exponent = _overlap_exponent(x, tree_a, tree_b)
    return math.ldexp(1.0, -exponent)


def overlap_via_counts_log2(x, tree_a: CenteredTree, tree_b: CenteredTree) -> float:
    """Base-2 log of :func:`overlap_via_counts` (for depths beyond float range)."""
    return -float(_overlap_exponent(x, tree_a, tree_b))


def _overlap_exponent(x, tree_a: CenteredTree, tree_b: CenteredTree) -> int:
    if tree_a.dim != tree_b.dim:
        raise ValueError(f"dimension mismatch: {tree_a.dim} != {tree_b.dim}")
    if tree_a.depth != tree_b.depth:
        raise ValueError(f"depth mismatch: {tree_a.depth} != {tree_b.depth}")
    ka = np.asarray(tree_a.route(x).counts)
    kb = np.asarray(tree_b.route(x).counts)
    total_abs_diff = int(np.abs(ka - kb).sum())
    # counts on both sides sum to the depth, so the absolute difference sum is even
    return tree_a.depth + total_abs_diff // 2
