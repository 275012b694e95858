"""Dyadic cells: products of binary-rational intervals with exact endpoints.

A cell side along coordinate j is ``[a_j, a_j + 2**-K_j)`` where ``K_j``
counts midpoint splits on that coordinate and ``a_j = prefix_j * 2**-K_j``
for an integer prefix.  All endpoint arithmetic is performed on the integer
prefixes, so endpoints, widths and volumes are bit-exact as long as every
``K_j <= 53`` (the float53 mantissa limit).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: per-coordinate split-count limit for exact float endpoints
MAX_SPLITS_PER_COORD = 53


@dataclass(frozen=True)
class DyadicCell:
    """A half-open dyadic box ``prod_j [a_j, a_j + 2**-counts[j])``."""

    counts: tuple[int, ...]
    prefixes: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) != len(self.prefixes):
            raise ValueError("counts and prefixes must have equal length")
        if not self.counts:
            raise ValueError("cell must have at least one dimension")
        for k, a in zip(self.counts, self.prefixes):
            if not 0 <= k <= MAX_SPLITS_PER_COORD:
                raise ValueError(f"split count {k} outside [0, {MAX_SPLITS_PER_COORD}]")
            if not 0 <= a < (1 << k):
                raise ValueError(f"prefix {a} outside [0, 2**{k})")

    @classmethod
    def unit(cls, dim: int) -> "DyadicCell":
        """The root cell [0, 1)^dim."""
        return cls((0,) * dim, (0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def depth(self) -> int:
        """Total number of splits that produced this cell."""
        return sum(self.counts)

    def left(self, j: int) -> float:
        return math.ldexp(self.prefixes[j], -self.counts[j])

    def right(self, j: int) -> float:
        return math.ldexp(self.prefixes[j] + 1, -self.counts[j])

    def width(self, j: int) -> float:
        return math.ldexp(1.0, -self.counts[j])

    @property
    def volume(self) -> float:
        return math.ldexp(1.0, -self.depth)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"point has shape {x.shape}, cell has dim {self.dim}")
        return all(self.left(j) <= x[j] < self.right(j) for j in range(self.dim))

    def contains_batch(self, xs: np.ndarray) -> np.ndarray:
        """Boolean mask of rows of ``xs`` (n, dim) lying in the cell."""
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 2 or xs.shape[1] != self.dim:
            raise ValueError(f"points have shape {xs.shape}, cell has dim {self.dim}")
        mask = np.ones(len(xs), dtype=bool)
        for j in range(self.dim):
            mask &= (xs[:, j] >= self.left(j)) & (xs[:, j] < self.right(j))
        return mask


def endpoints_from_expansion(x: float, k: int) -> tuple[float, float]:
    """Endpoints of the dyadic interval of width ``2**-k`` containing ``x``.

    Truncating the binary expansion of ``x`` after ``k`` bits gives the left
    endpoint; the right endpoint is one unit of ``2**-k`` further.
    """
    if not 0.0 <= x < 1.0:
        raise ValueError(f"coordinate {x} outside [0, 1)")
    if not 0 <= k <= MAX_SPLITS_PER_COORD:
        raise ValueError(f"k={k} outside [0, {MAX_SPLITS_PER_COORD}]: endpoints not exact in float64")
    prefix = math.floor(math.ldexp(x, k))
    a = math.ldexp(prefix, -k)
    b = math.ldexp(prefix + 1, -k)
    return a, b


def cell_from_point(x, counts) -> DyadicCell:
    """The dyadic cell with the given per-coordinate split counts around ``x``."""
    x = np.asarray(x, dtype=float)
    counts = tuple(int(c) for c in counts)
    if x.shape != (len(counts),):
        raise ValueError("point and counts dimensions differ")
    prefixes = []
    for xj, k in zip(x, counts):
        if not 0.0 <= xj < 1.0:
            raise ValueError(f"coordinate {xj} outside [0, 1)")
        if not 0 <= k <= MAX_SPLITS_PER_COORD:
            raise ValueError(f"split count {k} outside [0, {MAX_SPLITS_PER_COORD}]")
        prefixes.append(math.floor(math.ldexp(xj, k)))
    return DyadicCell(counts, tuple(prefixes))


def _side_overlap_units(cell_a: DyadicCell, cell_b: DyadicCell, j: int) -> tuple[int, int]:
    """Intersection length along side j, as (integer units, scale 2**-scale)."""
    ka, kb = cell_a.counts[j], cell_b.counts[j]
    k = max(ka, kb)
    lo_a = cell_a.prefixes[j] << (k - ka)
    hi_a = (cell_a.prefixes[j] + 1) << (k - ka)
    lo_b = cell_b.prefixes[j] << (k - kb)
    hi_b = (cell_b.prefixes[j] + 1) << (k - kb)
    return max(0, min(hi_a, hi_b) - max(lo_a, lo_b)), k


def overlap_volume(cell_a: DyadicCell, cell_b: DyadicCell) -> float:
    """Exact Lebesgue volume of the intersection of two dyadic cells.

    Dyadic intervals are nested or disjoint, so every per-coordinate
    intersection length is 0 or a power of two and the product is exact.
    """
    if cell_a.dim != cell_b.dim:
        raise ValueError(f"dimension mismatch: {cell_a.dim} != {cell_b.dim}")
    vol = 1.0
    for j in range(cell_a.dim):
        units, scale = _side_overlap_units(cell_a, cell_b, j)
        if units == 0:
            return 0.0
        vol *= math.ldexp(units, -scale)
    return vol


def overlap_volume_log2(cell_a: DyadicCell, cell_b: DyadicCell) -> float:
    """Base-2 log of the intersection volume; ``-inf`` for disjoint cells.

    Log-domain companion of :func:`overlap_volume` for cells deeper than the
    exact-float regime.
    """
    if cell_a.dim != cell_b.dim:
        raise ValueError(f"dimension mismatch: {cell_a.dim} != {cell_b.dim}")
    total = 0.0
    for j in range(cell_a.dim):
        units, scale = _side_overlap_units(cell_a, cell_b, j)
        if units == 0:
            return float("-inf")
        total += math.log2(units) - scale
    return total
