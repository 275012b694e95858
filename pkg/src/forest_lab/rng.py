"""Deterministic counter-based randomness.

Every stochastic choice in the library is a pure function of a 64-bit seed
and a counter, so that simulations are reproducible regardless of worker
count or execution order:

* ``hash_u64(key, counter)`` is a SplitMix64-style mixer.  Tree routing
  draws the coordinate at a node from ``(tree seed, node index)``; nothing
  is ever materialised or mutated.
* ``derive(seed, *path)`` produces child seeds positionally, e.g.
  ``derive(root, replicate, TREE_STREAM, m)`` for tree ``m`` of a
  replicate.  Replicates scheduled on different threads still consume
  exactly their own stream.
* ``generator(seed)`` wraps a numpy Philox bit generator (itself
  counter-based) for bulk sampling: datasets, noise, subset draws.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1

#: scale turning the top 53 bits of a u64 into a float in [0, 1)
_INV53 = float(2.0**-53)


def _finalize(z: np.uint64 | np.ndarray) -> np.uint64 | np.ndarray:
    """SplitMix64 finalizer (bijective on u64)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def hash_u64(key: int | np.ndarray, counter: int | np.ndarray) -> np.uint64 | np.ndarray:
    """Mix a key and a counter into a uniform 64-bit word.

    Either argument may be a numpy uint64 array; broadcasting applies.
    """
    key = np.asarray(key).astype(np.uint64) if isinstance(key, np.ndarray) else np.uint64(key & _MASK)
    counter = (
        counter.astype(np.uint64)
        if isinstance(counter, np.ndarray)
        else np.uint64(counter & _MASK)
    )
    with np.errstate(over="ignore"):
        return _finalize(key + _GOLDEN * (counter + np.uint64(1)))


def unit_float(key, counter):
    """Uniform float64 in [0, 1) from (key, counter); vectorized."""
    bits = hash_u64(key, counter)
    return (bits >> np.uint64(11)).astype(np.float64) * _INV53 if isinstance(bits, np.ndarray) else float(int(bits) >> 11) * _INV53


def derive(seed: int, *path: int) -> int:
    """Positionally derive a child seed; pure and associative-free.

    ``derive(s, a, b)`` and ``derive(s, a', b')`` collide only with
    hash probability, so streams indexed by (replicate, tree, ...) tuples
    never overlap in practice.
    """
    h = np.uint64(seed & _MASK)
    for part in path:
        h = _finalize(hash_u64(h, int(part) & _MASK))
    return int(h)


def generator(seed: int) -> np.random.Generator:
    """Philox-backed numpy generator keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(key=seed & _MASK))
