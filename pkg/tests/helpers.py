"""Shared constructions for the test-suite."""

import math

import numpy as np

from streamlsh.stream import Item
from streamlsh.vector import SparseVector


def pair_with_similarity(s: float, base: int = 0) -> tuple[SparseVector, SparseVector]:
    """Two non-negative vectors on dims ``base, base+1`` with angular similarity ``s`` (s >= 0.5)."""
    theta = math.pi * (1.0 - s)
    u = SparseVector([base], [1.0])
    v = SparseVector([base, base + 1], [math.cos(theta), math.sin(theta)])
    return u, v


def random_vector(rng: np.random.Generator, n_dims: int = 1000, nnz: int = 8, offset: int = 0) -> SparseVector:
    idx = np.sort(rng.choice(n_dims, size=nnz, replace=False)) + offset
    return SparseVector(idx, rng.uniform(0.1, 1.0, nnz))


def constant_stream(ticks: int, per_tick: int, quality: float = 1.0, seed: int = 0, n_dims: int = 5000,
                    start: int = 0) -> list[Item]:
    """``per_tick`` random items on each of ``ticks`` consecutive ticks."""
    rng = np.random.default_rng(seed)
    return [Item(f"i{t}-{j}", t, random_vector(rng, n_dims), quality)
            for t in range(start, start + ticks) for j in range(per_tick)]
