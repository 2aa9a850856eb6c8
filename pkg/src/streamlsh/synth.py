"""Planted-cluster synthetic corpora.

Each cluster owns a random sparse center on the "topic" dimensions.  An item
is its cluster center rotated by an angle ``theta`` towards a random noise
vector living on the disjoint "noise" dimensions, so its angular similarity
to the center is exactly ``1 - theta / pi`` before weight rounding.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from .corpus import CorpusRecord
from .errors import ValidationError
from .stream import Item
from .vector import SparseVector


@dataclass(frozen=True)
class GeneratorSpec:
    ticks: int = 200
    items_per_tick: int = 1000
    clusters: int = 50
    topic_dims: int = 2000
    noise_dims: int = 20000
    center_nnz: int = 20
    noise_nnz: int = 10
    sim_lo: float = 0.9
    sim_hi: float = 1.0
    quality: str = "const:1"
    outlier_fraction: float = 0.0
    zipf: float = 0.0
    drift_period: float = 0.0
    decimals: int = 6

    def __post_init__(self):
        if self.ticks < 0 or self.items_per_tick < 0:
            raise ValidationError("ticks and items_per_tick must be non-negative")
        if self.clusters < 1 or self.center_nnz < 1 or self.noise_nnz < 1:
            raise ValidationError("clusters, center_nnz and noise_nnz must be positive")
        if self.center_nnz > self.topic_dims or self.noise_nnz > self.noise_dims:
            raise ValidationError("nnz cannot exceed the number of dimensions")
        if not (0.5 <= self.sim_lo <= self.sim_hi <= 1.0):
            raise ValidationError("similarity band must satisfy 0.5 <= lo <= hi <= 1")
        if not (0.0 <= self.outlier_fraction <= 1.0):
            raise ValidationError("outlier_fraction must lie in [0, 1]")
        if self.zipf < 0 or self.drift_period < 0:
            raise ValidationError("zipf and drift_period must be non-negative")
        parse_quality(self.quality)

    def to_dict(self) -> dict:
        return asdict(self)


def parse_quality(spec: str):
    """``const:z``, ``uniform`` / ``uniform:lo,hi`` or ``beta:a,b``; returns a sampler."""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "const":
            z = float(arg or 1.0)
            if not 0.0 <= z <= 1.0:
                raise ValueError
            return lambda rng, n: np.full(n, z)
        if kind == "uniform":
            lo, hi = (float(x) for x in arg.split(",")) if arg else (0.0, 1.0)
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError
            return lambda rng, n: rng.uniform(lo, hi, n)
        if kind == "beta":
            a, b = (float(x) for x in arg.split(","))
            if a <= 0 or b <= 0:
                raise ValueError
            return lambda rng, n: rng.beta(a, b, n)
    except ValueError:
        pass
    raise ValidationError(f"bad quality distribution {spec!r}")


def _unit(rng: np.random.Generator, n_dims: int, nnz: int, offset: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.sort(rng.choice(n_dims, size=nnz, replace=False)) + offset
    w = rng.uniform(0.2, 1.0, nnz)
    return idx, w / np.linalg.norm(w)


def generate_items(spec: GeneratorSpec, seed: int) -> Iterator[Item]:
    """Yield ``spec.ticks * spec.items_per_tick`` items in tick order."""
    rng = np.random.default_rng(seed)
    quality = parse_quality(spec.quality)
    centers = [_unit(rng, spec.topic_dims, spec.center_nnz, 0) for _ in range(spec.clusters)]
    base = 1.0 / np.arange(1, spec.clusters + 1) ** spec.zipf
    phase = rng.uniform(0.0, 2.0 * np.pi, spec.clusters)
    theta_lo = np.pi * (1.0 - spec.sim_hi)
    theta_hi = np.pi * (1.0 - spec.sim_lo)
    n = 0
    for t in range(spec.ticks):
        m = spec.items_per_tick
        weights = base
        if spec.drift_period > 0:
            weights = base * (1.0 + np.sin(2.0 * np.pi * t / spec.drift_period + phase)) ** 2
        cluster = rng.choice(spec.clusters, size=m, p=weights / weights.sum())
        theta = rng.uniform(theta_lo, theta_hi, m)
        outlier = rng.random(m) < spec.outlier_fraction
        qual = np.round(quality(rng, m), spec.decimals)
        for j in range(m):
            nidx, nw = _unit(rng, spec.noise_dims, spec.noise_nnz, spec.topic_dims)
            if outlier[j]:
                cidx, cw = _unit(rng, spec.topic_dims, spec.center_nnz, 0)
            else:
                cidx, cw = centers[cluster[j]]
            idx = np.concatenate([cidx, nidx])
            w = np.concatenate([cw * np.cos(theta[j]), nw * np.sin(theta[j])])
            w = np.round(w, spec.decimals)
            yield Item(f"t{t}-{j}", t, SparseVector(idx, w), float(qual[j]))
            n += 1


def generate_records(spec: GeneratorSpec, seed: int) -> Iterator[CorpusRecord]:
    for it in generate_items(spec, seed):
        yield CorpusRecord(it.id, it.tick, vector=it.vector, quality=it.quality)
