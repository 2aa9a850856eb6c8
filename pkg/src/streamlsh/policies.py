"""Retention policies: Threshold, Bucket and Smooth.

Each policy bounds the index by evicting entries after a tick's insertions.
All eviction functions return the removed entries so the caller can release
item metadata once an item has no copies left.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Union

import numpy as np

from .errors import ValidationError
from .lsh import Entry, HashTable


@dataclass(frozen=True)
class Threshold:
    """Cap each table at ``t_size`` entries, evicting the oldest."""

    t_size: int
    name = "threshold"

    def __post_init__(self):
        if not isinstance(self.t_size, (int, np.integer)) or self.t_size < 1:
            raise ValidationError(f"Threshold t_size must be a positive integer, got {self.t_size!r}")

    def eliminate(self, table: HashTable, rng: np.random.Generator) -> list[Entry]:
        return eliminate_threshold(table, self.t_size)

    @property
    def parameter(self) -> float:
        return self.t_size


@dataclass(frozen=True)
class Bucket:
    """Cap each bucket at ``b_size`` entries, evicting the oldest in the bucket."""

    b_size: int
    name = "bucket"

    def __post_init__(self):
        if not isinstance(self.b_size, (int, np.integer)) or self.b_size < 1:
            raise ValidationError(f"Bucket b_size must be a positive integer, got {self.b_size!r}")

    def eliminate(self, table: HashTable, rng: np.random.Generator) -> list[Entry]:
        return eliminate_bucket(table, self.b_size)

    @property
    def parameter(self) -> float:
        return self.b_size


@dataclass(frozen=True)
class Smooth:
    """Each entry survives a tick with probability ``p``."""

    p: float
    name = "smooth"

    def __post_init__(self):
        if not (0.0 < float(self.p) < 1.0):
            raise ValidationError(f"Smooth retention factor must lie in (0, 1), got {self.p!r}")

    def eliminate(self, table: HashTable, rng: np.random.Generator) -> list[Entry]:
        return eliminate_smooth(table, self.p, rng)

    @property
    def parameter(self) -> float:
        return self.p


RetentionPolicy = Union[Threshold, Bucket, Smooth]

_BY_NAME = {"threshold": Threshold, "bucket": Bucket, "smooth": Smooth}


def policy_to_dict(policy: RetentionPolicy) -> dict:
    return {"kind": policy.name, **asdict(policy)}


def policy_from_dict(d: dict) -> RetentionPolicy:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _BY_NAME:
        raise ValidationError(f"unknown retention policy {kind!r}")
    return _BY_NAME[kind](**d)


def parse_policy(text: str) -> RetentionPolicy:
    """Parse ``threshold:20000``, ``bucket:45`` or ``smooth:0.95``."""
    kind, _, value = text.strip().partition(":")
    kind = kind.lower()
    if kind not in _BY_NAME or not value:
        raise ValidationError(f"policy spec must look like 'smooth:0.95', got {text!r}")
    try:
        return Smooth(float(value)) if kind == "smooth" else _BY_NAME[kind](int(value))
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad policy parameter in {text!r}") from exc


def eliminate_threshold(table: HashTable, t_size: int) -> list[Entry]:
    """Remove the ``len(table) - t_size`` oldest entries (by tick, then sequence)."""
    evicted = []
    while len(table) > t_size:
        evicted.append(table.pop_oldest())
    return evicted


def eliminate_bucket(table: HashTable, b_size: int) -> list[Entry]:
    """Trim every over-full bucket to its ``b_size`` newest entries."""
    evicted = []
    for key in sorted(table.dirty):
        bucket = table.buckets.get(key)
        if bucket is None or len(bucket) <= b_size:
            continue
        ordered = sorted(bucket.values(), key=lambda e: (e.tick, e.seq))
        for entry in ordered[: len(bucket) - b_size]:
            evicted.append(table.remove(entry.item_id))
    return evicted


def smooth_removal_count(n: int, p: float, rng: np.random.Generator) -> int:
    """``floor((1-p) n + xi)`` with ``xi ~ Bernoulli(frac((1-p) n))``; unbiased for ``(1-p) n``."""
    target = (1.0 - p) * n
    base = math.floor(target)
    frac = target - base
    return base + int(frac > 0 and rng.random() < frac)


def eliminate_smooth(table: HashTable, p: float, rng: np.random.Generator) -> list[Entry]:
    """Remove a uniform random ``(1-p)`` fraction of the entries older than this tick.

    Entries inserted or refreshed during the current tick are exempt, so an
    entry of age ``a`` has survived exactly ``a`` eliminations.
    """
    m = smooth_removal_count(table.stale_count(), p, rng)
    return [table.remove(item_id) for item_id in table.stale_sample(m, rng)]
