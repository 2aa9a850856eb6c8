"""Equal-capacity policy comparisons over a replayed stream."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .analysis import RadiusParams, check_equal_capacity, expected_index_size
from .corpus import replay
from .dynapop import DynaPopConfig, InterestEvent
from .evaluation import ExactIndex, RecallReport, recall_at_radius
from .lsh import TableSet, derive_seed
from .policies import Bucket, RetentionPolicy, Smooth, Threshold
from .stream import Item, StreamIndexConfig, StreamLSH

log = logging.getLogger(__name__)


def stream_rate(items: Sequence[Item]) -> tuple[float, float]:
    """Mean arrivals per tick and mean quality over the stream's tick span."""
    if not items:
        return 0.0, 0.0
    span = items[-1].tick - items[0].tick + 1
    return len(items) / span, float(np.mean([it.quality for it in items]))


def bucket_counts(items: Sequence[Item], k: int, L: int, hash_seed: int, seed: int) -> list[np.ndarray]:
    """Per-table insertion counts of every bucket over an insertion-only dry run."""
    tables = TableSet.create(k, L, hash_seed)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[0])
    keys = tables.keys_many([it.vector for it in items])
    quality = np.array([it.quality for it in items])
    coins = rng.random((len(items), L)) < quality[:, None]
    return [np.array(list(Counter(keys[coins[:, i], i].tolist()).values()), dtype=np.int64) for i in range(L)]


def bucket_table_size(counts: list[np.ndarray], b_size: int) -> float:
    """Mean per-table entry count at the end of the stream under ``Bucket(b_size)``.

    Bucket only ever drops the oldest entries of over-full buckets, so a
    bucket that received ``n`` insertions holds ``min(n, b_size)`` entries at
    the end; one dry run therefore prices every candidate size.
    """
    return float(np.mean([np.minimum(c, b_size).sum() for c in counts]))


def calibrate_bucket_size(counts: list[np.ndarray], target_per_table: float) -> tuple[int, float]:
    """``B_size`` whose dry-run table size is closest to the target."""
    hi = max((int(c.max()) for c in counts if c.size), default=1)
    lo = 1
    while lo < hi:
        mid = (lo + hi) // 2
        if bucket_table_size(counts, mid) >= target_per_table:
            hi = mid
        else:
            lo = mid + 1
    best = min({max(1, hi - 1), hi}, key=lambda b: (abs(bucket_table_size(counts, b) - target_per_table), b))
    return best, bucket_table_size(counts, best)


def expected_size(policy: RetentionPolicy, items: Sequence[Item], L: int, measured_bucket: float | None = None
                  ) -> float:
    """Expected total entries at the end of ``items``.

    Smooth uses the finite-horizon sum ``mu phi (1 - p^span) / (1 - p)``, which
    tends to the steady-state size on long streams but stays honest on short
    ones that never fill up.
    """
    mu, phi = stream_rate(items)
    span = items[-1].tick - items[0].tick + 1 if items else 0
    if isinstance(policy, Smooth):
        return expected_index_size(mu, phi, policy.p, L) * (1.0 - policy.p ** span)
    if isinstance(policy, Threshold):
        return min(policy.t_size, mu * phi * span) * L
    if measured_bucket is None:
        raise ValueError("Bucket has no closed-form size; pass the calibrated measurement")
    return measured_bucket * L


@dataclass
class PolicyRun:
    label: str
    config: StreamIndexConfig
    index: StreamLSH
    report: RecallReport


def run_policy(label: str, config: StreamIndexConfig, train: Sequence[Item], exact: ExactIndex,
               queries: Sequence[Item], radii: Sequence[RadiusParams], now: int,
               interest: Sequence[InterestEvent] = (), extra: dict | None = None) -> PolicyRun:
    start = train[0].tick if train else 0
    index = StreamLSH(config, start_tick=min([start, *(e.tick for e in interest[:1])]))
    for _ in replay(index, train, interest, until=now):
        pass
    cfg = {**config.to_dict(), "label": label, **(extra or {})}
    report = recall_at_radius(exact, index, [q.vector for q in queries], radii, now=now, config=cfg,
                              seed=config.seed)
    log.info("%s: %d entries", label, index.total_entries())
    return PolicyRun(label, config, index, report)


def compare_policies(train: Sequence[Item], queries: Sequence[Item], radii: Sequence[RadiusParams],
                     k: int, L: int, policies: dict[str, RetentionPolicy | None], seed: int,
                     hash_seed: int | None = None, capacity_tol: float = 0.10,
                     dynapop: DynaPopConfig | None = None, interest: Sequence[InterestEvent] = (),
                     ) -> list[PolicyRun]:
    """Run every policy on the same stream with shared hash functions.

    A ``None`` Bucket entry is calibrated to Threshold's (or Smooth's) size.
    Capacity equality is enforced before any index is built.
    """
    hs = hash_seed if hash_seed is not None else StreamIndexConfig(k, L, Smooth(0.5), seed).resolved_hash_seed
    sizes: dict[str, float] = {}
    resolved: dict[str, RetentionPolicy] = {}
    measured: dict[str, float] = {}
    for label, pol in policies.items():
        if pol is not None and not isinstance(pol, Bucket):
            resolved[label] = pol
            sizes[label] = expected_size(pol, train, L)
    counts = None
    for label, pol in policies.items():
        if pol is not None and not isinstance(pol, Bucket):
            continue
        if counts is None:
            counts = bucket_counts(train, k, L, hs, seed)
        if isinstance(pol, Bucket):
            resolved[label] = pol
            measured[label] = bucket_table_size(counts, pol.b_size)
        else:
            if not sizes:
                raise ValueError("calibrating Bucket needs another policy to match")
            b, per_table = calibrate_bucket_size(counts, max(sizes.values()) / L)
            resolved[label] = Bucket(b)
            measured[label] = per_table
        if label in measured:
            sizes[label] = expected_size(resolved[label], train, L, measured[label])
    if len(sizes) > 1:
        check_equal_capacity(sizes, capacity_tol)
    exact = ExactIndex(train)
    now = max([train[-1].tick, *(e.tick for e in interest)])
    runs = []
    for i, label in enumerate(policies):
        pol = resolved[label]
        cfg = StreamIndexConfig(k, L, pol, seed=derive_seed(seed, i + 1), hash_seed=hs, dynapop=dynapop)
        runs.append(run_policy(label, cfg, train, exact, queries, radii, now, interest,
                               extra={"expected_size": sizes[label]}))
    return runs
