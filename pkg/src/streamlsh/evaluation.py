"""Brute-force ground truth, recall at radius, and the evaluation protocol."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .analysis import RadiusParams
from .corpus import follower_quality  # re-exported
from .dynapop import InterestEvent, PopularityLedger
from .errors import DomainError, InvariantViolation, ProtocolError
from .stream import Item, StreamLSH
from .vector import SparseVector, angular_from_cosine, angular_similarity, stack

__all__ = [
    "ExactIndex", "RecallReport", "RecallRow", "approx_set", "config_fingerprint", "follower_quality",
    "ideal_set", "recall_at_radius", "sample_queries", "split_and_sample", "split_point", "synthesize_interest",
]

PopularityFn = Callable[[str], float]


class ExactIndex:
    """Every item of a stream, never evicted; answers radius queries exactly."""

    def __init__(self, items: Sequence[Item]):
        self.items = list(items)
        self.ids = [it.id for it in self.items]
        self.row = {item_id: i for i, item_id in enumerate(self.ids)}
        if len(self.row) != len(self.ids):
            raise ProtocolError("duplicate item id in exact index")
        self.ticks = np.array([it.tick for it in self.items], dtype=np.int64)
        self.quality = np.array([it.quality for it in self.items], dtype=np.float64)
        self.n_dims = 1 + max((int(it.vector.indices[-1]) for it in self.items if it.vector.nnz), default=0)
        self.matrix = stack([it.vector for it in self.items], n_dims=self.n_dims, normalize=True).T.tocsr()

    def __len__(self) -> int:
        return len(self.items)

    def similarities(self, q: SparseVector) -> np.ndarray:
        """Angular similarity of ``q`` to every item, in item order."""
        if q.norm <= 0.0:
            raise DomainError("query has zero norm")
        keep = q.indices < self.n_dims
        qi, qw = q.indices[keep], q.weights[keep] / q.norm
        if qi.size == 0:
            return np.full(len(self.items), 0.5)
        cos = np.asarray(self.matrix[qi].T @ qw).reshape(-1)
        return angular_from_cosine(cos)

    def mask(self, sims: np.ndarray, radii: RadiusParams, now: int,
             popularity: np.ndarray | None = None) -> np.ndarray:
        ages = now - self.ticks
        m = (sims >= radii.r_sim) & (ages >= 0) & (ages <= radii.r_age) & (self.quality >= radii.r_quality)
        if radii.r_pop is not None:
            if popularity is None:
                raise ValueError("a popularity radius needs popularity scores")
            m &= popularity >= radii.r_pop
        return m

    def popularity_vector(self, ledger: PopularityLedger | None, now: int) -> np.ndarray:
        if ledger is None:
            return np.zeros(len(self.items))
        return np.array([ledger.pop(i, now) for i in self.ids])


def ideal_set(exact: ExactIndex, q: SparseVector, radii: RadiusParams, now: int,
              ledger: PopularityLedger | None = None) -> set[str]:
    sims = exact.similarities(q)
    pops = exact.popularity_vector(ledger, now) if radii.r_pop is not None else None
    return {exact.ids[i] for i in np.flatnonzero(exact.mask(sims, radii, now, pops))}


def approx_set(index: StreamLSH, q: SparseVector, radii: RadiusParams, now: int | None = None,
               ledger: PopularityLedger | None = None) -> dict[str, float]:
    """Bucket candidates that satisfy every radius predicate, mapped to their similarity."""
    now = index.now if now is None else now
    ledger = ledger if ledger is not None else index.ledger
    out = {}
    for item_id in index.lookup(q):
        it = index.item(item_id)
        if it is None:
            raise InvariantViolation(f"bucket entry {item_id!r} has no metadata")
        age = now - it.tick
        if age < 0 or age > radii.r_age or it.quality < radii.r_quality:
            continue
        if radii.r_pop is not None and (ledger is None or ledger.pop(item_id, now) < radii.r_pop):
            continue
        s = angular_similarity(q, it.vector)
        if s >= radii.r_sim:
            out[item_id] = s
    return out


@dataclass
class RecallRow:
    r_sim: float
    r_age: int
    r_quality: float
    r_pop: float | None
    recall: float | None
    n_queries: int
    n_skipped: int
    ideal_sizes: list[int] = field(default_factory=list)
    approx_sizes: list[int] = field(default_factory=list)

    @property
    def stderr(self) -> float | None:
        used = [a / i for a, i in zip(self.approx_sizes, self.ideal_sizes) if i > 0]
        if len(used) < 2:
            return None
        return float(np.std(used, ddof=1) / math.sqrt(len(used)))


@dataclass
class RecallReport:
    rows: list[RecallRow]
    config: dict
    seed: int
    fingerprint: str

    def row(self, r_sim: float, r_age: int, r_quality: float = 0.0, r_pop: float | None = None) -> RecallRow:
        for r in self.rows:
            if (r.r_sim, r.r_age, r.r_quality, r.r_pop) == (r_sim, r_age, r_quality, r_pop):
                return r
        raise KeyError((r_sim, r_age, r_quality, r_pop))

    def to_records(self) -> list[dict]:
        return [{**asdict(r), "stderr": r.stderr, "config": self.config, "seed": self.seed,
                 "fingerprint": self.fingerprint} for r in self.rows]


SUMMARY_COLUMNS = ["policy", "k", "L", "param", "R_sim", "R_age", "R_quality", "R_pop", "recall",
                   "n_queries", "n_skipped"]


def summary_rows(report: RecallReport) -> list[dict]:
    pol = report.config.get("policy", {})
    param = next((v for k, v in pol.items() if k != "kind"), "")
    label = report.config.get("label", pol.get("kind", ""))
    return [{
        "policy": label, "k": report.config.get("k"), "L": report.config.get("L"), "param": param,
        "R_sim": r.r_sim, "R_age": r.r_age, "R_quality": r.r_quality,
        "R_pop": "" if r.r_pop is None else r.r_pop,
        "recall": "" if r.recall is None else repr(r.recall),
        "n_queries": r.n_queries, "n_skipped": r.n_skipped,
    } for r in report.rows]


def write_reports(reports: Iterable[RecallReport], jsonl_path: str | Path, csv_path: str | Path) -> None:
    reports = list(reports)
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for rep in reports:
            for rec in rep.to_records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for rep in reports:
            w.writerows(summary_rows(rep))


def config_fingerprint(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def recall_at_radius(exact: ExactIndex, index: StreamLSH, queries: Sequence[SparseVector],
                     radii: Sequence[RadiusParams] | RadiusParams, now: int | None = None,
                     ledger: PopularityLedger | None = None, config: dict | None = None,
                     seed: int = 0) -> RecallReport:
    """Mean ``|approx| / |ideal|`` per radius over queries with a non-empty ideal set.

    The approximate set of each query is checked to be a subset of its ideal
    set; a violation raises :class:`InvariantViolation`.
    """
    if not queries:
        raise ValueError("need at least one query")
    if isinstance(radii, RadiusParams):
        radii = [radii]
    now = index.now if now is None else now
    ledger = ledger if ledger is not None else index.ledger
    needs_pop = any(r.r_pop is not None for r in radii)
    pops = exact.popularity_vector(ledger, now) if needs_pop else None
    rows = [RecallRow(r.r_sim, r.r_age, r.r_quality, r.r_pop, None, 0, 0) for r in radii]
    for q in queries:
        sims = exact.similarities(q)
        cand = index.lookup(q)
        try:
            cand_rows = np.fromiter((exact.row[c] for c in cand), dtype=np.int64, count=len(cand))
        except KeyError as exc:
            raise InvariantViolation(f"indexed item {exc.args[0]!r} is not in the exact universe") from exc
        for r, row in zip(radii, rows):
            m = exact.mask(sims, r, now, pops)
            ideal = np.flatnonzero(m)
            approx = cand_rows[m[cand_rows]]
            if not np.isin(approx, ideal).all():
                raise InvariantViolation("approximate result is not a subset of the ideal result")
            row.ideal_sizes.append(int(ideal.size))
            row.approx_sizes.append(int(approx.size))
    for row in rows:
        used = [(a, i) for a, i in zip(row.approx_sizes, row.ideal_sizes) if i > 0]
        row.n_queries = len(used)
        row.n_skipped = len(row.ideal_sizes) - len(used)
        row.recall = float(np.mean([a / i for a, i in used])) if used else None
    config = config if config is not None else index.config.to_dict()
    return RecallReport(rows, config, seed, config_fingerprint(config))


def split_point(items: Sequence[Item], fraction: float) -> int:
    """Index of the first item past the tick-aligned ``fraction`` prefix."""
    if not (0.0 < fraction < 1.0):
        raise ValueError("fraction must lie in (0, 1)")
    if not items:
        return 0
    i = min(int(math.floor(fraction * len(items))), len(items))
    if i >= len(items):
        return len(items)
    boundary = items[i].tick
    while i > 0 and items[i - 1].tick == boundary:
        i -= 1
    return i


def split_and_sample(items: Sequence[Item], train_fraction: float, sample_size: int,
                     rng: np.random.Generator) -> tuple[list[Item], list[Item], list[Item]]:
    """Tick-prefix train split, remainder as test, and a uniform query sample from test."""
    cut = split_point(items, train_fraction)
    train, test = list(items[:cut]), list(items[cut:])
    return train, test, sample_queries(test, sample_size, rng)


def sample_queries(test: Sequence[Item], sample_size: int, rng: np.random.Generator) -> list[Item]:
    """Uniform sample without replacement, kept in stream order."""
    if not test:
        raise ProtocolError("the split leaves an empty test set")
    n = min(sample_size, len(test))
    picks = np.sort(rng.choice(len(test), size=n, replace=False))
    return [test[i] for i in picks]


def synthesize_interest(train: Sequence[Item], query_probability: float, top_n: int,
                        rng: np.random.Generator, stream_fraction: float = 0.75
                        ) -> tuple[list[Item], list[InterestEvent]]:
    """Build an interest stream from simulated queries.

    The first ``stream_fraction`` of ``train`` is the item stream U.  Every
    later train item becomes a query with probability ``query_probability``;
    its ``top_n`` most similar U items are marked interesting at the query's
    tick.  Every U item is also marked at its own arrival tick.

    Returns:
        ``(U, events)`` with events sorted by tick.
    """
    cut = split_point(train, stream_fraction)
    stream, rest = list(train[:cut]), list(train[cut:])
    events = [InterestEvent(it.id, it.tick) for it in stream]
    if stream and rest:
        exact = ExactIndex(stream)
        n = min(top_n, len(stream))
        chosen = rng.random(len(rest)) < query_probability
        for q, pick in zip(rest, chosen):
            if not pick:
                continue
            sims = exact.similarities(q.vector)
            top = np.lexsort((np.arange(sims.size), -sims))[:n]
            events.extend(InterestEvent(exact.ids[i], q.tick) for i in top)
    events.sort(key=lambda e: e.tick)
    return stream, events
