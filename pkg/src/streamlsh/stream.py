"""The Stream-LSH tick loop.

Per tick: quality-probabilistic insertion of the tick's new items, then
interest-driven re-insertions, then one elimination pass per table.
"""

from __future__ import annotations

import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dynapop import DynaPopConfig, InterestEvent, PopularityLedger
from .errors import ProtocolError, ValidationError
from .lsh import TableSet, bitstring_to_key, derive_seed, key_to_bitstring
from .policies import RetentionPolicy, Threshold, policy_from_dict, policy_to_dict
from .vector import SparseVector

log = logging.getLogger(__name__)

SNAPSHOT_FORMAT = "streamlsh-snapshot"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True, slots=True)
class Item:
    id: str
    tick: int
    vector: SparseVector
    quality: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.quality <= 1.0):
            raise ValidationError(f"item {self.id!r}: quality {self.quality} outside [0, 1]")
        if self.tick < 0:
            raise ValidationError(f"item {self.id!r}: negative tick")

    def to_dict(self) -> dict:
        return {"id": self.id, "tick": self.tick, "quality": self.quality, "vector": self.vector.to_pairs()}

    @classmethod
    def from_dict(cls, d: dict) -> "Item":
        return cls(str(d["id"]), int(d["tick"]), SparseVector.from_pairs(d["vector"]), float(d.get("quality", 1.0)))


def age_of(item: Item, now: int) -> int:
    if now < item.tick:
        raise ProtocolError(f"item {item.id!r} arrives at tick {item.tick}, after now={now}")
    return now - item.tick


@dataclass(frozen=True)
class StreamIndexConfig:
    k: int
    L: int
    policy: RetentionPolicy
    seed: int = 0
    hash_seed: int | None = None
    dynapop: DynaPopConfig | None = None
    evicted_cache: int = 10_000

    def __post_init__(self):
        if self.k < 1 or self.k > 62:
            raise ValidationError(f"k must lie in [1, 62], got {self.k}")
        if self.L < 1:
            raise ValidationError(f"L must be positive, got {self.L}")
        if self.evicted_cache < 0:
            raise ValidationError("evicted_cache must be non-negative")

    @property
    def resolved_hash_seed(self) -> int:
        return self.hash_seed if self.hash_seed is not None else derive_seed(self.seed, 0)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "L": self.L,
            "policy": policy_to_dict(self.policy),
            "seed": self.seed,
            "hash_seed": self.resolved_hash_seed,
            "dynapop": None if self.dynapop is None else {"u": self.dynapop.u, "alpha": self.dynapop.alpha},
            "evicted_cache": self.evicted_cache,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StreamIndexConfig":
        dp = d.get("dynapop")
        return cls(
            k=int(d["k"]),
            L=int(d["L"]),
            policy=policy_from_dict(d["policy"]),
            seed=int(d["seed"]),
            hash_seed=d.get("hash_seed"),
            dynapop=None if dp is None else DynaPopConfig(**dp),
            evicted_cache=int(d.get("evicted_cache", 10_000)),
        )


@dataclass
class TickStats:
    tick: int
    sizes: list[int]
    inserts: list[int]
    evictions: list[int]
    reinserts: list[int] = field(default_factory=list)
    dropped_events: int = 0

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "sizes": self.sizes,
            "inserts": self.inserts,
            "evictions": self.evictions,
            "reinserts": self.reinserts,
            "dropped_events": self.dropped_events,
        }


class _Record:
    __slots__ = ("item", "keys", "seq", "copies")

    def __init__(self, item: Item, keys: np.ndarray, seq: int, copies: int = 0):
        self.item = item
        self.keys = keys
        self.seq = seq
        self.copies = copies


class StreamLSH:
    """Bounded-memory LSH index over an item stream.

    The clock starts at ``start_tick``; each call to :meth:`tick` processes
    the next tick.  Queries are only meaningful between ticks.
    """

    def __init__(self, config: StreamIndexConfig, start_tick: int = 0):
        self.config = config
        self.tables = TableSet.create(
            config.k, config.L, config.resolved_hash_seed, ordered=isinstance(config.policy, Threshold)
        )
        ss = np.random.SeedSequence(config.seed)
        insert_ss, retain_ss, dynapop_ss = ss.spawn(3)
        self._insert_rng = np.random.default_rng(insert_ss)
        self._retain_rng = np.random.default_rng(retain_ss)
        self._dynapop_rng = np.random.default_rng(dynapop_ss)
        self.next_tick = start_tick
        self._records: dict[str, _Record] = {}
        self._evicted: OrderedDict[str, _Record] = OrderedDict()
        self._seen: set[str] = set()
        self._seq = 0
        self.ledger = PopularityLedger(config.dynapop.alpha) if config.dynapop else None
        self.dropped_events = 0
        self.meta: dict | None = None

    @property
    def k(self) -> int:
        return self.config.k

    @property
    def L(self) -> int:
        return self.config.L

    @property
    def now(self) -> int:
        """The last processed tick."""
        return self.next_tick - 1

    def __len__(self) -> int:
        return self.tables.total_entries()

    def total_entries(self) -> int:
        return self.tables.total_entries()

    def table_sizes(self) -> list[int]:
        return [len(t) for t in self.tables.tables]

    def item(self, item_id: str) -> Item | None:
        rec = self._records.get(item_id)
        return rec.item if rec is not None else None

    def resolvable(self, item_id: str) -> bool:
        return item_id in self._records or item_id in self._evicted

    def live_items(self) -> Iterable[Item]:
        return (r.item for r in self._records.values())

    def copies(self, item_id: str) -> int:
        rec = self._records.get(item_id)
        return rec.copies if rec is not None else 0

    def lookup(self, q: SparseVector) -> set[str]:
        return self.tables.lookup(q)

    def tick(self, items: Sequence[Item] = (), interest: Iterable[InterestEvent | str] = ()) -> TickStats:
        """Process one tick: insert, re-index on interest, then eliminate.

        Raises:
            ProtocolError: an item carries the wrong tick or a duplicate id.
        """
        t = self.next_tick
        for it in items:
            if it.tick != t:
                raise ProtocolError(f"item {it.id!r} has tick {it.tick}, index is at tick {t}")
            if it.id in self._seen:
                raise ProtocolError(f"duplicate item id {it.id!r}")
        if len({it.id for it in items}) != len(items):
            raise ProtocolError("duplicate item id within one tick")
        events = [e if isinstance(e, InterestEvent) else InterestEvent(e, t) for e in interest]
        for e in events:
            if e.tick != t:
                raise ProtocolError(f"interest event for {e.item_id!r} has tick {e.tick}, index is at tick {t}")

        L = self.L
        for table in self.tables.tables:
            table.begin_tick()
        inserts = [0] * L

        if items:
            keys = self.tables.keys_many([it.vector for it in items])
            quality = np.array([it.quality for it in items])
            coins = self._insert_rng.random((len(items), L)) < quality[:, None]
            insert = self.tables.insert
            for it, row, hit in zip(items, keys.tolist(), coins.tolist()):
                self._seen.add(it.id)
                rec = _Record(it, np.array(row, dtype=np.int64), self._seq)
                self._seq += 1
                copies = 0
                for i, h in enumerate(hit):
                    if h:
                        insert(i, it.id, row[i], t, rec.seq)
                        inserts[i] += 1
                        copies += 1
                rec.copies = copies
                if copies:
                    self._records[it.id] = rec
                else:
                    self._retire(rec)

        reinserts = [0] * L
        dropped = 0
        if events:
            if self.config.dynapop is None:
                raise ProtocolError("interest events require a dynapop configuration")
            self.ledger.record_interest((e.item_id for e in events), t)
            coins = self._dynapop_rng.random((len(events), L)).tolist()
            for e, row in zip(events, coins):
                added = self._reindex(e.item_id, self.config.dynapop.u, e.quality, reinserts, row)
                if added is None:
                    dropped += 1
        self.dropped_events += dropped

        evictions = [0] * L
        policy = self.config.policy
        for i, table in enumerate(self.tables.tables):
            for entry in policy.eliminate(table, self._retain_rng):
                evictions[i] += 1
                rec = self._records[entry.item_id]
                rec.copies -= 1
                if rec.copies == 0:
                    del self._records[entry.item_id]
                    self._retire(rec)

        self.next_tick = t + 1
        return TickStats(t, self.table_sizes(), inserts, evictions, reinserts, dropped)

    def advance(self, ticks: int) -> list[TickStats]:
        """Run ``ticks`` empty ticks."""
        return [self.tick() for _ in range(ticks)]

    def _retire(self, rec: _Record) -> None:
        cap = self.config.evicted_cache
        if cap == 0:
            return
        self._evicted[rec.item.id] = rec
        self._evicted.move_to_end(rec.item.id)
        while len(self._evicted) > cap:
            self._evicted.popitem(last=False)

    def reindex(self, item_id: str, u: float, quality: float | None = None) -> int | None:
        """Public re-index entry point (outside the tick loop, e.g. for tests)."""
        for table in self.tables.tables:
            table.begin_tick()
        return self._reindex(item_id, u, quality, [0] * self.L, self._dynapop_rng.random(self.L).tolist())

    def _reindex(self, item_id: str, u: float, quality: float | None, counts: list[int],
                 coins: list[float]) -> int | None:
        rec = self._records.get(item_id)
        if rec is None:
            rec = self._evicted.get(item_id)
            if rec is None:
                return None
        z = rec.item.quality if quality is None else quality
        if not (0.0 <= z <= 1.0):
            raise ValidationError(f"quality override {z} outside [0, 1]")
        threshold = z * u
        tables = self.tables.tables
        added = 0
        for i, c in enumerate(coins):
            if c < threshold and tables[i].add(item_id, int(rec.keys[i]), rec.item.tick, rec.seq):
                added += 1
                counts[i] += 1
        if added and rec.copies == 0:
            self._evicted.pop(item_id, None)
            self._records[item_id] = rec
        rec.copies += added
        return added

    def popularity(self, item_id: str, now: int | None = None) -> float:
        if self.ledger is None:
            return 0.0
        return self.ledger.pop(item_id, self.now if now is None else now)

    # -- snapshots -------------------------------------------------------

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        """Write a line-delimited JSON snapshot that :meth:`load` restores exactly.

        ``meta`` is stored verbatim in the header (the CLI records its resolved
        configuration there) and comes back as ``index.meta``.
        """
        header = {
            "meta": meta,
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "config": self.config.to_dict(),
            "k": self.k,
            "L": self.L,
            "seeds": self.tables.seeds,
            "next_tick": self.next_tick,
            "seq": self._seq,
            "dropped_events": self.dropped_events,
            "rng": [
                self._insert_rng.bit_generator.state,
                self._retain_rng.bit_generator.state,
                self._dynapop_rng.bit_generator.state,
            ],
            "seen": sorted(self._seen),
            "ledger": None if self.ledger is None else self.ledger.to_dict(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for store, name in ((self._records, "live"), (self._evicted, "evicted")):
                for rec in store.values():
                    row = {"record": name, "item": rec.item.to_dict(), "seq": rec.seq, "copies": rec.copies,
                           "keys": [int(x) for x in rec.keys]}
                    fh.write(json.dumps(row, sort_keys=True) + "\n")
            for i, table in enumerate(self.tables.tables):
                # the sampling order of the id list is part of the state Smooth draws from
                for entry in (table.entries[item_id] for item_id in table._ids):
                    row = {"entry": [i, key_to_bitstring(entry.key, self.k), entry.item_id, entry.tick, entry.seq]}
                    fh.write(json.dumps(row) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "StreamLSH":
        with open(path, encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            if header.get("format") != SNAPSHOT_FORMAT or header.get("version") != SNAPSHOT_VERSION:
                raise ValidationError(f"{path}: not a version-{SNAPSHOT_VERSION} snapshot")
            index = cls(StreamIndexConfig.from_dict(header["config"]), start_tick=header["next_tick"])
            if index.tables.seeds != header["seeds"]:
                raise ValidationError(f"{path}: hash seeds do not match the configuration")
            index._seq = header["seq"]
            index.meta = header.get("meta")
            index.dropped_events = header["dropped_events"]
            for rng, state in zip((index._insert_rng, index._retain_rng, index._dynapop_rng), header["rng"]):
                rng.bit_generator.state = state
            index._seen = set(header["seen"])
            if header["ledger"] is not None:
                index.ledger = PopularityLedger.from_dict(header["ledger"])
            for line in fh:
                row = json.loads(line)
                if "entry" in row:
                    i, bits, item_id, tick, seq = row["entry"]
                    index.tables.tables[i].add(item_id, bitstring_to_key(bits), tick, seq)
                else:
                    rec = _Record(Item.from_dict(row["item"]), np.array(row["keys"], dtype=np.int64),
                                  row["seq"], row["copies"])
                    (index._records if row["record"] == "live" else index._evicted)[rec.item.id] = rec
        for table in index.tables.tables:
            table.begin_tick()
        return index
