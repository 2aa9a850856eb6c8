"""Random-hyperplane hashing and the L-table bucketed index.

Hyperplane coordinates are never materialized as d-length arrays: the
coordinate of hyperplane ``seed`` along dimension ``j`` is a pure function of
``(seed, j)``, obtained by pushing a SplitMix64 counter through the inverse
normal CDF.  Sparse vectors therefore hash in time proportional to their
number of non-zeros, and every sketch is reproducible across runs.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.special import ndtri

from .errors import DomainError
from .vector import SparseVector

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer applied elementwise to a uint64 array."""
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _splitmix64_int(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *path: int) -> int:
    """Deterministically derive a 64-bit seed from ``master`` and an index path."""
    s = master & _MASK64
    for p in path:
        s = _splitmix64_int(s ^ _splitmix64_int((((p + 1) & _MASK64) * 0x9E3779B97F4A7C15) & _MASK64))
    return s


def hyperplane_coordinates(seeds: np.ndarray | Sequence[int], dims: np.ndarray | Sequence[int]) -> np.ndarray:
    """Standard-normal coordinates, shape ``(len(seeds), len(dims))``."""
    s = np.asarray(seeds, dtype=np.uint64).reshape(-1, 1)
    d = np.asarray(dims, dtype=np.uint64).reshape(1, -1)
    with np.errstate(over="ignore"):
        z = splitmix64(s + (d + np.uint64(1)) * _GOLDEN)
    u = ((z >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)
    return ndtri(u)


def _check_vector(v: SparseVector) -> None:
    if v.norm <= 0.0:
        raise DomainError("cannot hash a zero-norm vector")


class HyperplaneHash:
    """One random hyperplane through the origin: ``h(v) = [r . v >= 0]``."""

    __slots__ = ("seed",)

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64

    def coordinates(self, dims: Sequence[int] | np.ndarray) -> np.ndarray:
        return hyperplane_coordinates([self.seed], dims)[0]

    def __call__(self, v: SparseVector) -> int:
        _check_vector(v)
        return int(np.dot(self.coordinates(v.indices), v.weights) >= 0.0)

    def __repr__(self) -> str:
        return f"HyperplaneHash(seed={self.seed:#x})"


class SketchFunction:
    """Concatenation of k hyperplane hashes; bit i of the key comes from hash i."""

    def __init__(self, hashes: Sequence[HyperplaneHash]):
        if not hashes:
            raise ValueError("a sketch function needs at least one hash")
        self.hashes = list(hashes)
        self._seeds = np.array([h.seed for h in self.hashes], dtype=np.uint64)

    @property
    def k(self) -> int:
        return len(self.hashes)

    def bits(self, v: SparseVector) -> np.ndarray:
        _check_vector(v)
        proj = hyperplane_coordinates(self._seeds, v.indices) @ v.weights
        return (proj >= 0.0).astype(np.uint8)

    def __call__(self, v: SparseVector) -> int:
        return bits_to_key(self.bits(v))


def bits_to_key(bits: np.ndarray) -> int:
    return int(np.dot(bits.astype(np.int64), 1 << np.arange(len(bits), dtype=np.int64)))


def key_to_bitstring(key: int, k: int) -> str:
    """Bit i of the sketch is character i of the string."""
    return "".join("1" if (key >> i) & 1 else "0" for i in range(k))


def bitstring_to_key(s: str) -> int:
    return sum(1 << i for i, c in enumerate(s) if c == "1")


@dataclass(slots=True)
class Entry:
    item_id: str
    key: int
    tick: int
    seq: int


class HashTable:
    """Sketch-keyed buckets plus the bookkeeping retention policies need.

    Besides the bucket map it keeps a flat id list (uniform sampling), an
    optional min-heap on ``(tick, seq)`` (oldest-first eviction), and a count of
    entries touched during the current tick, which sit at the tail of the id
    list.
    """

    def __init__(self, ordered: bool = False) -> None:
        self.buckets: dict[int, dict[str, Entry]] = {}
        self.entries: dict[str, Entry] = {}
        self._ids: list[str] = []
        self._pos: dict[str, int] = {}
        self._heap: list[tuple[int, int, str]] | None = [] if ordered else None
        self._fresh = 0
        self.dirty: set[int] = set()

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self.entries

    def begin_tick(self) -> None:
        self._fresh = 0
        self.dirty.clear()

    def add(self, item_id: str, key: int, tick: int, seq: int) -> bool:
        """Insert or refresh; returns True if the item was not present."""
        entry = self.entries.get(item_id)
        if entry is not None:
            self._mark_fresh(item_id)
            return False
        entry = Entry(item_id, key, tick, seq)
        self.entries[item_id] = entry
        self.buckets.setdefault(key, {})[item_id] = entry
        self.dirty.add(key)
        self._pos[item_id] = len(self._ids)
        self._ids.append(item_id)
        self._fresh += 1
        if self._heap is not None:
            heapq.heappush(self._heap, (tick, seq, item_id))
            if len(self._heap) > 2 * len(self.entries) + 64:
                self._heap = [(e.tick, e.seq, e.item_id) for e in self.entries.values()]
                heapq.heapify(self._heap)
        return True

    def _mark_fresh(self, item_id: str) -> None:
        i = self._pos[item_id]
        boundary = len(self._ids) - self._fresh - 1
        if i > boundary:
            return
        other = self._ids[boundary]
        self._ids[i], self._ids[boundary] = other, item_id
        self._pos[other], self._pos[item_id] = i, boundary
        self._fresh += 1

    def remove(self, item_id: str) -> Entry:
        entry = self.entries.pop(item_id)
        bucket = self.buckets[entry.key]
        del bucket[item_id]
        if not bucket:
            del self.buckets[entry.key]
        i = self._pos[item_id]
        boundary = len(self._ids) - self._fresh - 1
        if i <= boundary:
            # stale: move it to the last stale slot first so the fresh tail stays contiguous
            other = self._ids[boundary]
            self._ids[i], self._ids[boundary] = other, item_id
            self._pos[other] = i
            i = boundary
        else:
            self._fresh -= 1
        last = self._ids.pop()
        if last != item_id:
            self._ids[i] = last
            self._pos[last] = i
        del self._pos[item_id]
        return entry

    def pop_oldest(self) -> Entry | None:
        """Remove and return the entry with the smallest ``(tick, seq)``."""
        if self._heap is None:
            raise RuntimeError("table was created without age ordering")
        while self._heap:
            tick, seq, item_id = heapq.heappop(self._heap)
            entry = self.entries.get(item_id)
            if entry is not None and entry.seq == seq and entry.tick == tick:
                return self.remove(item_id)
        return None

    def stale_count(self) -> int:
        """Entries not inserted or refreshed during the current tick."""
        return len(self._ids) - self._fresh

    def stale_sample(self, m: int, rng: np.random.Generator) -> list[str]:
        n = self.stale_count()
        if m <= 0 or n == 0:
            return []
        picks = rng.choice(n, size=min(m, n), replace=False)
        return [self._ids[i] for i in picks]

    def bucket(self, key: int) -> dict[str, Entry]:
        return self.buckets.get(key, {})

    def check(self) -> None:
        """Verify internal consistency; used by tests."""
        assert len(self._ids) == len(self.entries) == len(self._pos)
        assert 0 <= self._fresh <= len(self._ids)
        assert sum(len(b) for b in self.buckets.values()) == len(self.entries)
        for key, bucket in self.buckets.items():
            assert bucket
            for item_id, e in bucket.items():
                assert e.key == key and self.entries[item_id] is e


class TableSet:
    """L independent sketch functions, each owning one hash table."""

    def __init__(self, functions: Sequence[SketchFunction], ordered: bool = False):
        if not functions:
            raise ValueError("need at least one table")
        ks = {g.k for g in functions}
        if len(ks) != 1:
            raise ValueError("all sketch functions must have the same k")
        self.functions = list(functions)
        self.tables = [HashTable(ordered) for _ in functions]
        self._seeds = np.concatenate([g._seeds for g in self.functions])
        self._weights = 1 << np.arange(self.k, dtype=np.int64)
        self._cache: np.ndarray | None = None
        self.coord_cache_dims = 1 << 15

    @classmethod
    def create(cls, k: int, L: int, seed: int, ordered: bool = False) -> "TableSet":
        if k < 1 or L < 1:
            raise ValueError("k and L must be positive")
        if k > 62:
            raise ValueError("k above 62 does not fit an integer bucket key")
        return cls([
            SketchFunction([HyperplaneHash(derive_seed(seed, t, j)) for j in range(k)])
            for t in range(L)
        ], ordered)

    @property
    def k(self) -> int:
        return self.functions[0].k

    @property
    def L(self) -> int:
        return len(self.functions)

    @property
    def seeds(self) -> list[list[int]]:
        return [[h.seed for h in g.hashes] for g in self.functions]

    def keys(self, v: SparseVector) -> np.ndarray:
        """Bucket key of ``v`` in every table, shape ``(L,)``."""
        _check_vector(v)
        proj = v.weights @ self._coordinates(v.indices)
        bits = (proj >= 0.0).reshape(self.L, self.k).astype(np.int64)
        return bits @ self._weights

    def _coordinates(self, dims: np.ndarray) -> np.ndarray:
        """Hyperplane coordinates for sorted unique ``dims``, shape ``(len(dims), L*k)``."""
        small = dims < self.coord_cache_dims
        if not small.any():
            return hyperplane_coordinates(self._seeds, dims).T
        if self._cache is None:
            self._cache = np.zeros((0, self._seeds.size))
        top = int(dims[small].max()) + 1
        if top > self._cache.shape[0]:
            top = min(self.coord_cache_dims, max(top, 2 * self._cache.shape[0]))
            grown = np.empty((top, self._seeds.size))
            have = self._cache.shape[0]
            grown[:have] = self._cache
            grown[have:] = hyperplane_coordinates(self._seeds, np.arange(have, top)).T
            self._cache = grown
        if small.all():
            return self._cache[dims]
        out = np.empty((dims.size, self._seeds.size))
        out[small] = self._cache[dims[small]]
        out[~small] = hyperplane_coordinates(self._seeds, dims[~small]).T
        return out

    def keys_many(self, vectors: Sequence[SparseVector], chunk: int = 4096) -> np.ndarray:
        """Bucket keys for a batch, shape ``(n, L)``."""
        out = np.zeros((len(vectors), self.L), dtype=np.int64)
        for start in range(0, len(vectors), chunk):
            part = vectors[start:start + chunk]
            for v in part:
                _check_vector(v)
            dims = np.concatenate([v.indices for v in part])
            uniq, inverse = np.unique(dims, return_inverse=True)
            weights = np.concatenate([v.weights for v in part])
            indptr = np.zeros(len(part) + 1, dtype=np.int64)
            np.cumsum([v.nnz for v in part], out=indptr[1:])
            rows = sparse.csr_matrix((weights, inverse.reshape(-1), indptr), shape=(len(part), uniq.size))
            proj = rows @ self._coordinates(uniq)
            bits = (proj >= 0.0).reshape(len(part), self.L, self.k).astype(np.int64)
            out[start:start + len(part)] = bits @ self._weights
        return out

    def insert(self, table_index: int, item_id: str, key: int, tick: int, seq: int) -> bool:
        return self.tables[table_index].add(item_id, int(key), tick, seq)

    def lookup(self, q: SparseVector) -> set[str]:
        """Union of the query's L buckets."""
        found: set[str] = set()
        for table, key in zip(self.tables, self.keys(q)):
            found.update(table.bucket(int(key)))
        return found

    def total_entries(self) -> int:
        return sum(len(t) for t in self.tables)

    def copies(self, item_id: str) -> int:
        return sum(item_id in t for t in self.tables)

    def iter_entries(self) -> Iterable[tuple[int, Entry]]:
        for i, table in enumerate(self.tables):
            for entry in table.entries.values():
                yield i, entry
