import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from streamlsh.errors import DomainError
from streamlsh.lsh import (
    HashTable, HyperplaneHash, SketchFunction, TableSet, bitstring_to_key, derive_seed, hyperplane_coordinates,
    key_to_bitstring,
)
from streamlsh.vector import SparseVector, angular_similarity

from helpers import pair_with_similarity, random_vector


def test_coordinates_are_deterministic_and_lazy():
    h = HyperplaneHash(42)
    a = h.coordinates([3, 10**9, 7])
    b = HyperplaneHash(42).coordinates([7, 3])
    assert a[0] == b[1] and a[2] == b[0]
    assert np.isfinite(a).all()


def test_coordinates_are_standard_normal():
    z = hyperplane_coordinates([derive_seed(1, i) for i in range(20)], np.arange(2500)).ravel()
    assert stats.kstest(z, "norm").pvalue > 1e-3


def test_derive_seed_separates_paths():
    seeds = {derive_seed(0, t, j) for t in range(30) for j in range(30)}
    assert len(seeds) == 900
    assert derive_seed(5, 1, 2) == derive_seed(5, 1, 2)


@given(st.integers(0, 2**64 - 1), st.floats(0.001, 1000.0))
def test_sketch_is_scale_invariant(seed, c):
    v = SparseVector([1, 5, 9], [0.3, 1.0, 0.2])
    g = SketchFunction([HyperplaneHash(derive_seed(seed, j)) for j in range(8)])
    assert g(v) == g(v.scaled(c))


def test_sketch_bits_follow_hash_order():
    hashes = [HyperplaneHash(derive_seed(3, j)) for j in range(12)]
    g = SketchFunction(hashes)
    v = SparseVector([2, 4], [1.0, 0.5])
    key = g(v)
    assert [(key >> j) & 1 for j in range(12)] == [h(v) for h in hashes]
    assert bitstring_to_key(key_to_bitstring(key, 12)) == key


def test_zero_vector_cannot_be_hashed():
    with pytest.raises(DomainError):
        HyperplaneHash(1)(SparseVector([], []))
    with pytest.raises(DomainError):
        TableSet.create(4, 2, 0).keys(SparseVector([], []))


def test_batch_keys_match_single_keys():
    rng = np.random.default_rng(0)
    ts = TableSet.create(10, 6, 11)
    ts.coord_cache_dims = 500  # exercise both the cached and uncached paths
    vecs = [random_vector(rng, 1000) for _ in range(50)]
    batch = ts.keys_many(vecs, chunk=16)
    for v, row in zip(vecs, batch):
        assert row.tolist() == ts.keys(v).tolist()
        assert row.tolist() == [g(v) for g in ts.functions]


@pytest.mark.parametrize("s", [0.55, 0.75, 0.95])
def test_single_bit_collision_rate(s):
    # oracle: Pr[h(u) = h(v)] = sim(u, v) for a random hyperplane
    u, v = pair_with_similarity(s, base=10)
    n = 100_000
    seeds = [derive_seed(777, i) for i in range(n)]
    cu = hyperplane_coordinates(seeds, u.indices) @ u.weights
    cv = hyperplane_coordinates(seeds, v.indices) @ v.weights
    rate = np.mean((cu >= 0) == (cv >= 0))
    se = np.sqrt(s * (1 - s) / n)
    assert abs(rate - s) < max(0.01, 3 * se)


def test_table_lookup_success_probability():
    # oracle: 1 - (1 - s^k)^L over independently seeded table sets
    u, v = pair_with_similarity(0.9)
    n = 10_000
    hits = 0
    for i in range(n):
        ts = TableSet.create(10, 15, derive_seed(99, i))
        hits += bool((ts.keys(u) == ts.keys(v)).any())
    assert hits / n == pytest.approx(1 - (1 - 0.9**10) ** 15, abs=0.005)


def test_insert_has_set_semantics():
    ts = TableSet.create(8, 3, 0)
    v = SparseVector([1, 2], [1.0, 1.0])
    keys = ts.keys(v)
    for i, key in enumerate(keys):
        assert ts.insert(i, "a", key, 0, 0)
        assert not ts.insert(i, "a", key, 0, 0)
    assert ts.total_entries() == 3
    assert ts.copies("a") == 3
    assert ts.lookup(v) == {"a"}
    for i, key in enumerate(keys):
        assert "a" in ts.tables[i].bucket(int(key))


def test_empty_index_lookup_is_empty():
    assert TableSet.create(10, 15, 0).lookup(SparseVector([0], [1.0])) == set()


def test_total_entries_counts_every_copy():
    rng = np.random.default_rng(4)
    ts = TableSet.create(6, 5, 2)
    for n, v in enumerate(random_vector(rng) for _ in range(40)):
        for i, key in enumerate(ts.keys(v)):
            ts.insert(i, f"x{n}", key, 0, n)
    assert ts.total_entries() == 200


def test_lookup_returns_only_query_buckets():
    rng = np.random.default_rng(8)
    ts = TableSet.create(4, 3, 5)
    vecs = {f"x{n}": random_vector(rng, 50, 4) for n in range(60)}
    for n, (item_id, v) in enumerate(vecs.items()):
        for i, key in enumerate(ts.keys(v)):
            ts.insert(i, item_id, key, 0, n)
    q = random_vector(rng, 50, 4)
    qkeys = ts.keys(q)
    expected = {i for i, v in vecs.items() if (ts.keys(v) == qkeys).any()}
    assert ts.lookup(q) == expected


def test_identical_vectors_always_collide():
    rng = np.random.default_rng(1)
    v = random_vector(rng)
    w = SparseVector(v.indices.copy(), v.weights.copy())
    for seed in range(20):
        ts = TableSet.create(10, 15, seed)
        assert (ts.keys(v) == ts.keys(w)).all()
    assert angular_similarity(v, w) == 1.0


# -- HashTable bookkeeping ----------------------------------------------------


def test_hash_table_remove_keeps_partition_consistent():
    rng = np.random.default_rng(0)
    table = HashTable(ordered=True)
    live: dict[str, int] = {}
    seq = 0
    for tick in range(30):
        table.begin_tick()
        for _ in range(int(rng.integers(0, 8))):
            item_id = f"x{int(rng.integers(0, 60))}"
            table.add(item_id, int(rng.integers(0, 4)), tick, seq)
            live.setdefault(item_id, seq)
            seq += 1
        for _ in range(int(rng.integers(0, 4))):
            if live:
                victim = sorted(live)[int(rng.integers(0, len(live)))]
                table.remove(victim)
                del live[victim]
        table.check()
        assert len(table) == len(live)
        assert table.stale_count() <= len(table)


def test_pop_oldest_follows_tick_then_sequence():
    table = HashTable(ordered=True)
    table.add("b", 0, 1, 5)
    table.add("a", 0, 1, 3)
    table.add("c", 1, 0, 9)
    assert [table.pop_oldest().item_id for _ in range(3)] == ["c", "a", "b"]
    assert table.pop_oldest() is None


def test_stale_sample_excludes_current_tick():
    table = HashTable()
    for n in range(10):
        table.add(f"old{n}", 0, 0, n)
    table.begin_tick()
    for n in range(5):
        table.add(f"new{n}", 0, 1, 10 + n)
    assert table.stale_count() == 10
    sample = table.stale_sample(10, np.random.default_rng(0))
    assert sorted(sample) == sorted(f"old{n}" for n in range(10))
