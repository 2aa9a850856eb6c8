import json

import numpy as np
import pytest

from streamlsh.corpus import (
    CorpusRecord, build_vocabulary, parse_record, read_corpus, read_interest, replay, to_items, write_corpus,
    write_interest,
)
from streamlsh.dynapop import DynaPopConfig, InterestEvent
from streamlsh.errors import CorpusParseError, DomainError, ValidationError
from streamlsh.policies import Smooth
from streamlsh.stream import StreamIndexConfig, StreamLSH
from streamlsh.synth import GeneratorSpec, generate_items, generate_records, parse_quality
from streamlsh.vector import SparseVector, angular_similarity


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines))
    return path


def test_parse_text_and_vector_records():
    rec = parse_record('{"id": "a", "tick": 3, "text": "hello world", "quality": 0.5}')
    assert (rec.id, rec.tick, rec.text, rec.quality) == ("a", 3, "hello world", 0.5)
    rec = parse_record('{"id": "b", "tick": 0, "vector": [[3, 0.5], [1, 2.0]], "followers": 7}')
    assert rec.vector.indices.tolist() == [1, 3] and rec.followers == 7 and rec.quality is None


@pytest.mark.parametrize("line", [
    "not json",
    "[1, 2]",
    '{"tick": 0, "text": "x"}',
    '{"id": "a", "tick": -1, "text": "x"}',
    '{"id": "a", "tick": 1.5, "text": "x"}',
    '{"id": "a", "tick": 0}',
    '{"id": "a", "tick": 0, "text": "x", "vector": [[0, 1]]}',
    '{"id": "a", "tick": 0, "vector": [[0, 0.0]]}',
    '{"id": "a", "tick": 0, "text": "x", "quality": 1.5}',
    '{"id": "a", "tick": 0, "text": "x", "followers": -2}',
])
def test_malformed_records(line):
    with pytest.raises(CorpusParseError):
        parse_record(line, 1)


def test_parse_errors_carry_line_numbers(tmp_path):
    path = write_lines(tmp_path / "c.jsonl", ['{"id": "a", "tick": 0, "text": "x"}', "", "{oops"])
    with pytest.raises(CorpusParseError) as info:
        read_corpus(path)
    assert info.value.line_number == 3 and "line 3" in str(info.value)


def test_unsorted_and_duplicate_records(tmp_path):
    path = write_lines(tmp_path / "u.jsonl", ['{"id": "a", "tick": 2, "text": "x"}', '{"id": "b", "tick": 1, "text": "y"}'])
    with pytest.raises(CorpusParseError, match="sorted"):
        read_corpus(path)
    path = write_lines(tmp_path / "d.jsonl", ['{"id": "a", "tick": 0, "text": "x"}', '{"id": "a", "tick": 1, "text": "y"}'])
    with pytest.raises(CorpusParseError, match="duplicate"):
        read_corpus(path)


def test_round_trip_with_meta_line(tmp_path):
    records = [CorpusRecord("a", 0, text="red fish"), CorpusRecord("b", 1, vector=SparseVector([2, 5], [0.5, 1.0]),
                                                                    quality=0.25, followers=3)]
    path = tmp_path / "c.jsonl"
    assert write_corpus(records, path, meta={"command": "test"}) == 2
    assert json.loads(path.read_text().splitlines()[0]) == {"meta": {"command": "test"}}
    assert read_corpus(path) == records


def test_empty_corpus(tmp_path):
    path = write_lines(tmp_path / "e.jsonl", [])
    assert read_corpus(path) == []
    assert build_vocabulary([]) is None


def test_to_items_text_and_followers():
    records = [CorpusRecord("a", 0, text="red fish", followers=50), CorpusRecord("b", 0, text="blue fish"),
               CorpusRecord("c", 1, vector=SparseVector([0], [1.0]), quality=0.3, followers=200)]
    vocab = build_vocabulary(records)
    items = to_items(records, vocab, follower_norm=100)
    assert items[0].quality == pytest.approx(np.log2(1.5))
    assert items[1].quality == 1.0
    assert items[2].quality == 1.0
    assert to_items(records, vocab)[2].quality == 0.3
    assert 0.5 <= angular_similarity(items[0].vector, items[1].vector) < 1.0
    with pytest.raises(DomainError):
        to_items([CorpusRecord("z", 0, text="unseen words")], vocab)
    with pytest.raises(DomainError):
        to_items(records[:1])


def test_interest_round_trip(tmp_path):
    events = [InterestEvent("a", 0), InterestEvent("b", 2, 0.5)]
    path = tmp_path / "i.jsonl"
    write_interest(events, path, meta={"x": 1})
    assert read_interest(path) == events
    write_lines(path, ['{"id": "a", "tick": 3}', '{"id": "a", "tick": 1}'])
    with pytest.raises(CorpusParseError):
        read_interest(path)


def test_replay_runs_through_every_tick():
    items = list(generate_items(GeneratorSpec(ticks=5, items_per_tick=4, clusters=2, topic_dims=50,
                                              noise_dims=100), seed=0))
    index = StreamLSH(StreamIndexConfig(4, 2, Smooth(0.9), dynapop=DynaPopConfig()))
    stats = list(replay(index, items, [InterestEvent(items[0].id, 7)]))
    assert [s.tick for s in stats] == list(range(8))
    assert index.now == 7


def test_generator_counts_and_determinism():
    spec = GeneratorSpec(ticks=3, items_per_tick=7, clusters=4, topic_dims=60, noise_dims=200,
                         quality="uniform:0.2,0.4")
    a = list(generate_records(spec, 5))
    assert len(a) == 21 and [r.tick for r in a] == sorted(r.tick for r in a)
    assert all(0.2 <= r.quality <= 0.4 for r in a)
    assert a == list(generate_records(spec, 5))
    assert a != list(generate_records(spec, 6))
    assert list(generate_items(GeneratorSpec(ticks=0), 1)) == []


def test_generator_similarity_band():
    spec = GeneratorSpec(ticks=1, items_per_tick=300, clusters=1, sim_lo=0.9, sim_hi=0.95)
    items = list(generate_items(spec, 2))
    sims = [angular_similarity(items[0].vector, it.vector) for it in items[1:]]
    # both points lie within the band of the shared center
    assert min(sims) >= 0.8 - 1e-6


@pytest.mark.parametrize("bad", [dict(clusters=0), dict(sim_lo=0.4), dict(sim_lo=0.9, sim_hi=0.8),
                                 dict(zipf=-1), dict(quality="gauss"), dict(center_nnz=10, topic_dims=5)])
def test_generator_validation(bad):
    with pytest.raises(ValidationError):
        GeneratorSpec(**bad)


def test_parse_quality_samplers():
    rng = np.random.default_rng(0)
    assert parse_quality("const:0.3")(rng, 3).tolist() == [0.3, 0.3, 0.3]
    assert 0.45 < parse_quality("beta:2,2")(rng, 20000).mean() < 0.55
    with pytest.raises(ValidationError):
        parse_quality("const:2")
