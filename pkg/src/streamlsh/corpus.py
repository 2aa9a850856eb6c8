"""Line-delimited JSON corpus and interest-stream files.

Corpus lines look like::

    {"id": "a1", "tick": 0, "text": "some words", "quality": 0.8}
    {"id": "a2", "tick": 0, "vector": [[3, 0.5], [17, 1.25]], "followers": 120}

An optional first line ``{"meta": {...}}`` carries provenance and is skipped
by the reader.  ``quality`` defaults to 1.0.  When ``followers`` is present and a follower
normalization is configured, quality is derived from it instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .dynapop import InterestEvent
from .errors import CorpusParseError, DomainError
from .stream import Item
from .vector import SparseVector, Vocabulary, tokenize, vectorize


@dataclass(frozen=True)
class CorpusRecord:
    id: str
    tick: int
    text: str | None = None
    vector: SparseVector | None = None
    quality: float | None = None
    followers: int | None = None

    def to_dict(self) -> dict:
        d: dict = {"id": self.id, "tick": self.tick}
        if self.text is not None:
            d["text"] = self.text
        if self.vector is not None:
            d["vector"] = self.vector.to_pairs()
        if self.quality is not None:
            d["quality"] = self.quality
        if self.followers is not None:
            d["followers"] = self.followers
        return d


def follower_quality(followers: int, n_f: int) -> float:
    """``log2(1 + min(1, followers / n_f))``: 0 with no followers, 1 from ``n_f`` on."""
    if n_f < 1:
        raise ValueError("follower normalization must be at least 1")
    if followers < 0:
        raise ValueError("follower count must be non-negative")
    return math.log2(1.0 + min(1.0, followers / n_f))


def parse_record(line: str, line_number: int | None = None) -> CorpusRecord:
    try:
        d = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusParseError(f"invalid JSON: {exc.msg}", line_number) from exc
    if not isinstance(d, dict):
        raise CorpusParseError("record must be a JSON object", line_number)
    try:
        item_id = d["id"]
        tick = d["tick"]
    except KeyError as exc:
        raise CorpusParseError(f"missing field {exc.args[0]!r}", line_number) from exc
    if not isinstance(item_id, str) or not isinstance(tick, int) or isinstance(tick, bool) or tick < 0:
        raise CorpusParseError("'id' must be a string and 'tick' a non-negative integer", line_number)
    text = d.get("text")
    raw_vec = d.get("vector")
    if (text is None) == (raw_vec is None):
        raise CorpusParseError("exactly one of 'text' or 'vector' is required", line_number)
    vector = None
    if raw_vec is not None:
        try:
            vector = SparseVector.from_pairs(raw_vec)
        except (TypeError, ValueError) as exc:
            raise CorpusParseError(f"bad vector: {exc}", line_number) from exc
        if vector.norm == 0.0:
            raise CorpusParseError("zero vector", line_number)
    elif not isinstance(text, str):
        raise CorpusParseError("'text' must be a string", line_number)
    quality = d.get("quality")
    if quality is not None and (not isinstance(quality, (int, float)) or not 0.0 <= quality <= 1.0):
        raise CorpusParseError("'quality' must be a number in [0, 1]", line_number)
    followers = d.get("followers")
    if followers is not None and (not isinstance(followers, int) or followers < 0):
        raise CorpusParseError("'followers' must be a non-negative integer", line_number)
    return CorpusRecord(item_id, tick, text, vector, None if quality is None else float(quality), followers)


def read_corpus(path: str | Path) -> list[CorpusRecord]:
    """Read and validate a corpus; records must be sorted by tick with unique ids."""
    records = []
    seen: set[str] = set()
    last_tick = -1
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if not records and line.startswith('{"meta"'):
                continue
            rec = parse_record(line, n)
            if rec.tick < last_tick:
                raise CorpusParseError(f"tick {rec.tick} after tick {last_tick}: corpus must be sorted", n)
            if rec.id in seen:
                raise CorpusParseError(f"duplicate id {rec.id!r}", n)
            seen.add(rec.id)
            last_tick = rec.tick
            records.append(rec)
    return records


def write_corpus(records: Iterable[CorpusRecord], path: str | Path, meta: dict | None = None) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({"meta": meta}, sort_keys=True, separators=(",", ":")) + "\n")
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), separators=(",", ":")) + "\n")
            n += 1
    return n


def build_vocabulary(records: Sequence[CorpusRecord]) -> Vocabulary | None:
    texts = [tokenize(r.text) for r in records if r.text is not None]
    return Vocabulary.build(texts) if texts else None


def to_items(records: Sequence[CorpusRecord], vocab: Vocabulary | None = None,
             follower_norm: int | None = None) -> list[Item]:
    """Turn records into items; text records are weighted with ``vocab``.

    Raises:
        DomainError: a text record has no in-vocabulary terms.
    """
    items = []
    for rec in records:
        if rec.vector is not None:
            vec = rec.vector
        else:
            if vocab is None:
                raise DomainError("text records need a vocabulary")
            try:
                vec = vectorize(tokenize(rec.text), vocab)
            except DomainError as exc:
                raise DomainError(f"record {rec.id!r}: {exc}") from exc
        if follower_norm is not None and rec.followers is not None:
            quality = follower_quality(rec.followers, follower_norm)
        else:
            quality = 1.0 if rec.quality is None else rec.quality
        items.append(Item(rec.id, rec.tick, vec, quality))
    return items


def read_interest(path: str | Path) -> list[InterestEvent]:
    events = []
    last = -1
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip() or (not events and line.startswith('{"meta"')):
                continue
            try:
                d = json.loads(line)
                event = InterestEvent(str(d["id"]), int(d["tick"]), d.get("quality"))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusParseError(f"bad interest record: {exc}", n) from exc
            if event.tick < last:
                raise CorpusParseError("interest stream must be sorted by tick", n)
            last = event.tick
            events.append(event)
    return events


def write_interest(events: Iterable[InterestEvent], path: str | Path, meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({"meta": meta}, sort_keys=True, separators=(",", ":")) + "\n")
        for e in events:
            fh.write(json.dumps(e.to_dict(), separators=(",", ":")) + "\n")


def group_by_tick(items: Iterable[Item]) -> dict[int, list[Item]]:
    out: dict[int, list[Item]] = {}
    for it in items:
        out.setdefault(it.tick, []).append(it)
    return out


def replay(index, items: Sequence[Item], interest: Sequence[InterestEvent] = (),
           until: int | None = None) -> Iterator:
    """Feed items and interest events to ``index`` tick by tick, yielding TickStats.

    Runs from the index's next tick through ``until`` (default: the last tick
    that carries an item or event).
    """
    by_tick = group_by_tick(items)
    events: dict[int, list[InterestEvent]] = {}
    for e in interest:
        events.setdefault(e.tick, []).append(e)
    last = max([*by_tick, *events], default=index.now)
    if until is not None:
        last = until
    while index.next_tick <= last:
        t = index.next_tick
        yield index.tick(by_tick.get(t, ()), events.get(t, ()))
