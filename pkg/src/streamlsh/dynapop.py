"""Interest-stream handling: decayed popularity scores and re-indexing.

Popularity at tick ``n`` is ``(1 - alpha) * sum_i a_i * alpha**(n - i)`` where
``a_i`` is 1 when the item appeared in the interest stream at tick ``i``.  The
ledger stores the undecayed sum as of the last tick the item appeared and
decays lazily on read.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Iterator

from .errors import ProtocolError, ValidationError

if TYPE_CHECKING:
    from .stream import StreamLSH


@dataclass(frozen=True, slots=True)
class InterestEvent:
    item_id: str
    tick: int
    quality: float | None = None  # overrides the stored quality for this re-index

    def to_dict(self) -> dict:
        d = {"id": self.item_id, "tick": self.tick}
        if self.quality is not None:
            d["quality"] = self.quality
        return d


@dataclass(frozen=True)
class DynaPopConfig:
    u: float = 0.95
    alpha: float = 0.95

    def __post_init__(self):
        if not (0.0 < self.u <= 1.0):
            raise ValidationError(f"insertion factor u must lie in (0, 1], got {self.u!r}")
        if not (0.0 < self.alpha < 1.0):
            raise ValidationError(f"interest decay alpha must lie in (0, 1), got {self.alpha!r}")


class PopularityLedger:
    def __init__(self, alpha: float):
        if not (0.0 < alpha < 1.0):
            raise ValidationError(f"interest decay alpha must lie in (0, 1), got {alpha!r}")
        self.alpha = alpha
        self._state: dict[str, tuple[float, int]] = {}

    def __len__(self) -> int:
        return len(self._state)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._state

    def record_interest(self, item_ids: Iterable[str], tick: int) -> None:
        """Register the items seen in the interest stream at ``tick``.

        Repeats within one tick count once.

        Raises:
            ProtocolError: if ``tick`` precedes an item's last recorded tick.
        """
        for item_id in item_ids:
            prev = self._state.get(item_id)
            if prev is None:
                self._state[item_id] = (1.0, tick)
                continue
            score, last = prev
            if tick < last:
                raise ProtocolError(f"interest for {item_id!r} at tick {tick} after tick {last}")
            if tick > last:
                self._state[item_id] = (score * self.alpha ** (tick - last) + 1.0, tick)

    def pop(self, item_id: str, now: int) -> float:
        """Popularity in [0, 1] at tick ``now``; 0 for never-seen items."""
        prev = self._state.get(item_id)
        if prev is None:
            return 0.0
        score, last = prev
        if now < last:
            raise ProtocolError(f"cannot read popularity at tick {now} before last update {last}")
        return (1.0 - self.alpha) * score * self.alpha ** (now - last)

    def items(self) -> Iterator[tuple[str, float, int]]:
        for item_id, (score, last) in self._state.items():
            yield item_id, score, last

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "state": {k: [s, t] for k, (s, t) in self._state.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "PopularityLedger":
        ledger = cls(d["alpha"])
        ledger._state = {k: (float(s), int(t)) for k, (s, t) in d["state"].items()}
        return ledger


def direct_popularity(ticks_seen: Iterable[int], now: int, alpha: float) -> float:
    """Popularity by literal summation over the distinct ticks an item was seen."""
    return (1.0 - alpha) * sum(alpha ** (now - t) for t in set(ticks_seen) if t <= now)


def reindex(index: "StreamLSH", event: InterestEvent, u: float) -> int | None:
    """Re-insert ``event.item_id`` into each table with probability ``quality * u``.

    Returns the number of tables that received a new entry, or None when the
    item's vector can no longer be resolved (the event is then dropped).
    """
    return index.reindex(event.item_id, u, quality=event.quality)
