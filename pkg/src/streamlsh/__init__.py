"""Bounded-memory similarity search over item streams."""

from .errors import (
    CorpusParseError,
    DomainError,
    InvariantViolation,
    ProtocolError,
    StreamLSHError,
    ValidationError,
)
from .lsh import HyperplaneHash, SketchFunction, TableSet
from .policies import Bucket, Smooth, Threshold
from .stream import Item, StreamIndexConfig, StreamLSH, TickStats, age_of
from .vector import SparseVector, Vocabulary, angular_similarity, cosine, vectorize

__version__ = "0.1.0"

__all__ = [
    "Bucket", "CorpusParseError", "DomainError", "HyperplaneHash", "InvariantViolation", "Item", "ProtocolError",
    "SketchFunction", "Smooth", "SparseVector", "StreamIndexConfig", "StreamLSH", "StreamLSHError", "TableSet",
    "Threshold", "TickStats", "ValidationError", "Vocabulary", "age_of", "angular_similarity", "cosine",
    "vectorize",
]
