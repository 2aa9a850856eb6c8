"""Sparse non-negative vectors, TF-IDF vectorization and angular similarity."""

from __future__ import annotations

import math
import re
from collections import Counter
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .errors import DomainError

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


class SparseVector:
    """Immutable sparse vector with strictly increasing dimension indices.

    Weights are strictly positive; zero entries are dropped at construction.
    The Euclidean norm is computed once and cached.
    """

    __slots__ = ("indices", "weights", "norm")

    def __init__(self, indices: Sequence[int] | np.ndarray, weights: Sequence[float] | np.ndarray):
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if idx.shape != w.shape:
            raise ValueError("indices and weights must have the same length")
        if idx.size and idx.min() < 0:
            raise ValueError("dimension indices must be non-negative")
        if w.size and (np.any(w < 0) or not np.all(np.isfinite(w))):
            raise ValueError("weights must be finite and non-negative")
        keep = w > 0
        idx, w = idx[keep], w[keep]
        order = np.argsort(idx, kind="stable")
        idx, w = idx[order], w[order]
        if idx.size > 1 and np.any(np.diff(idx) == 0):
            raise ValueError("duplicate dimension index")
        idx.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "norm", float(np.sqrt(np.dot(w, w))))

    def __setattr__(self, name, value):
        raise AttributeError("SparseVector is immutable")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "SparseVector":
        pairs = list(pairs)
        if not pairs:
            return cls([], [])
        idx, w = zip(*((int(i), float(x)) for i, x in pairs))
        return cls(idx, w)

    @classmethod
    def from_dense(cls, values: Sequence[float]) -> "SparseVector":
        arr = np.asarray(values, dtype=np.float64)
        nz = np.flatnonzero(arr)
        return cls(nz, arr[nz])

    def to_pairs(self) -> list[list]:
        return [[int(i), float(x)] for i, x in zip(self.indices, self.weights)]

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def scaled(self, factor: float) -> "SparseVector":
        return SparseVector(self.indices, self.weights * factor)

    def dot(self, other: "SparseVector") -> float:
        _, ia, ib = np.intersect1d(self.indices, other.indices, assume_unique=True, return_indices=True)
        return float(np.dot(self.weights[ia], other.weights[ib]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return np.array_equal(self.indices, other.indices) and np.array_equal(self.weights, other.weights)

    def __hash__(self) -> int:
        return hash((self.indices.tobytes(), self.weights.tobytes()))

    def __repr__(self) -> str:
        return f"SparseVector(nnz={self.nnz}, norm={self.norm:.6g})"


# Rounding in the dot product leaves parallel vectors a few ulps short of
# cosine 1, which arccos magnifies to ~1e-8; cosines this close count as 1.
_PARALLEL_EPS = 1e-12


def _require_nonzero(*vectors: SparseVector) -> None:
    for v in vectors:
        if v.norm <= 0.0:
            raise DomainError("similarity is undefined for a zero-norm vector")


def cosine(u: SparseVector, v: SparseVector) -> float:
    """Cosine of the angle between ``u`` and ``v``, clamped to [-1, 1]."""
    _require_nonzero(u, v)
    c = u.dot(v) / (u.norm * v.norm)
    if c >= 1.0 - _PARALLEL_EPS:
        return 1.0
    return max(-1.0, c)


def angular_similarity(u: SparseVector, v: SparseVector) -> float:
    """``1 - angle(u, v) / pi``; 1 for parallel vectors, 0.5 for orthogonal ones."""
    return 1.0 - math.acos(cosine(u, v)) / math.pi


def angular_from_cosine(c: np.ndarray | float) -> np.ndarray | float:
    c = np.where(np.asarray(c) >= 1.0 - _PARALLEL_EPS, 1.0, np.clip(c, -1.0, 1.0))
    return 1.0 - np.arccos(c) / np.pi


def cosine_to_angular_threshold(r_sim: float) -> float:
    """Cosine value equivalent to an angular-similarity radius."""
    return math.cos(math.pi * (1.0 - r_sim))


def stack(vectors: Sequence[SparseVector], n_dims: int | None = None, normalize: bool = False) -> sparse.csr_matrix:
    """Stack vectors as the rows of a CSR matrix (optionally L2-normalized)."""
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    for i, v in enumerate(vectors):
        indptr[i + 1] = indptr[i] + v.nnz
    if vectors:
        indices = np.concatenate([v.indices for v in vectors])
        data = np.concatenate([v.weights / v.norm if normalize and v.norm > 0 else v.weights for v in vectors])
    else:
        indices = np.zeros(0, dtype=np.int64)
        data = np.zeros(0)
    width = int(indices.max()) + 1 if indices.size else 1
    if n_dims is not None:
        width = max(width, n_dims)
    return sparse.csr_matrix((data, indices, indptr), shape=(len(vectors), width))


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens; no stemming or stop-word removal."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Term to dimension map with document frequencies over a training corpus."""

    def __init__(self, terms: Mapping[str, int], doc_freq: Sequence[int], n_docs: int):
        if n_docs < 1:
            raise ValueError("vocabulary needs at least one document")
        if sorted(terms.values()) != list(range(len(terms))):
            raise ValueError("dimension indices must be dense 0..n-1")
        if len(doc_freq) != len(terms):
            raise ValueError("one document frequency per term required")
        if any(df < 1 or df > n_docs for df in doc_freq):
            raise ValueError("document frequency must lie in [1, n_docs]")
        self.terms = dict(terms)
        self.doc_freq = list(doc_freq)
        self.n_docs = n_docs
        self._idf = np.array([math.log(n_docs / (df + 1)) + 1.0 for df in doc_freq])

    @classmethod
    def build(cls, documents: Iterable[Sequence[str]]) -> "Vocabulary":
        terms: dict[str, int] = {}
        df: list[int] = []
        n = 0
        for doc in documents:
            n += 1
            # dict.fromkeys keeps first-occurrence order, so term ids do not
            # depend on the interpreter's string hash seed
            for term in dict.fromkeys(doc):
                if term not in terms:
                    terms[term] = len(terms)
                    df.append(0)
                df[terms[term]] += 1
        return cls(terms, df, n)

    def __len__(self) -> int:
        return len(self.terms)

    def idf(self, term: str) -> float:
        return float(self._idf[self.terms[term]])

    def to_dict(self) -> dict:
        return {"terms": self.terms, "doc_freq": self.doc_freq, "n_docs": self.n_docs}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(d["terms"], d["doc_freq"], d["n_docs"])


def vectorize(tokens: Sequence[str], vocab: Vocabulary) -> SparseVector:
    """TF-IDF vector: sqrt(term frequency) times ln(N / (df + 1)) + 1.

    Out-of-vocabulary tokens are dropped.

    Raises:
        DomainError: if no in-vocabulary token remains.
    """
    counts = Counter(t for t in tokens if t in vocab.terms)
    if not counts:
        raise DomainError("document has no in-vocabulary terms")
    idx = np.fromiter((vocab.terms[t] for t in counts), dtype=np.int64, count=len(counts))
    tf = np.sqrt(np.fromiter(counts.values(), dtype=np.float64, count=len(counts)))
    return SparseVector(idx, tf * vocab._idf[idx])
