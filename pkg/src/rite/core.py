"""Shared domain types and vector primitives.

All types here are immutable value objects validated at construction;
operations are pure functions, so everything is safe to share across
threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimMismatchError,
    InvalidConfigError,
    NegativeRelevanceError,
    ZeroVectorError,
)


class ReasoningSource(enum.Enum):
    GENERATED = "generated"
    PROVIDED = "provided"


class ReasoningVariant(enum.Enum):
    """Which of the three reasoning-elicitation prompts produced a text."""

    P1 = "P1"
    P2 = "P2"
    P3 = "P3"


@dataclass(frozen=True)
class Query:
    id: str
    text: str

    def __post_init__(self):
        if not self.id:
            raise InvalidConfigError("query id must be non-empty")
        if not self.text:
            raise InvalidConfigError(f"query {self.id!r} has empty text")


@dataclass(frozen=True)
class Document:
    id: str
    text: str

    def __post_init__(self):
        if not self.id:
            raise InvalidConfigError("document id must be non-empty")


@dataclass(frozen=True)
class ReasoningText:
    """A reasoning text attached to a query.

    Generated texts record which elicitation prompt produced them;
    externally provided (oracle) texts carry no variant. An empty
    ``text`` marks a generation that came back blank and is handled
    by the pipeline's fallback policy.
    """

    text: str
    source: ReasoningSource
    prompt_variant: ReasoningVariant | None = None

    def __post_init__(self):
        if self.source is ReasoningSource.GENERATED and self.prompt_variant is None:
            raise InvalidConfigError("generated reasoning must record its prompt variant")
        if self.source is ReasoningSource.PROVIDED and self.prompt_variant is not None:
            raise InvalidConfigError("provided reasoning must not carry a prompt variant")

    @property
    def is_empty(self) -> bool:
        return not self.text.strip()


_NORM_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """Fixed-dimension real vector stored as float32.

    ``normalized`` asserts unit L2 norm within 1e-4; it is checked at
    construction so downstream code can trust the flag.
    """

    values: np.ndarray
    dim: int
    normalized: bool = False

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 1:
            raise InvalidConfigError("embedding values must be one-dimensional")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if arr.shape[0] != self.dim:
            raise DimMismatchError(
                f"declared dim {self.dim} != {arr.shape[0]} values"
            )
        if self.dim <= 0:
            raise InvalidConfigError("dim must be positive")
        if not np.all(np.isfinite(arr)):
            raise InvalidConfigError("embedding values must be finite")
        if self.normalized:
            norm = float(np.linalg.norm(arr.astype(np.float64)))
            if abs(norm - 1.0) > _NORM_TOL:
                raise InvalidConfigError(
                    f"vector flagged normalized has L2 norm {norm:.6f}"
                )

    @classmethod
    def of(cls, values, normalized: bool = False) -> "EmbeddingVector":
        arr = np.asarray(values, dtype=np.float32)
        return cls(values=arr, dim=int(arr.shape[0]), normalized=normalized)


@dataclass(frozen=True)
class GenConfig:
    """Decoding parameters for reasoning generation.

    Defaults follow the retrieval setup: greedy decoding (temperature 0),
    frequency penalty 0.3, a single response choice.
    """

    temperature: float = 0.0
    frequency_penalty: float = 0.3
    max_tokens: int = 128
    n_choices: int = 1
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self):
        if self.temperature < 0:
            raise InvalidConfigError("temperature must be non-negative")
        if self.max_tokens < 1:
            raise InvalidConfigError("max_tokens must be positive")
        if self.n_choices < 1:
            raise InvalidConfigError("n_choices must be positive")
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))


@dataclass(frozen=True)
class ScoredDoc:
    doc_id: str
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise InvalidConfigError(f"score for {self.doc_id!r} is not finite")


@dataclass(frozen=True)
class RetrievalRun:
    """Ranked results per query: scores non-increasing, doc ids distinct."""

    rankings: dict[str, list[ScoredDoc]] = field(default_factory=dict)

    def __post_init__(self):
        for qid, docs in self.rankings.items():
            seen = set()
            prev = float("inf")
            for sd in docs:
                if sd.doc_id in seen:
                    raise InvalidConfigError(
                        f"query {qid!r}: duplicate doc id {sd.doc_id!r} in ranking"
                    )
                seen.add(sd.doc_id)
                if sd.score > prev:
                    raise InvalidConfigError(
                        f"query {qid!r}: scores not non-increasing at {sd.doc_id!r}"
                    )
                prev = sd.score


@dataclass(frozen=True)
class Qrels:
    """Graded relevance judgments: (query_id, doc_id) -> relevance >= 0."""

    judgments: dict[str, dict[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        for qid, docs in self.judgments.items():
            for did, rel in docs.items():
                if rel < 0:
                    raise NegativeRelevanceError(
                        f"negative relevance {rel} for ({qid!r}, {did!r})"
                    )

    def relevance(self, query_id: str, doc_id: str) -> int:
        return self.judgments.get(query_id, {}).get(doc_id, 0)

    def query_ids(self) -> list[str]:
        return list(self.judgments)


def l2_normalize(v: EmbeddingVector) -> EmbeddingVector:
    """Scale ``v`` to unit L2 norm, preserving direction.

    Norm is accumulated in float64 even though values are stored as
    float32. Raises ZeroVectorError when the norm is zero or underflows.
    """
    vals = v.values.astype(np.float64)
    norm = float(np.linalg.norm(vals))
    if norm == 0.0 or not np.isfinite(norm):
        raise ZeroVectorError("cannot normalize a zero vector")
    out = (vals / norm).astype(np.float32)
    if not np.any(out):
        raise ZeroVectorError("norm underflowed to zero")
    return EmbeddingVector(values=out, dim=v.dim, normalized=True)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity between two nonzero vectors, clamped to [-1, 1].

    Dot product and norms are accumulated in float64 for stability near
    +/-1; the summation order is fixed, so cosine(a, b) == cosine(b, a)
    exactly.
    """
    if a.dim != b.dim:
        raise DimMismatchError(f"dims differ: {a.dim} vs {b.dim}")
    av = a.values.astype(np.float64)
    bv = b.values.astype(np.float64)
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine undefined for zero vectors")
    score = float(np.dot(av, bv)) / (na * nb)
    return min(1.0, max(-1.0, score))
