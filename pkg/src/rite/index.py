"""Exact cosine top-k search over document embeddings, with persistence.

Rows are stored L2-normalized so a search is one normalization of the
query plus dot products against every row (the hot scan lives in
``_kernels``). No approximation: results are exactly the best-k by
(score descending, doc id ascending).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import container
from ._kernels import dot_scores
from .core import EmbeddingVector, ScoredDoc, l2_normalize
from .errors import DimMismatchError, DuplicateIdError, FormatError, InvalidConfigError

_ROW_NORM_TOL = 1e-4


@dataclass(frozen=True)
class VectorIndex:
    """Id-addressed dense matrix; rows unit-norm, one per document."""

    dim: int
    ids: tuple[str, ...]
    matrix: np.ndarray  # float32 [count, dim], rows L2-normalized

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        m = np.ascontiguousarray(self.matrix, dtype=np.float32)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape != (len(self.ids), self.dim):
            raise InvalidConfigError(
                f"matrix shape {m.shape} does not match "
                f"{len(self.ids)} ids x dim {self.dim}"
            )
        if len(set(self.ids)) != len(self.ids):
            raise DuplicateIdError("index ids must be unique")
        if len(self.ids):
            norms = np.linalg.norm(m.astype(np.float64), axis=1)
            bad = np.abs(norms - 1.0) > _ROW_NORM_TOL
            if bad.any():
                raise InvalidConfigError(
                    f"{int(bad.sum())} rows are not unit-norm"
                )

    def __len__(self) -> int:
        return len(self.ids)


def build(entries: list[tuple[str, EmbeddingVector]]) -> VectorIndex:
    """Build an index from (doc_id, vector) pairs, normalizing each row.

    Input order is preserved. Duplicate ids, mismatched dims, and zero
    vectors are rejected.
    """
    if not entries:
        return VectorIndex(dim=0, ids=(), matrix=np.zeros((0, 0), dtype=np.float32))
    dim = entries[0][1].dim
    ids: list[str] = []
    seen: set[str] = set()
    rows = np.empty((len(entries), dim), dtype=np.float32)
    for i, (doc_id, vec) in enumerate(entries):
        if vec.dim != dim:
            raise DimMismatchError(
                f"entry {doc_id!r} has dim {vec.dim}, expected {dim}"
            )
        if doc_id in seen:
            raise DuplicateIdError(f"duplicate doc id {doc_id!r}")
        seen.add(doc_id)
        ids.append(doc_id)
        rows[i] = l2_normalize(vec).values
    return VectorIndex(dim=dim, ids=tuple(ids), matrix=rows)


def search(index: VectorIndex, query_vec: EmbeddingVector, k: int) -> list[ScoredDoc]:
    """Top-k rows by cosine, ties broken by doc id ascending.

    The query is normalized once; scores are float64 dot products
    against the stored unit rows, clamped to [-1, 1].
    """
    if k < 1:
        raise InvalidConfigError("k must be at least 1")
    if len(index) == 0:
        return []
    if query_vec.dim != index.dim:
        raise DimMismatchError(
            f"query dim {query_vec.dim} != index dim {index.dim}"
        )
    q = l2_normalize(query_vec).values.astype(np.float64)
    scores = np.clip(dot_scores(index.matrix, q), -1.0, 1.0)
    order = sorted(range(len(index)), key=lambda i: (-scores[i], index.ids[i]))
    return [ScoredDoc(index.ids[i], float(scores[i])) for i in order[:k]]


def merge_results(partials: list[list[ScoredDoc]], k: int) -> list[ScoredDoc]:
    """Merge per-shard search results into a global top-k.

    Deterministic: the merged order uses the same (score descending,
    doc id ascending) key as search itself, so searching shards and
    merging equals searching the concatenated index.
    """
    merged = [sd for part in partials for sd in part]
    merged.sort(key=lambda sd: (-sd.score, sd.doc_id))
    return merged[:k]


def save(index: VectorIndex, path) -> None:
    container.write_matrix(path, list(index.ids), index.matrix, container.ROLE_INDEX)


def load(path) -> VectorIndex:
    ids, matrix, role = container.read_matrix(path)
    if role != container.ROLE_INDEX:
        raise FormatError(f"container holds role {role}, expected an index")
    return VectorIndex(dim=matrix.shape[1], ids=tuple(ids), matrix=matrix)
