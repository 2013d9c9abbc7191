"""Exact flat vector index with cosine top-k search and per-document dedup.

Vectors are stored as little-endian float32, which is also the on-disk
layout, so save/load round-trips are bit-exact. Search is a full scan and
sort: exact by construction, deterministic under the fixed tie-break
(descending score, then ascending chunk_id).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "SearchResult",
    "VectorIndex",
    "build_index",
    "search_topk",
    "dedup_by_document",
    "save_index",
    "load_index",
]

INDEX_MAGIC = b"HRAGIDX1"


@dataclass(frozen=True)
class SearchResult:
    chunk_id: str
    doc_id: str
    score: float


class VectorIndex:
    """Immutable flat index over (chunk_id, doc_id, vector) entries."""

    def __init__(
        self,
        chunk_ids: Sequence[str],
        doc_ids: Sequence[str],
        vectors: np.ndarray,
        corpus_hash: str = "",
        view_config_hash: str = "",
    ):
        if len(chunk_ids) != len(doc_ids):
            raise ValueError("chunk_ids and doc_ids must have equal length")
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a 2-D array of uniform dimension")
        if vectors.shape[0] != len(chunk_ids):
            raise ValueError("one vector required per entry")
        if len(set(chunk_ids)) != len(chunk_ids):
            dupes = sorted({c for c in chunk_ids if list(chunk_ids).count(c) > 1})
            raise ValueError(f"duplicate chunk_ids: {dupes[:5]}")
        self.chunk_ids = tuple(chunk_ids)
        self.doc_ids = tuple(doc_ids)
        self.vectors = vectors
        self.vectors.setflags(write=False)
        self.corpus_hash = corpus_hash
        self.view_config_hash = view_config_hash
        # Search-time caches: float64 copy, row norms (zero rows score 0 via
        # a dot product of 0), and the tie-break rank of each chunk_id.
        self._v64 = vectors.astype(np.float64)
        norms = np.linalg.norm(self._v64, axis=1)
        self._norms = np.where(norms > 0.0, norms, 1.0)
        rank_of = {cid: r for r, cid in enumerate(sorted(self.chunk_ids))}
        self._id_rank = np.array([rank_of[c] for c in self.chunk_ids], dtype=np.int64)

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.chunk_ids)

    def entries(self) -> Iterator[tuple[str, str, np.ndarray]]:
        """Iterate entries in insertion order."""
        for cid, did, vec in zip(self.chunk_ids, self.doc_ids, self.vectors):
            yield cid, did, vec


def build_index(
    keys: Sequence[tuple[str, str]],
    vectors: Sequence[np.ndarray] | np.ndarray,
    dimension: int | None = None,
    corpus_hash: str = "",
    view_config_hash: str = "",
) -> VectorIndex:
    """Build an index from (chunk_id, doc_id) pairs and their vectors.

    dimension is only consulted when keys is empty (an empty array carries
    no shape information).
    """
    chunk_ids = [k[0] for k in keys]
    doc_ids = [k[1] for k in keys]
    if len(chunk_ids) == 0:
        if dimension is None or dimension < 1:
            raise ValueError("empty index needs an explicit dimension")
        arr = np.zeros((0, dimension), dtype=np.float32)
    else:
        try:
            arr = np.asarray(vectors, dtype=np.float32)
        except ValueError as exc:
            raise ValueError("vectors must share one dimension") from exc
        if arr.ndim != 2:
            raise ValueError("vectors must share one dimension")
        if dimension is not None and arr.shape[1] != dimension:
            raise ValueError(f"vectors have dim {arr.shape[1]}, expected {dimension}")
    return VectorIndex(chunk_ids, doc_ids, arr, corpus_hash, view_config_hash)


def search_topk(index: VectorIndex, q: np.ndarray, k: int) -> list[SearchResult]:
    """Exact cosine top-k over the whole index.

    Scores are true cosines (entry norms divided out) so rankings are
    invariant to positive rescaling of stored vectors. Ties order by
    ascending chunk_id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        return []
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (index.dimension,):
        raise ValueError(f"query has shape {q.shape}, index dimension is {index.dimension}")
    qn = float(np.linalg.norm(q))
    if qn == 0.0:
        raise ValueError("cannot search with a zero query vector")
    scores = (index._v64 @ q) / (index._norms * qn)
    order = np.lexsort((index._id_rank, -scores))
    top = order[: min(k, len(index))]
    return [
        SearchResult(index.chunk_ids[i], index.doc_ids[i], float(scores[i])) for i in top
    ]


def dedup_by_document(results: Sequence[SearchResult]) -> list[SearchResult]:
    """Keep only the first (best) result per doc_id, preserving order."""
    seen: set[str] = set()
    out: list[SearchResult] = []
    for r in results:
        if r.doc_id in seen:
            continue
        seen.add(r.doc_id)
        out.append(r)
    return out


def save_index(index: VectorIndex, path: str) -> None:
    """Write the little-endian binary layout.

    Header: magic, dimension u32, count u64. Then per entry: u32-length
    UTF-8 chunk_id, u32-length UTF-8 doc_id, dimension float32 values.
    """
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<IQ", index.dimension, len(index)))
        for cid, did, vec in index.entries():
            for name in (cid, did):
                raw = name.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
            fh.write(vec.astype("<f4").tobytes())


def load_index(path: str) -> VectorIndex:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(INDEX_MAGIC)] != INDEX_MAGIC:
        raise ValueError(f"{path}: bad magic, not an index file")
    offset = len(INDEX_MAGIC)
    try:
        dim, count = struct.unpack_from("<IQ", data, offset)
        offset += 12
        chunk_ids: list[str] = []
        doc_ids: list[str] = []
        vectors = np.zeros((count, dim), dtype=np.float32)
        for i in range(count):
            for names in (chunk_ids, doc_ids):
                (length,) = struct.unpack_from("<I", data, offset)
                offset += 4
                names.append(data[offset : offset + length].decode("utf-8"))
                offset += length
            vectors[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
            offset += dim * 4
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise ValueError(f"{path}: truncated or corrupt index file") from exc
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing bytes")
    return VectorIndex(chunk_ids, doc_ids, vectors)
