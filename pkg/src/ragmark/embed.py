"""Embedding backends, an in-memory vector store, and cosine top-k retrieval.

The store is immutable once built (build phase, then queries only), so
concurrent retrieval needs no locking. Retrieval is fully deterministic:
hits are ordered by descending score with ties broken by ascending chunk id.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from ._retry import RetryPolicy, call_with_retries
from .errors import ConfigurationError, DimensionMismatchError, TransportError
from .ingest import ChunkConfig, DocumentChunk, SourceDocument, chunk_document


@dataclass(frozen=True)
class EmbeddingVector:
    """A fixed-dimension vector of finite reals."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("embedding vector must not be empty")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("embedding vector contains non-finite values")

    @property
    def dims(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    @classmethod
    def from_array(cls, arr: Sequence[float] | np.ndarray) -> "EmbeddingVector":
        return cls(tuple(float(v) for v in arr))


@dataclass(frozen=True)
class RetrievalConfig:
    """Top-k cutoff and minimum cosine similarity for retrieval.

    The similarity bound is inclusive: hits with score exactly equal to
    ``min_similarity`` are kept.
    """

    top_k: int = 10
    min_similarity: float = 0.30

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")
        if not -1.0 <= self.min_similarity <= 1.0:
            raise ValueError("min_similarity must lie in [-1, 1]")


@dataclass(frozen=True)
class RetrievalHit:
    chunk_id: str
    score: float


@runtime_checkable
class EmbeddingBackend(Protocol):
    """Anything that can turn a batch of texts into equal-dims vectors."""

    name: str
    dims: int

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine of the angle between two vectors: dot(a,b) / (|a| * |b|)."""
    if a.dims != b.dims:
        raise DimensionMismatchError(f"dims mismatch: {a.dims} vs {b.dims}")
    av, bv = a.as_array(), b.as_array()
    na = float(np.sqrt(np.dot(av, av)))
    nb = float(np.sqrt(np.dot(bv, bv)))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return float(np.dot(av, bv) / (na * nb))


class VectorStore:
    """Ordered in-memory collection of (chunk_id, vector) pairs.

    All vectors must share one dimensionality; chunk ids are unique; zero
    vectors are rejected at insert time.
    """

    def __init__(self, dims: int | None = None):
        self._dims = dims
        self._ids: list[str] = []
        self._vectors: list[np.ndarray] = []
        self._norms: list[float] = []
        self._index: dict[str, int] = {}

    @property
    def dims(self) -> int | None:
        return self._dims

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, chunk_id: str) -> bool:
        return chunk_id in self._index

    def chunk_ids(self) -> list[str]:
        return list(self._ids)

    def vector_for(self, chunk_id: str) -> EmbeddingVector:
        return EmbeddingVector.from_array(self._vectors[self._index[chunk_id]])

    def add(self, chunk_id: str, vector: EmbeddingVector) -> None:
        if chunk_id in self._index:
            raise ValueError(f"duplicate chunk id in store: {chunk_id!r}")
        if self._dims is None:
            self._dims = vector.dims
        elif vector.dims != self._dims:
            raise DimensionMismatchError(
                f"store holds {self._dims}-dim vectors, got {vector.dims}"
            )
        arr = vector.as_array()
        norm = float(np.sqrt(np.dot(arr, arr)))
        if norm == 0.0:
            raise ValueError(f"zero vector rejected for chunk {chunk_id!r}")
        self._index[chunk_id] = len(self._ids)
        self._ids.append(chunk_id)
        self._vectors.append(arr)
        self._norms.append(norm)


def retrieve(
    query_vec: EmbeddingVector,
    store: VectorStore,
    cfg: RetrievalConfig = RetrievalConfig(),
) -> list[RetrievalHit]:
    """Top-k chunks by cosine similarity, filtered at ``min_similarity``.

    May return fewer than ``top_k`` hits, including none at all.
    """
    if len(store) == 0:
        raise ValueError("cannot retrieve from an empty store")
    if store.dims != query_vec.dims:
        raise DimensionMismatchError(
            f"store holds {store.dims}-dim vectors, query has {query_vec.dims}"
        )
    q = query_vec.as_array()
    qnorm = float(np.sqrt(np.dot(q, q)))
    if qnorm == 0.0:
        raise ValueError("cosine similarity undefined for zero query vector")
    scored = []
    for chunk_id, vec, norm in zip(store._ids, store._vectors, store._norms):
        score = float(np.dot(q, vec) / (qnorm * norm))
        if score >= cfg.min_similarity:
            scored.append((chunk_id, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return [RetrievalHit(chunk_id, score) for chunk_id, score in scored[: cfg.top_k]]


def embed_texts(
    texts: Sequence[str],
    backend: EmbeddingBackend,
    policy: RetryPolicy = RetryPolicy(),
) -> list[EmbeddingVector]:
    """Embed a batch of texts, retrying transport failures.

    Guarantees one vector per input in input order and a uniform ``dims``
    across the batch; a mismatch is a fatal backend bug, not retried.
    """
    if not texts:
        raise ValueError("texts must be non-empty")
    vectors = call_with_retries(lambda: backend.embed(texts), policy)
    if len(vectors) != len(texts):
        raise DimensionMismatchError(
            f"backend returned {len(vectors)} vectors for {len(texts)} texts"
        )
    dims = vectors[0].dims
    for v in vectors[1:]:
        if v.dims != dims:
            raise DimensionMismatchError("backend returned mixed dims within one batch")
    return vectors


class HashingEmbeddingBackend:
    """Deterministic local embedding: seeded hash of character n-grams.

    Character trigrams, words, and word bigrams of the casefolded text are
    hashed to (bucket, sign) pairs; the weighted count vector is
    L2-normalised. Identical text always yields an identical vector, across
    runs and platforms, which makes offline tests fully reproducible. Not a
    semantic model: similarity is lexical overlap.
    """

    _TRIGRAM_WEIGHT = 1.0
    _WORD_WEIGHT = 3.0
    _BIGRAM_WEIGHT = 4.0

    def __init__(self, dims: int = 256, seed: int = 0):
        if dims < 2:
            raise ValueError("dims must be at least 2")
        self.dims = dims
        self.seed = seed
        self.name = f"hashing-{dims}d-seed{seed}"
        self._key = seed.to_bytes(8, "big", signed=True)

    def _bucket(self, gram: str) -> tuple[int, float]:
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=self._key).digest()
        value = int.from_bytes(digest, "big")
        sign = 1.0 if value & 1 else -1.0
        return (value >> 1) % self.dims, sign

    def _embed_one(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        padded = f" {text.casefold()} "
        counts = np.zeros(self.dims, dtype=np.float64)
        for i in range(len(padded) - 2):
            bucket, sign = self._bucket(padded[i : i + 3])
            counts[bucket] += self._TRIGRAM_WEIGHT * sign
        words = padded.split()
        for word in words:
            bucket, sign = self._bucket(f"w:{word}")
            counts[bucket] += self._WORD_WEIGHT * sign
        for first, second in zip(words, words[1:]):
            bucket, sign = self._bucket(f"b:{first} {second}")
            counts[bucket] += self._BIGRAM_WEIGHT * sign
        norm = float(np.sqrt(np.dot(counts, counts)))
        if norm == 0.0:
            # Pathological cancellation; pin a deterministic fallback bucket.
            counts[len(text) % self.dims] = 1.0
            norm = 1.0
        return EmbeddingVector.from_array(counts / norm)

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self._embed_one(t) for t in texts]


class OpenAIEmbeddingBackend:
    """Remote embeddings over an OpenAI-compatible ``/embeddings`` endpoint.

    Credentials come from the ``<PROVIDER>_API_KEY`` environment variable.
    Network problems surface as retriable :class:`TransportError`.
    """

    def __init__(
        self,
        version_id: str,
        dims: int,
        provider: str = "openai",
        base_url: str = "https://api.openai.com/v1",
        timeout: float = 60.0,
        transport=None,
    ):
        import httpx

        self.name = version_id
        self.dims = dims
        self.provider = provider
        env = f"{provider.upper()}_API_KEY"
        api_key = os.environ.get(env)
        if not api_key:
            raise ConfigurationError(f"environment variable {env} is not set")
        self._client = httpx.Client(
            base_url=base_url,
            headers={"Authorization": f"Bearer {api_key}"},
            timeout=timeout,
            transport=transport,
        )

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        import httpx

        try:
            response = self._client.post(
                "/embeddings", json={"model": self.name, "input": list(texts)}
            )
            response.raise_for_status()
        except httpx.HTTPError as err:
            raise TransportError(f"embedding request failed: {err}") from err
        data = response.json()["data"]
        return [EmbeddingVector.from_array(item["embedding"]) for item in data]


@dataclass
class DocumentIndex:
    """A document after cleansing, chunking, and embedding: ready to query."""

    doc: SourceDocument
    chunks: dict[str, DocumentChunk]
    store: VectorStore
    backend: EmbeddingBackend
    order: list[str] = field(default_factory=list)

    def chunk_list(self) -> list[DocumentChunk]:
        return [self.chunks[cid] for cid in self.order]


def index_from_chunks(
    doc: SourceDocument,
    chunks: Sequence[DocumentChunk],
    backend: EmbeddingBackend,
    policy: RetryPolicy = RetryPolicy(),
) -> DocumentIndex:
    """Embed already-chunked text and assemble a queryable index."""
    vectors = embed_texts([c.text for c in chunks], backend, policy)
    store = VectorStore()
    for chunk, vector in zip(chunks, vectors):
        store.add(chunk.chunk_id, vector)
    return DocumentIndex(
        doc=doc,
        chunks={c.chunk_id: c for c in chunks},
        store=store,
        backend=backend,
        order=[c.chunk_id for c in chunks],
    )


def build_document_index(
    doc: SourceDocument,
    backend: EmbeddingBackend,
    cfg: ChunkConfig = ChunkConfig(),
    policy: RetryPolicy = RetryPolicy(),
) -> DocumentIndex:
    """Cleanse, chunk, and embed one document into a queryable index."""
    return index_from_chunks(doc, chunk_document(doc, cfg), backend, policy)


def embedded_chunks_to_json(index: DocumentIndex) -> list[dict]:
    """Serialise chunks together with their vectors (dims + values)."""
    rows = []
    for chunk_id in index.order:
        chunk = index.chunks[chunk_id]
        vector = index.store.vector_for(chunk_id)
        rows.append(
            {
                "chunk_id": chunk.chunk_id,
                "doc_id": chunk.doc_id,
                "start_char": chunk.start_char,
                "end_char": chunk.end_char,
                "text": chunk.text,
                "dims": vector.dims,
                "values": list(vector.values),
            }
        )
    return rows


def index_from_embedded_json(
    doc: SourceDocument, rows: list[dict], backend: EmbeddingBackend
) -> DocumentIndex:
    """Rebuild a :class:`DocumentIndex` from serialised chunk+vector rows."""
    store = VectorStore()
    chunks: dict[str, DocumentChunk] = {}
    order: list[str] = []
    for row in rows:
        chunk = DocumentChunk(
            chunk_id=row["chunk_id"],
            doc_id=row["doc_id"],
            start_char=row["start_char"],
            end_char=row["end_char"],
            text=row["text"],
        )
        vector = EmbeddingVector(tuple(float(v) for v in row["values"]))
        if vector.dims != row["dims"]:
            raise DimensionMismatchError(
                f"chunk {chunk.chunk_id!r}: dims field says {row['dims']}, "
                f"vector has {vector.dims}"
            )
        store.add(chunk.chunk_id, vector)
        chunks[chunk.chunk_id] = chunk
        order.append(chunk.chunk_id)
    return DocumentIndex(doc=doc, chunks=chunks, store=store, backend=backend, order=order)
