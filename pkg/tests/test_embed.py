from __future__ import annotations

import json
import math
import random

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ragmark._retry import RetryPolicy
from ragmark.embed import (
    EmbeddingVector,
    HashingEmbeddingBackend,
    OpenAIEmbeddingBackend,
    RetrievalConfig,
    RetrievalHit,
    VectorStore,
    build_document_index,
    cosine_similarity,
    embed_texts,
    embedded_chunks_to_json,
    index_from_embedded_json,
    retrieve,
)
from ragmark.errors import ConfigurationError, DimensionMismatchError, TransportError
from ragmark.ingest import SourceDocument

finite_floats = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


def vec(*values: float) -> EmbeddingVector:
    return EmbeddingVector(tuple(float(v) for v in values))


def store_of(entries: dict[str, EmbeddingVector]) -> VectorStore:
    store = VectorStore()
    for chunk_id, vector in entries.items():
        store.add(chunk_id, vector)
    return store


def brute_force_retrieve(query, store, cfg):
    """Independent oracle: plain-python cosine, sort, filter, truncate."""
    hits = []
    for chunk_id in store.chunk_ids():
        v = store.vector_for(chunk_id)
        dot = math.fsum(a * b for a, b in zip(query.values, v.values))
        nq = math.sqrt(math.fsum(a * a for a in query.values))
        nv = math.sqrt(math.fsum(b * b for b in v.values))
        hits.append((chunk_id, dot / (nq * nv)))
    hits = [h for h in hits if h[1] >= cfg.min_similarity]
    hits.sort(key=lambda h: (-h[1], h[0]))
    return hits[: cfg.top_k]


class TestEmbeddingVector:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            EmbeddingVector(())

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            EmbeddingVector((1.0, float("nan")))
        with pytest.raises(ValueError):
            EmbeddingVector((float("inf"),))

    def test_dims(self):
        assert vec(1, 2, 3).dims == 3


class TestCosine:
    def test_self_similarity(self):
        v = vec(0.3, -1.2, 4.0)
        assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine_similarity(vec(1, 0), vec(0, 1)) == 0.0

    def test_hand_computed_value(self):
        # 32 / (sqrt(14) * sqrt(77))
        assert cosine_similarity(vec(1, 2, 3), vec(4, 5, 6)) == pytest.approx(
            0.974631846, abs=1e-9
        )

    def test_dims_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            cosine_similarity(vec(1, 2), vec(1, 2, 3))

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            cosine_similarity(vec(0, 0), vec(1, 0))

    @given(
        st.lists(finite_floats, min_size=2, max_size=8),
        st.lists(finite_floats, min_size=2, max_size=8),
    )
    @settings(max_examples=100)
    def test_symmetry(self, a, b):
        n = min(len(a), len(b))
        va, vb = EmbeddingVector(tuple(a[:n])), EmbeddingVector(tuple(b[:n]))
        # Guard against norms that underflow to zero for tiny components.
        if all(math.fsum(x * x for x in v.values) > 0 for v in (va, vb)):
            assert cosine_similarity(va, vb) == pytest.approx(
                cosine_similarity(vb, va), abs=1e-12
            )


class TestVectorStore:
    def test_duplicate_ids_rejected(self):
        store = store_of({"a": vec(1, 0)})
        with pytest.raises(ValueError, match="duplicate"):
            store.add("a", vec(0, 1))

    def test_zero_vector_rejected_at_insert(self):
        store = VectorStore()
        with pytest.raises(ValueError, match="zero vector"):
            store.add("a", vec(0, 0))

    def test_dims_must_match(self):
        store = store_of({"a": vec(1, 0)})
        with pytest.raises(DimensionMismatchError):
            store.add("b", vec(1, 0, 0))


class TestRetrieve:
    def test_all_below_threshold_returns_empty(self):
        store = store_of({"a": vec(0, 1), "b": vec(0, 2)})
        assert retrieve(vec(1, 0), store, RetrievalConfig()) == []

    def test_threshold_filters_and_orders(self):
        def at_score(s):
            return vec(s, math.sqrt(1 - s * s))

        store = store_of({"hi": at_score(0.9), "mid": at_score(0.5), "lo": at_score(0.1)})
        hits = retrieve(vec(1, 0), store, RetrievalConfig(top_k=10, min_similarity=0.30))
        assert [h.chunk_id for h in hits] == ["hi", "mid"]
        assert hits[0].score == pytest.approx(0.9, abs=1e-12)

    def test_tie_break_ascending_chunk_id(self):
        same = vec(0.8, 0.6)
        store = store_of({f"c{i:02d}": same for i in range(15)})
        hits = retrieve(vec(1, 0), store, RetrievalConfig(top_k=10, min_similarity=0.30))
        assert [h.chunk_id for h in hits] == [f"c{i:02d}" for i in range(10)]

    def test_threshold_is_inclusive(self):
        store = store_of({"edge": vec(0.30, math.sqrt(1 - 0.09))})
        hits = retrieve(vec(1, 0), store, RetrievalConfig(top_k=5, min_similarity=0.30))
        assert [h.chunk_id for h in hits] == ["edge"]

    def test_empty_store_is_an_error(self):
        with pytest.raises(ValueError):
            retrieve(vec(1, 0), VectorStore(), RetrievalConfig())

    def test_dims_mismatch(self):
        store = store_of({"a": vec(1, 0, 0)})
        with pytest.raises(DimensionMismatchError):
            retrieve(vec(1, 0), store, RetrievalConfig())

    def test_monotone_truncation(self):
        rng = random.Random(7)
        store = store_of(
            {f"c{i}": vec(rng.uniform(-1, 1), rng.uniform(-1, 1)) for i in range(30)}
        )
        query = vec(1, 0.3)
        previous: list[RetrievalHit] = []
        for k in range(1, 31):
            hits = retrieve(query, store, RetrievalConfig(top_k=k, min_similarity=-1.0))
            assert hits[: len(previous)] == previous
            previous = hits

    def test_matches_brute_force_oracle(self):
        rng = random.Random(123)
        for trial in range(60):
            n = rng.randint(1, 50)
            dims = rng.choice([2, 3, 8])
            entries = {}
            for i in range(n):
                v = [rng.gauss(0, 1) for _ in range(dims)]
                if max(abs(x) for x in v) == 0:
                    v[0] = 1.0
                entries[f"c{i:03d}"] = EmbeddingVector(tuple(v))
                # Occasionally duplicate a vector under a new id to force ties.
                if i and rng.random() < 0.2:
                    entries[f"d{i:03d}"] = entries[f"c{i:03d}"]
            store = store_of(entries)
            query = EmbeddingVector(tuple(rng.gauss(0, 1) for _ in range(dims)))
            cfg = RetrievalConfig(top_k=rng.randint(1, 12), min_similarity=rng.uniform(-0.5, 0.5))
            hits = retrieve(query, store, cfg)
            oracle = brute_force_retrieve(query, store, cfg)
            assert [h.chunk_id for h in hits] == [cid for cid, _ in oracle]
            for hit, (_, score) in zip(hits, oracle):
                assert hit.score == pytest.approx(score, abs=1e-12)

    def test_scale_invariance_power_of_two_is_exact(self):
        rng = random.Random(5)
        entries = {f"c{i}": vec(rng.gauss(0, 1), rng.gauss(0, 1), rng.gauss(0, 1)) for i in range(20)}
        store = store_of(entries)
        query = vec(0.2, -0.4, 0.9)
        cfg = RetrievalConfig(top_k=10, min_similarity=0.1)
        baseline = retrieve(query, store, cfg)
        factors = {cid: 2.0 ** rng.randint(-6, 6) for cid in entries}
        scaled_store = store_of(
            {
                cid: EmbeddingVector(tuple(x * factors[cid] for x in v.values))
                for cid, v in entries.items()
            }
        )
        assert retrieve(query, scaled_store, cfg) == baseline

    def test_scale_invariance_random_scalars(self):
        rng = random.Random(11)
        entries = {f"c{i}": vec(rng.gauss(0, 1), rng.gauss(0, 1)) for i in range(25)}
        store = store_of(entries)
        query = vec(0.7, 0.1)
        cfg = RetrievalConfig(top_k=8, min_similarity=-1.0)
        baseline = [h.chunk_id for h in retrieve(query, store, cfg)]
        factors = {cid: rng.uniform(0.01, 100.0) for cid in entries}
        scaled = store_of(
            {
                cid: EmbeddingVector(tuple(x * factors[cid] for x in v.values))
                for cid, v in entries.items()
            }
        )
        assert [h.chunk_id for h in retrieve(query, scaled, cfg)] == baseline


class FlakyBackend:
    name = "flaky"
    dims = 4

    def __init__(self, failures: int):
        self._failures = failures
        self.calls = 0

    def embed(self, texts):
        self.calls += 1
        if self.calls <= self._failures:
            raise TransportError("flaky")
        return [EmbeddingVector((1.0, 0.0, 0.0, float(len(t)))) for t in texts]


class TestEmbedTexts:
    def test_batch_contract(self, hashing_backend):
        vectors = embed_texts(["x", "y"], hashing_backend)
        assert len(vectors) == 2
        assert vectors[0].dims == vectors[1].dims == hashing_backend.dims

    def test_determinism_and_equal_inputs(self, hashing_backend):
        first = embed_texts(["a"], hashing_backend)[0]
        second = embed_texts(["a"], hashing_backend)[0]
        assert first == second
        both = embed_texts(["a", "a"], hashing_backend)
        assert both[0] == both[1]

    def test_empty_batch_rejected(self, hashing_backend):
        with pytest.raises(ValueError):
            embed_texts([], hashing_backend)

    def test_retries_then_succeeds(self):
        backend = FlakyBackend(failures=2)
        policy = RetryPolicy(max_attempts=3, backoff_seconds=0)
        vectors = embed_texts(["abc"], backend, policy)
        assert backend.calls == 3
        assert vectors[0].dims == 4

    def test_exhausted_retries_carry_attempt_count(self):
        backend = FlakyBackend(failures=5)
        with pytest.raises(TransportError) as err:
            embed_texts(["abc"], backend, RetryPolicy(max_attempts=3, backoff_seconds=0))
        assert err.value.attempts == 3

    def test_mixed_dims_is_fatal(self):
        class BadBackend:
            name = "bad"
            dims = 2

            def embed(self, texts):
                return [EmbeddingVector((1.0,) * (2 + i)) for i, _ in enumerate(texts)]

        with pytest.raises(DimensionMismatchError):
            embed_texts(["a", "b"], BadBackend())


class TestHashingBackend:
    def test_different_seeds_differ(self):
        a = HashingEmbeddingBackend(dims=64, seed=0).embed(["hello world"])[0]
        b = HashingEmbeddingBackend(dims=64, seed=1).embed(["hello world"])[0]
        assert a != b

    def test_unit_norm(self):
        v = HashingEmbeddingBackend(dims=64, seed=0).embed(["some text"])[0]
        assert math.fsum(x * x for x in v.values) == pytest.approx(1.0, abs=1e-9)

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            HashingEmbeddingBackend().embed([""])

    def test_name_encodes_settings(self):
        assert HashingEmbeddingBackend(dims=128, seed=3).name == "hashing-128d-seed3"

    def test_vectors_are_stable_across_runs(self):
        # Frozen values: blake2b is platform-independent, so these constants
        # pin cross-process and cross-machine reproducibility.
        v = HashingEmbeddingBackend(dims=16, seed=0).embed(["a"])[0]
        expected = [0.0] * 16
        expected[4] = -0.948683298051
        expected[11] = 0.316227766017
        assert [round(x, 12) for x in v.values] == expected


class TestRemoteBackend:
    def test_requires_api_key(self, monkeypatch):
        monkeypatch.delenv("OPENAI_API_KEY", raising=False)
        with pytest.raises(ConfigurationError, match="OPENAI_API_KEY"):
            OpenAIEmbeddingBackend("text-embedding-3-large", dims=8)

    def test_parses_embeddings_response(self, monkeypatch):
        monkeypatch.setenv("OPENAI_API_KEY", "test-key")
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["json"] = json.loads(request.content)
            return httpx.Response(
                200,
                json={"data": [{"embedding": [0.1, 0.2]}, {"embedding": [0.3, 0.4]}]},
            )

        backend = OpenAIEmbeddingBackend(
            "text-embedding-3-large", dims=2, transport=httpx.MockTransport(handler)
        )
        vectors = backend.embed(["a", "b"])
        assert seen["json"] == {"model": "text-embedding-3-large", "input": ["a", "b"]}
        assert vectors[0].values == (0.1, 0.2)

    def test_http_error_is_transport_error(self, monkeypatch):
        monkeypatch.setenv("OPENAI_API_KEY", "test-key")
        backend = OpenAIEmbeddingBackend(
            "m", dims=2, transport=httpx.MockTransport(lambda req: httpx.Response(500))
        )
        with pytest.raises(TransportError):
            backend.embed(["a"])


class TestDocumentIndex:
    def test_build_and_roundtrip(self, hashing_backend):
        doc = SourceDocument(doc_id="d", company_label="ACME", text="alpha beta " * 400)
        index = build_document_index(doc, hashing_backend)
        assert len(index.order) == len(index.chunks) == len(index.store)
        rows = embedded_chunks_to_json(index)
        assert rows[0]["dims"] == hashing_backend.dims
        rebuilt = index_from_embedded_json(doc, rows, hashing_backend)
        assert rebuilt.order == index.order
        assert rebuilt.chunk_list() == index.chunk_list()
        for cid in index.order:
            assert rebuilt.store.vector_for(cid) == index.store.vector_for(cid)

    def test_dims_field_checked(self, hashing_backend):
        doc = SourceDocument(doc_id="d", company_label="", text="words " * 100)
        index = build_document_index(doc, hashing_backend)
        rows = embedded_chunks_to_json(index)
        rows[0]["dims"] = 7
        with pytest.raises(DimensionMismatchError):
            index_from_embedded_json(doc, rows, hashing_backend)
