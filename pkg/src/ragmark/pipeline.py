"""End-to-end extraction: embed the prompt, retrieve, augment, complete, validate.

The context rendering template is fixed and versioned; its id travels in
provenance so a template change visibly invalidates cached completions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .aspects import AspectSpec, ExtractionResult, Provenance, validate_payload
from .embed import DocumentIndex, RetrievalHit, embed_texts, retrieve
from .errors import GenerationInvalidError, NoContextError, PayloadError
from .ingest import DocumentChunk
from .llm import CompletionClient, CompletionRequest, ModelSpec

TEMPLATE_ID = "context-blocks-v1"

SYSTEM_PREAMBLE = (
    "You are a precise data-extraction assistant for insurance documents. "
    "Use only the provided context blocks. Respond with a single JSON object "
    "that conforms to the requested schema, and nothing else."
)


@dataclass(frozen=True)
class AugmentedQuery:
    """An aspect prompt with retrieved context rendered into one message."""

    aspect_id: str
    prompt: str
    context_blocks: tuple[tuple[str, str], ...]  # (chunk_id, text), score-descending
    rendered: str
    template_id: str = TEMPLATE_ID


def augment_prompt(
    prompt: str,
    hits: list[RetrievalHit],
    chunks: Mapping[str, DocumentChunk],
    aspect_id: str = "",
) -> AugmentedQuery:
    """Render the prompt plus retrieved chunks into the fixed template.

    Context blocks keep retrieval order (descending score); each block is
    introduced by the header line ``--- context <i> (chunk <id>) ---``.
    """
    if not hits:
        raise ValueError("hits must be non-empty")
    blocks: list[tuple[str, str]] = []
    parts: list[str] = [prompt]
    for position, hit in enumerate(hits, start=1):
        chunk = chunks.get(hit.chunk_id)
        if chunk is None:
            raise ValueError(f"hit references unknown chunk {hit.chunk_id!r}")
        blocks.append((chunk.chunk_id, chunk.text))
        parts.append(f"--- context {position} (chunk {chunk.chunk_id}) ---\n{chunk.text}")
    return AugmentedQuery(
        aspect_id=aspect_id,
        prompt=prompt,
        context_blocks=tuple(blocks),
        rendered="\n\n".join(parts),
    )


def extract(
    index: DocumentIndex,
    aspect: AspectSpec,
    model: ModelSpec,
    client: CompletionClient,
    run_index: int = 0,
) -> ExtractionResult:
    """Run one extraction against an indexed document.

    Raises :class:`NoContextError` when retrieval returns zero hits (the
    completion backend is never invoked in that case) and
    :class:`GenerationInvalidError`, carrying the verbatim completion, when
    the response fails validation.
    """
    query_vec = embed_texts([aspect.prompt], index.backend)[0]
    hits = retrieve(query_vec, index.store, aspect.retrieval)
    if not hits:
        raise NoContextError(
            f"no chunk reached similarity {aspect.retrieval.min_similarity} "
            f"for aspect {aspect.aspect_id!r} on document {index.doc.doc_id!r}"
        )
    augmented = augment_prompt(aspect.prompt, hits, index.chunks, aspect_id=aspect.aspect_id)
    request = CompletionRequest(
        model=model,
        system_prompt=SYSTEM_PREAMBLE,
        user_content=augmented.rendered,
        schema_id=aspect.schema_id,
        run_index=run_index,
    )
    raw, cache_hit = client.complete(request)
    try:
        payload = validate_payload(raw, aspect.schema_id)
    except PayloadError as err:
        raise GenerationInvalidError(
            f"completion failed validation for aspect {aspect.aspect_id!r}: {err}",
            raw=raw,
            cache_hit=cache_hit,
        ) from err
    return ExtractionResult(
        aspect_id=aspect.aspect_id,
        payload=payload,
        provenance=Provenance(
            model_version=model.version_id,
            retrieved=tuple((hit.chunk_id, hit.score) for hit in hits),
            cache_hit=cache_hit,
            run_index=run_index,
            template_id=augmented.template_id,
        ),
    )
