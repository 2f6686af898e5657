"""Load plain-text documents, cleanse them, and cut them into overlapping chunks.

Chunk boundaries are character-based fixed-stride windows: no sentence
snapping, no tokenisation. Cleansing and chunking are pure functions, so the
same input always produces byte-identical chunk lists.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyDocumentError

# Control characters other than newline; tab survives until the whitespace
# collapse below. Includes DEL and the C1 range.
_CONTROL_RE = re.compile(r"[\x00-\x08\x0b-\x1f\x7f-\x9f]")
_SPACE_RUN_RE = re.compile(r"[ \t]+")
_NEWLINE_RUN_RE = re.compile(r"\n{3,}")


@dataclass(frozen=True)
class SourceDocument:
    """One input document: pre-extracted page text joined by newlines."""

    doc_id: str
    company_label: str
    text: str

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")


@dataclass(frozen=True)
class ChunkConfig:
    """Window size and overlap for the sliding-window chunker."""

    max_chars: int = 2000
    overlap_chars: int = 300

    def __post_init__(self) -> None:
        if self.max_chars <= 0:
            raise ValueError("max_chars must be positive")
        if self.overlap_chars < 0:
            raise ValueError("overlap_chars must be non-negative")
        if self.overlap_chars >= self.max_chars:
            raise ValueError("overlap_chars must be smaller than max_chars")

    @property
    def stride(self) -> int:
        return self.max_chars - self.overlap_chars


@dataclass(frozen=True)
class DocumentChunk:
    """A contiguous span of a cleansed document.

    ``text`` is exactly the substring of the cleansed document at
    ``[start_char, end_char)``.
    """

    chunk_id: str
    doc_id: str
    start_char: int
    end_char: int
    text: str


def cleanse_text(raw: str) -> str:
    """Normalise whitespace and strip non-newline control characters.

    Rules, in order: CR/CRLF become LF; remaining control characters become
    spaces (preserving word boundaries); runs of spaces/tabs collapse to one
    space; each line is stripped; runs of three or more newlines collapse to
    two; the whole text is stripped. Idempotent by construction.
    """
    text = raw.replace("\r\n", "\n").replace("\r", "\n")
    text = _CONTROL_RE.sub(" ", text)
    text = _SPACE_RUN_RE.sub(" ", text)
    text = "\n".join(line.strip() for line in text.split("\n"))
    text = _NEWLINE_RUN_RE.sub("\n\n", text)
    return text.strip()


def chunk_text(text: str, cfg: ChunkConfig = ChunkConfig(), doc_id: str = "doc") -> list[DocumentChunk]:
    """Split ``text`` into fixed-stride overlapping windows.

    Chunk ``i`` starts at ``i * (max_chars - overlap_chars)``; every chunk is
    at most ``max_chars`` long; consecutive chunks share exactly
    ``overlap_chars`` characters (the final chunk may simply end early).
    Raises :class:`EmptyDocumentError` on empty input.
    """
    if not text:
        raise EmptyDocumentError(f"empty document: {doc_id!r}")
    chunks: list[DocumentChunk] = []
    start = 0
    index = 0
    n = len(text)
    while True:
        end = min(start + cfg.max_chars, n)
        chunks.append(
            DocumentChunk(
                chunk_id=f"{doc_id}:{index:05d}",
                doc_id=doc_id,
                start_char=start,
                end_char=end,
                text=text[start:end],
            )
        )
        if end == n:
            return chunks
        start += cfg.stride
        index += 1


def chunk_document(doc: SourceDocument, cfg: ChunkConfig = ChunkConfig()) -> list[DocumentChunk]:
    """Cleanse a document and chunk the result.

    Rejects documents that are empty after cleansing.
    """
    cleansed = cleanse_text(doc.text)
    if not cleansed:
        raise EmptyDocumentError(f"document {doc.doc_id!r} is empty after cleansing")
    return chunk_text(cleansed, cfg, doc_id=doc.doc_id)


def load_corpus(path: str | Path) -> list[SourceDocument]:
    """Read a corpus file of {doc_id, company_label, text} documents.

    Accepts either a JSON array or JSON lines (one document per line).
    """
    raw = Path(path).read_text(encoding="utf-8")
    if raw.lstrip().startswith("["):
        entries = json.loads(raw)
    else:
        entries = [json.loads(line) for line in raw.splitlines() if line.strip()]
    if not isinstance(entries, list) or not all(isinstance(e, dict) for e in entries):
        raise ValueError(f"corpus file {path} must hold document objects")
    docs = []
    seen: set[str] = set()
    for entry in entries:
        doc = SourceDocument(
            doc_id=entry["doc_id"],
            company_label=entry.get("company_label", ""),
            text=entry["text"],
        )
        if doc.doc_id in seen:
            raise ValueError(f"duplicate doc_id in corpus: {doc.doc_id!r}")
        seen.add(doc.doc_id)
        docs.append(doc)
    return docs


def chunks_to_json(chunks: list[DocumentChunk]) -> list[dict]:
    return [
        {
            "chunk_id": c.chunk_id,
            "doc_id": c.doc_id,
            "start_char": c.start_char,
            "end_char": c.end_char,
            "text": c.text,
        }
        for c in chunks
    ]


def chunks_from_json(entries: list[dict]) -> list[DocumentChunk]:
    return [
        DocumentChunk(
            chunk_id=e["chunk_id"],
            doc_id=e["doc_id"],
            start_char=e["start_char"],
            end_char=e["end_char"],
            text=e["text"],
        )
        for e in entries
    ]
