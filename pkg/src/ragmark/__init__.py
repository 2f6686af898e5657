"""Retrieval-augmented structured extraction with a deterministic benchmark.

The package covers the full loop: ingest and chunk long documents, embed
and retrieve context, call pinned chat models through a content-addressed
completion cache, validate structured outputs, and score extractions
against ground truth with exact pass/fail criteria. Supporting evaluation
utilities (regression metrics, stratified sampling, the corrected paired
t-test, and a regex codebook engine) live alongside.
"""

from .aspects import (
    ASPECTS,
    AspectSpec,
    DiscountCurveResult,
    DiscountRatePoint,
    ExtractionResult,
    FinancialStrengthRating,
    FinancialStrengthRatingsResult,
    Provenance,
    SolvencyResult,
    validate_payload,
)
from .codebook import Codebook, CodebookRule, gold_accuracy, map_value
from .embed import (
    DocumentIndex,
    EmbeddingVector,
    HashingEmbeddingBackend,
    RetrievalConfig,
    RetrievalHit,
    VectorStore,
    build_document_index,
    cosine_similarity,
    embed_texts,
    retrieve,
)
from .errors import (
    ConfigurationError,
    DegenerateVarianceError,
    DimensionMismatchError,
    EmptyDocumentError,
    GenerationInvalidError,
    NoContextError,
    PayloadParseError,
    PayloadValidationError,
    RagmarkError,
    TransportError,
)
from .evalbench import (
    BenchmarkReport,
    GroundTruthRecord,
    GroundTruthSet,
    ScoreOutcome,
    classify_failure,
    load_ground_truth,
    normalize_rater,
    normalize_rating,
    run_benchmark,
    score_discount_curve,
    score_payload,
    score_ratings,
    score_solvency,
)
from .ingest import (
    ChunkConfig,
    DocumentChunk,
    SourceDocument,
    chunk_document,
    chunk_text,
    cleanse_text,
)
from .llm import (
    CompletionCache,
    CompletionClient,
    CompletionRequest,
    MockChatBackend,
    ModelSpec,
    cache_key,
    complete,
)
from .pipeline import AugmentedQuery, augment_prompt, extract
from .stats import (
    CorrectedTTestResult,
    FoldScores,
    corrected_paired_ttest,
    mae,
    pinball_loss,
    r2,
    rmse,
    stratified_kfold,
    stratified_split,
)

__version__ = "0.1.0"

__all__ = [
    "ASPECTS",
    "AspectSpec",
    "AugmentedQuery",
    "BenchmarkReport",
    "ChunkConfig",
    "Codebook",
    "CodebookRule",
    "CompletionCache",
    "CompletionClient",
    "CompletionRequest",
    "ConfigurationError",
    "CorrectedTTestResult",
    "DegenerateVarianceError",
    "DimensionMismatchError",
    "DiscountCurveResult",
    "DiscountRatePoint",
    "DocumentChunk",
    "DocumentIndex",
    "EmbeddingVector",
    "EmptyDocumentError",
    "ExtractionResult",
    "FinancialStrengthRating",
    "FinancialStrengthRatingsResult",
    "FoldScores",
    "GenerationInvalidError",
    "GroundTruthRecord",
    "GroundTruthSet",
    "HashingEmbeddingBackend",
    "MockChatBackend",
    "ModelSpec",
    "NoContextError",
    "PayloadParseError",
    "PayloadValidationError",
    "Provenance",
    "RagmarkError",
    "RetrievalConfig",
    "RetrievalHit",
    "ScoreOutcome",
    "SolvencyResult",
    "SourceDocument",
    "TransportError",
    "VectorStore",
    "augment_prompt",
    "build_document_index",
    "cache_key",
    "chunk_document",
    "chunk_text",
    "classify_failure",
    "cleanse_text",
    "complete",
    "corrected_paired_ttest",
    "cosine_similarity",
    "embed_texts",
    "extract",
    "gold_accuracy",
    "load_ground_truth",
    "mae",
    "map_value",
    "normalize_rater",
    "normalize_rating",
    "pinball_loss",
    "r2",
    "retrieve",
    "rmse",
    "run_benchmark",
    "score_discount_curve",
    "score_payload",
    "score_ratings",
    "score_solvency",
    "stratified_kfold",
    "stratified_split",
    "validate_payload",
]
