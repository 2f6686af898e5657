"""The three extraction aspects: prompts, output schemas, validated payloads.

Schemas mirror the structured-output contracts exactly: a solvency ratio
with its regulatory framework, a EUR discount curve by duration, and a list
of insurer financial strength ratings. Validation is strict on field names,
types, and enum membership; free-form rater/rating strings stay permissive
here and are canonicalised by the scorer, not the validator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .embed import RetrievalConfig
from .errors import PayloadParseError, PayloadValidationError


class SolvencyResult(BaseModel):
    """Group solvency capital ratio and its regulatory framework."""

    model_config = ConfigDict(extra="forbid")

    capital_ratio: int = Field(gt=0)  # solvency ratio in %
    regulatory_framework: Literal["Solvency II", "SST"]


class DiscountRatePoint(BaseModel):
    """Discount rate for a single duration."""

    model_config = ConfigDict(extra="forbid")

    duration_year: int = Field(ge=1)  # duration in years
    discount_rate_percent: float  # rate in percentage (e.g., 2.47)


class DiscountCurveResult(BaseModel):
    """EUR discount rates across durations, sorted and duplicate-free."""

    model_config = ConfigDict(extra="forbid")

    currency: Literal["EUR"]
    rates: list[DiscountRatePoint]

    @field_validator("rates")
    @classmethod
    def _sorted_unique_durations(cls, rates: list[DiscountRatePoint]) -> list[DiscountRatePoint]:
        ordered = sorted(rates, key=lambda p: p.duration_year)
        for earlier, later in zip(ordered, ordered[1:]):
            if earlier.duration_year == later.duration_year:
                raise ValueError(f"duplicate duration_year {later.duration_year}")
        return ordered


class FinancialStrengthRating(BaseModel):
    """One rating entry: agency, rating string, optional outlook."""

    model_config = ConfigDict(extra="forbid")

    rater: str = Field(min_length=1)  # e.g., "S&P Global Ratings", "Moody's"
    rating: str = Field(min_length=1)  # e.g., "AA-", "Aa3", "A+ Superior"
    outlook: Optional[str] = None  # e.g., "Stable", "Positive"


class FinancialStrengthRatingsResult(BaseModel):
    """All insurer financial strength ratings found for one company."""

    model_config = ConfigDict(extra="forbid")

    ratings: list[FinancialStrengthRating]


Payload = Union[SolvencyResult, DiscountCurveResult, FinancialStrengthRatingsResult]

SCHEMAS: dict[str, type[BaseModel]] = {
    "solvency_result_v1": SolvencyResult,
    "discount_curve_result_v1": DiscountCurveResult,
    "ratings_result_v1": FinancialStrengthRatingsResult,
}


@dataclass(frozen=True)
class AspectSpec:
    """One extraction task: its prompt, schema binding, retrieval settings."""

    aspect_id: str
    prompt: str
    schema_id: str
    retrieval: RetrievalConfig = RetrievalConfig()

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.schema_id not in SCHEMAS:
            raise ValueError(f"unknown schema_id {self.schema_id!r}")


_SOLVENCY_PROMPT = (
    "Extract the group's solvency capital ratio in percentage for 2025, "
    "together with the regulatory framework (Solvency II or SST)."
)

_DISCOUNT_RATES_PROMPT = (
    "Extract the discount rates for financial or insurance contract "
    "liabilities in 2025, using only currency EUR. For each duration "
    "(e.g., 1 year, 5 years, 10 years, 20 years, 40 years, etc.), extract "
    "the corresponding discount rate in percentage. Ensure that the data "
    "reflects the rates as of December 31, 2025. If no specific approach "
    "is mentioned, assume non-VFA, unit-linked contracts, or liquid products."
)

_RATINGS_PROMPT = (
    "Extract insurer financial strength ratings (IFSR) as a list of entries "
    "with rater (e.g., AM Best, Fitch, Moody's, and S&P), rating, and "
    "outlook (stable, positive, or negative)."
)

ASPECTS: dict[str, AspectSpec] = {
    "solvency": AspectSpec(
        aspect_id="solvency",
        prompt=_SOLVENCY_PROMPT,
        schema_id="solvency_result_v1",
    ),
    "discount_rates": AspectSpec(
        aspect_id="discount_rates",
        prompt=_DISCOUNT_RATES_PROMPT,
        schema_id="discount_curve_result_v1",
    ),
    "ratings": AspectSpec(
        aspect_id="ratings",
        prompt=_RATINGS_PROMPT,
        schema_id="ratings_result_v1",
    ),
}

# Which payload type each aspect produces.
ASPECT_PAYLOAD_TYPES: dict[str, type[BaseModel]] = {
    aspect_id: SCHEMAS[spec.schema_id] for aspect_id, spec in ASPECTS.items()
}


def get_aspect(aspect_id: str) -> AspectSpec:
    try:
        return ASPECTS[aspect_id]
    except KeyError:
        raise KeyError(
            f"unknown aspect {aspect_id!r}; expected one of {sorted(ASPECTS)}"
        ) from None


def validate_payload(raw_completion: str, schema_id: str) -> Payload:
    """Parse and validate a raw completion against a registered schema.

    Raises :class:`PayloadParseError` for malformed JSON and
    :class:`PayloadValidationError` (naming the offending fields) for
    schema violations. Never mutates the raw text.
    """
    if schema_id not in SCHEMAS:
        raise KeyError(f"unknown schema_id {schema_id!r}")
    model = SCHEMAS[schema_id]
    try:
        data = json.loads(raw_completion)
    except json.JSONDecodeError as err:
        raise PayloadParseError(f"malformed JSON: {err}", raw=raw_completion) from err
    try:
        return model.model_validate(data)
    except ValidationError as err:
        issues = [
            (".".join(str(part) for part in issue["loc"]) or "<root>", issue["msg"])
            for issue in err.errors()
        ]
        fields = tuple(field for field, _ in issues)
        detail = "; ".join(f"{field}: {message}" for field, message in issues)
        raise PayloadValidationError(
            f"schema {schema_id} violated: {detail}",
            raw=raw_completion,
            fields=fields,
        ) from err


def payload_to_json(payload: Payload) -> str:
    """Canonical JSON serialisation of a validated payload."""
    return payload.model_dump_json()


@dataclass(frozen=True)
class Provenance:
    """Where an extraction came from: model, context, cache state, run."""

    model_version: str
    retrieved: tuple[tuple[str, float], ...]  # (chunk_id, score), score-descending
    cache_hit: bool
    run_index: int
    template_id: str

    @property
    def chunk_ids(self) -> tuple[str, ...]:
        return tuple(chunk_id for chunk_id, _ in self.retrieved)


@dataclass(frozen=True)
class ExtractionResult:
    """A validated payload for one aspect, with full provenance."""

    aspect_id: str
    payload: Payload
    provenance: Provenance

    def __post_init__(self) -> None:
        expected = ASPECT_PAYLOAD_TYPES.get(self.aspect_id)
        if expected is None:
            raise ValueError(f"unknown aspect {self.aspect_id!r}")
        if not isinstance(self.payload, expected):
            raise ValueError(
                f"payload type {type(self.payload).__name__} does not match "
                f"aspect {self.aspect_id!r}"
            )

    def to_json_dict(self) -> dict:
        return {
            "aspect_id": self.aspect_id,
            "payload": self.payload.model_dump(),
            "provenance": {
                "model_version": self.provenance.model_version,
                "retrieved": [
                    {"chunk_id": cid, "score": score}
                    for cid, score in self.provenance.retrieved
                ],
                "cache_hit": self.provenance.cache_hit,
                "run_index": self.provenance.run_index,
                "template_id": self.provenance.template_id,
            },
        }


def export_json_schemas() -> dict[str, dict]:
    """JSON-schema documents for every registered schema, for inspection."""
    return {schema_id: model.model_json_schema() for schema_id, model in SCHEMAS.items()}
