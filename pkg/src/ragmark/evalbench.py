"""Ground truth, exact pass/fail scoring, failure classification, benchmarks.

Scoring is binary with no partial credit. Ratings are compared as
normalised sets with alias-aware rater matching, discount curves must cover
every ground-truth duration at two-decimal precision, and solvency requires
both the integer ratio and the framework label to match. Failed cells are
classified as retrieval vs generation failures by a mechanical proxy:
whether the ground-truth values appear verbatim in the retrieved context.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .aspects import (
    ASPECT_PAYLOAD_TYPES,
    ASPECTS,
    AspectSpec,
    DiscountCurveResult,
    ExtractionResult,
    FinancialStrengthRating,
    Payload,
    SolvencyResult,
    validate_payload,
)
from .embed import DocumentIndex
from .errors import ConfigurationError, GenerationInvalidError, NoContextError
from .llm import CompletionClient, ModelSpec
from .pipeline import extract

FAILURE_CLASSIFICATION_METHOD = "gt-substring-evidence-v1"

_CANONICAL_RATERS = ("S&P", "Moody's", "Fitch", "AM Best")

# Keys are casefolded with dots replaced by spaces and whitespace collapsed.
_RATER_ALIASES: dict[str, str] = {
    "s&p": "S&P",
    "s&p global": "S&P",
    "s&p global ratings": "S&P",
    "standard & poor's": "S&P",
    "standard and poor's": "S&P",
    "standard & poors": "S&P",
    "standard poor's": "S&P",
    "moody's": "Moody's",
    "moodys": "Moody's",
    "moody's investors service": "Moody's",
    "moody's ratings": "Moody's",
    "fitch": "Fitch",
    "fitch ratings": "Fitch",
    "am best": "AM Best",
    "a m best": "AM Best",
    "am best company": "AM Best",
}

_WHITESPACE_RE = re.compile(r"\s+")
_PARENTHETICAL_RE = re.compile(r"\([^)]*\)")


def _title_case(text: str) -> str:
    return " ".join(word.capitalize() for word in text.split())


def normalize_rater(name: str) -> str:
    """Map rating-agency name variants onto canonical agency names.

    Unknown agencies come back trimmed and title-cased rather than erroring,
    so scoring stays total.
    """
    key = _WHITESPACE_RE.sub(" ", name.casefold().replace(".", " ")).strip()
    canonical = _RATER_ALIASES.get(key)
    if canonical is not None:
        return canonical
    return _title_case(name)


def normalize_rating(rating: str) -> str:
    """Uppercase, drop parenthetical variants, collapse whitespace."""
    text = _PARENTHETICAL_RE.sub(" ", rating).upper()
    text = _WHITESPACE_RE.sub(" ", text).strip()
    if not text:
        raise ValueError(f"rating {rating!r} is empty after normalization")
    return text


def normalize_outlook(outlook: str | None) -> str | None:
    """Title-case an outlook; empty or missing outlooks become None."""
    if outlook is None:
        return None
    text = _WHITESPACE_RE.sub(" ", outlook).strip()
    return _title_case(text) if text else None


@dataclass(frozen=True)
class ScoreOutcome:
    """Binary pass/fail with a structured diff and failure-stage label."""

    passed: bool
    failure_detail: dict | None = None
    failure_stage: str | None = None  # "retrieval" or "generation"
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.passed and (self.failure_detail is not None or self.failure_stage is not None):
            raise ValueError("a passing outcome cannot carry failure information")
        if self.failure_stage not in (None, "retrieval", "generation"):
            raise ValueError(f"invalid failure_stage {self.failure_stage!r}")


@dataclass(frozen=True)
class GroundTruthRecord:
    company: str
    aspect_id: str
    expected: Payload

    def __post_init__(self) -> None:
        expected_type = ASPECT_PAYLOAD_TYPES.get(self.aspect_id)
        if expected_type is None:
            raise ValueError(f"unknown aspect {self.aspect_id!r}")
        if not isinstance(self.expected, expected_type):
            raise ValueError(
                f"ground truth for ({self.company}, {self.aspect_id}) has wrong payload type"
            )


class GroundTruthSet:
    """One validated reference payload per (company, aspect) pair."""

    def __init__(self, records: Iterable[GroundTruthRecord]):
        self._records: dict[tuple[str, str], GroundTruthRecord] = {}
        for record in records:
            key = (record.company, record.aspect_id)
            if key in self._records:
                raise ValueError(f"duplicate ground-truth record for {key}")
            self._records[key] = record

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._records

    def get(self, company: str, aspect_id: str) -> GroundTruthRecord:
        try:
            return self._records[(company, aspect_id)]
        except KeyError:
            raise KeyError(f"no ground truth for ({company!r}, {aspect_id!r})") from None

    def records(self) -> list[GroundTruthRecord]:
        return [self._records[key] for key in sorted(self._records)]

    @property
    def companies(self) -> list[str]:
        return sorted({company for company, _ in self._records})

    @property
    def aspect_ids(self) -> list[str]:
        return sorted({aspect_id for _, aspect_id in self._records})


def ground_truth_from_json(data: dict) -> GroundTruthSet:
    """Build a ground-truth set from its JSON file form, validating payloads."""
    records = []
    for row in data["records"]:
        aspect_id = row["aspect_id"]
        spec = ASPECTS.get(aspect_id)
        if spec is None:
            raise ValueError(f"ground truth references unknown aspect {aspect_id!r}")
        payload = validate_payload(json.dumps(row["expected"]), spec.schema_id)
        records.append(
            GroundTruthRecord(company=row["company"], aspect_id=aspect_id, expected=payload)
        )
    return GroundTruthSet(records)


def load_ground_truth(path: str | Path | None = None) -> GroundTruthSet:
    """Load ground truth from a JSON file, or the packaged reference values."""
    if path is None:
        text = resources.files("ragmark.data").joinpath("ground_truth.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return ground_truth_from_json(json.loads(text))


def score_solvency(pred: SolvencyResult, gt: SolvencyResult) -> ScoreOutcome:
    """Pass iff the integer ratio and the framework label both match."""
    mismatched = []
    if pred.capital_ratio != gt.capital_ratio:
        mismatched.append(
            {"field": "capital_ratio", "expected": gt.capital_ratio, "predicted": pred.capital_ratio}
        )
    if pred.regulatory_framework != gt.regulatory_framework:
        mismatched.append(
            {
                "field": "regulatory_framework",
                "expected": gt.regulatory_framework,
                "predicted": pred.regulatory_framework,
            }
        )
    if mismatched:
        return ScoreOutcome(passed=False, failure_detail={"mismatched_fields": mismatched})
    return ScoreOutcome(passed=True)


def _cents(rate: float) -> int:
    return int(round(rate * 100))


def score_discount_curve(pred: DiscountCurveResult, gt: DiscountCurveResult) -> ScoreOutcome:
    """Every ground-truth duration must be present with the rate equal at
    two decimals. Extra predicted durations are warnings, not failures."""
    predicted = {point.duration_year: point.discount_rate_percent for point in pred.rates}
    missing = []
    mismatched = []
    for point in gt.rates:
        if point.duration_year not in predicted:
            missing.append(point.duration_year)
        elif _cents(predicted[point.duration_year]) != _cents(point.discount_rate_percent):
            mismatched.append(
                {
                    "duration_year": point.duration_year,
                    "expected": point.discount_rate_percent,
                    "predicted": predicted[point.duration_year],
                }
            )
    gt_durations = {point.duration_year for point in gt.rates}
    warnings = tuple(
        f"extra duration {duration}" for duration in sorted(set(predicted) - gt_durations)
    )
    if missing or mismatched:
        return ScoreOutcome(
            passed=False,
            failure_detail={"missing_durations": missing, "mismatched_rates": mismatched},
            warnings=warnings,
        )
    return ScoreOutcome(passed=True, warnings=warnings)


def _normalized_rating_entry(entry: FinancialStrengthRating) -> tuple[str, str, str | None]:
    return (
        normalize_rater(entry.rater),
        normalize_rating(entry.rating),
        normalize_outlook(entry.outlook),
    )


def _entry_dict(entry: tuple[str, str, str | None]) -> dict:
    return {"rater": entry[0], "rating": entry[1], "outlook": entry[2]}


def score_ratings(
    pred: Sequence[FinancialStrengthRating], gt: Sequence[FinancialStrengthRating]
) -> ScoreOutcome:
    """Normalised set comparison: every ground-truth entry must be matched
    and no extra predicted entries may remain."""
    pred_entries = Counter(_normalized_rating_entry(entry) for entry in pred)
    gt_entries = Counter(_normalized_rating_entry(entry) for entry in gt)
    missing = sorted((gt_entries - pred_entries).elements(), key=str)
    extra = sorted((pred_entries - gt_entries).elements(), key=str)
    if missing or extra:
        return ScoreOutcome(
            passed=False,
            failure_detail={
                "missing_entries": [_entry_dict(entry) for entry in missing],
                "extra_entries": [_entry_dict(entry) for entry in extra],
            },
        )
    return ScoreOutcome(passed=True)


def score_payload(aspect_id: str, pred: Payload, gt: Payload) -> ScoreOutcome:
    """Dispatch to the aspect's scorer."""
    if type(pred) is not type(gt):
        raise ValueError("prediction and ground truth have different payload types")
    if aspect_id == "solvency":
        return score_solvency(pred, gt)
    if aspect_id == "discount_rates":
        return score_discount_curve(pred, gt)
    if aspect_id == "ratings":
        return score_ratings(pred.ratings, gt.ratings)
    raise ValueError(f"no scorer bound for aspect {aspect_id!r}")


def _number_variants(value: int) -> list[str]:
    plain = str(value)
    grouped = f"{value:,}"
    variants = {plain, grouped, f"{plain}%", f"{grouped}%"}
    return sorted(variants)


def _rate_variants(rate: float) -> list[str]:
    fixed = f"{rate:.2f}"
    compact = f"{rate:g}"
    return sorted({fixed, f"{fixed}%", compact, f"{compact}%"})


def evidence_variants(gt: GroundTruthRecord) -> list[str]:
    """Ground-truth value strings to look for in retrieved context
    (casefolded; numbers with and without thousands separators and %)."""
    variants: list[str] = []
    expected = gt.expected
    if isinstance(expected, SolvencyResult):
        variants.extend(_number_variants(expected.capital_ratio))
    elif isinstance(expected, DiscountCurveResult):
        for point in expected.rates:
            variants.extend(_rate_variants(point.discount_rate_percent))
    else:
        for entry in expected.ratings:
            variants.append(normalize_rating(entry.rating))
    return sorted({v.casefold() for v in variants})


def classify_failure(
    outcome: ScoreOutcome, chunk_texts: Sequence[str], gt: GroundTruthRecord
) -> str:
    """Label a failing cell ``retrieval`` or ``generation``.

    Retrieval failure: none of the ground-truth values appear as substrings
    in any retrieved chunk (the evidence was never in front of the model).
    Otherwise the failure happened at generation. Zero retrieved chunks is
    a retrieval failure by definition.
    """
    if outcome.passed:
        raise ValueError("cannot classify a passing outcome")
    if not chunk_texts:
        return "retrieval"
    haystacks = [text.casefold() for text in chunk_texts]
    for variant in evidence_variants(gt):
        if any(variant in haystack for haystack in haystacks):
            return "generation"
    return "retrieval"


@dataclass(frozen=True)
class BenchmarkCell:
    model_alias: str
    aspect_id: str
    company: str
    run_index: int
    outcome: ScoreOutcome
    cache_hit: bool

    def sort_key(self) -> tuple:
        return (self.model_alias, self.aspect_id, self.company, self.run_index)


@dataclass(frozen=True)
class BenchmarkReport:
    """All cells plus pass rates aggregated per (model, aspect)."""

    cells: tuple[BenchmarkCell, ...]
    pass_rates: dict[str, dict[str, float]]
    failure_stage_totals: dict[str, int]
    cache_hits: int
    n_runs: int
    companies: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {
            "failure_classification_method": FAILURE_CLASSIFICATION_METHOD,
            "n_runs": self.n_runs,
            "companies": list(self.companies),
            "cache_hits": self.cache_hits,
            "failure_stage_totals": self.failure_stage_totals,
            "pass_rates": self.pass_rates,
            "cells": [
                {
                    "model": cell.model_alias,
                    "aspect_id": cell.aspect_id,
                    "company": cell.company,
                    "run_index": cell.run_index,
                    "pass": cell.outcome.passed,
                    "failure_detail": cell.outcome.failure_detail,
                    "failure_stage": cell.outcome.failure_stage,
                    "warnings": list(cell.outcome.warnings),
                    "cache_hit": cell.cache_hit,
                }
                for cell in self.cells
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @property
    def any_failures(self) -> bool:
        return any(not cell.outcome.passed for cell in self.cells)


def _score_cell(
    result_payload: Payload,
    record: GroundTruthRecord,
    chunk_texts: Sequence[str],
) -> ScoreOutcome:
    outcome = score_payload(record.aspect_id, result_payload, record.expected)
    if not outcome.passed:
        outcome = replace(outcome, failure_stage=classify_failure(outcome, chunk_texts, record))
    return outcome


def run_benchmark(
    indexes: Mapping[str, DocumentIndex],
    truth: GroundTruthSet,
    models: Mapping[str, ModelSpec],
    aspects: Sequence[AspectSpec],
    companies: Sequence[str],
    n_runs: int,
    client: CompletionClient,
    parallelism: int = 1,
) -> BenchmarkReport:
    """Execute every (model, aspect, company, run) cell, score, and aggregate.

    Missing ground truth or missing document indexes are configuration
    errors raised before any extraction. The serialized report is a pure
    function of the cell contents: cells are sorted, so execution order
    (including concurrent execution) never changes the output bytes.
    """
    if n_runs < 1:
        raise ConfigurationError("n_runs must be at least 1")
    problems = []
    for company in companies:
        if company not in indexes:
            problems.append(f"no document index for company {company!r}")
        for aspect in aspects:
            if (company, aspect.aspect_id) not in truth:
                problems.append(f"missing ground truth for ({company!r}, {aspect.aspect_id!r})")
    if problems:
        raise ConfigurationError(problems)

    tasks = [
        (alias, models[alias], aspect, company, run)
        for alias in sorted(models)
        for aspect in aspects
        for company in companies
        for run in range(n_runs)
    ]

    def run_cell(task) -> BenchmarkCell:
        alias, model, aspect, company, run = task
        index = indexes[company]
        record = truth.get(company, aspect.aspect_id)
        try:
            result: ExtractionResult = extract(index, aspect, model, client, run_index=run)
        except NoContextError:
            return BenchmarkCell(
                model_alias=alias,
                aspect_id=aspect.aspect_id,
                company=company,
                run_index=run,
                outcome=ScoreOutcome(
                    passed=False,
                    failure_detail={"error": "no_context"},
                    failure_stage="retrieval",
                ),
                cache_hit=False,
            )
        except GenerationInvalidError as err:
            return BenchmarkCell(
                model_alias=alias,
                aspect_id=aspect.aspect_id,
                company=company,
                run_index=run,
                outcome=ScoreOutcome(
                    passed=False,
                    failure_detail={"error": "generation_invalid", "raw": err.raw},
                    failure_stage="generation",
                ),
                cache_hit=err.cache_hit,
            )
        chunk_texts = [index.chunks[cid].text for cid in result.provenance.chunk_ids]
        outcome = _score_cell(result.payload, record, chunk_texts)
        return BenchmarkCell(
            model_alias=alias,
            aspect_id=aspect.aspect_id,
            company=company,
            run_index=run,
            outcome=outcome,
            cache_hit=result.provenance.cache_hit,
        )

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            cells = list(pool.map(run_cell, tasks))
    else:
        cells = [run_cell(task) for task in tasks]
    cells.sort(key=BenchmarkCell.sort_key)

    tallies: dict[tuple[str, str], list[int]] = {}
    stage_totals = {"retrieval": 0, "generation": 0}
    for cell in cells:
        passes_and_total = tallies.setdefault((cell.model_alias, cell.aspect_id), [0, 0])
        passes_and_total[0] += int(cell.outcome.passed)
        passes_and_total[1] += 1
        if cell.outcome.failure_stage is not None:
            stage_totals[cell.outcome.failure_stage] += 1
    pass_rates: dict[str, dict[str, float]] = {}
    for (alias, aspect_id), (passes, total) in sorted(tallies.items()):
        pass_rates.setdefault(alias, {})[aspect_id] = 100.0 * passes / total

    return BenchmarkReport(
        cells=tuple(cells),
        pass_rates=pass_rates,
        failure_stage_totals=stage_totals,
        cache_hits=sum(1 for cell in cells if cell.cache_hit),
        n_runs=n_runs,
        companies=tuple(companies),
    )


def score_predictions(
    predictions: Sequence[dict], truth: GroundTruthSet
) -> list[tuple[str, str, ScoreOutcome]]:
    """Score a flat predictions file: [{company, aspect_id, payload}, ...].

    No provenance is available here, so failures carry no stage label.
    """
    results = []
    for row in predictions:
        aspect_id = row["aspect_id"]
        spec = ASPECTS.get(aspect_id)
        if spec is None:
            raise ValueError(f"prediction references unknown aspect {aspect_id!r}")
        payload = validate_payload(json.dumps(row["payload"]), spec.schema_id)
        record = truth.get(row["company"], aspect_id)
        outcome = score_payload(aspect_id, payload, record.expected)
        results.append((row["company"], aspect_id, outcome))
    return results
