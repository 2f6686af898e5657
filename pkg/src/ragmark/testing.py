"""Offline test doubles: a ground-truth-aware mock model and synthetic corpora.

Everything here is deterministic and network-free, so the full pipeline,
benchmark, and CLI can be exercised end to end without credentials.
"""

from __future__ import annotations

import json
from typing import Callable

from .aspects import (
    ASPECTS,
    DiscountCurveResult,
    FinancialStrengthRatingsResult,
    Payload,
    SolvencyResult,
)
from .evalbench import GroundTruthSet
from .ingest import SourceDocument
from .llm import ChatBackend, CompletionRequest

# schema_id -> aspect_id (each aspect binds a distinct schema)
_SCHEMA_TO_ASPECT = {spec.schema_id: aspect_id for aspect_id, spec in ASPECTS.items()}

CorruptRule = Callable[[str, str, int], bool]  # (company, aspect_id, run_index) -> bool


def corrupt_payload(payload: Payload) -> Payload:
    """Deterministically perturb one scored field of a gold payload."""
    if isinstance(payload, SolvencyResult):
        return payload.model_copy(update={"capital_ratio": payload.capital_ratio + 1})
    if isinstance(payload, DiscountCurveResult):
        first = payload.rates[0].model_copy(
            update={"discount_rate_percent": payload.rates[0].discount_rate_percent + 0.01}
        )
        return payload.model_copy(update={"rates": [first] + list(payload.rates[1:])})
    if isinstance(payload, FinancialStrengthRatingsResult):
        return payload.model_copy(update={"ratings": list(payload.ratings[1:])})
    raise TypeError(f"cannot corrupt payload of type {type(payload).__name__}")


class GoldChatBackend(ChatBackend):
    """Mock provider that answers straight from a ground-truth set.

    The company is recognised from its label inside the augmented query's
    context blocks; the aspect comes from the request's schema id. Version
    ids select a behaviour: ``gold`` answers perfectly,
    ``gold-except-<aspect_id>`` corrupts that aspect on every run, and
    ``invalid-json`` returns unparseable text. A ``corrupt_when`` rule gives
    tests per-(company, aspect, run) control on top of that.
    """

    provider = "mock"

    def __init__(self, truth: GroundTruthSet, corrupt_when: CorruptRule | None = None):
        self._truth = truth
        self._corrupt_when = corrupt_when
        # Longest label first so "AXA Group" never shadows a longer name.
        self._companies = sorted(truth.companies, key=len, reverse=True)
        self.invocations: list[CompletionRequest] = []

    def _detect_company(self, content: str) -> str | None:
        haystack = content.casefold()
        for company in self._companies:
            if company.casefold() in haystack:
                return company
        return None

    def generate(self, req: CompletionRequest) -> str:
        self.invocations.append(req)
        version = req.model.version_id
        if version == "invalid-json":
            return "I could not produce structured output."
        aspect_id = _SCHEMA_TO_ASPECT.get(req.schema_id)
        company = self._detect_company(req.user_content)
        if aspect_id is None or company is None:
            return "{}"
        payload = self._truth.get(company, aspect_id).expected
        corrupt = version == f"gold-except-{aspect_id}"
        if self._corrupt_when is not None and self._corrupt_when(company, aspect_id, req.run_index):
            corrupt = True
        if corrupt:
            payload = corrupt_payload(payload)
        return payload.model_dump_json()


def _solvency_section(company: str, payload: SolvencyResult) -> str:
    ratio = payload.capital_ratio
    framework = payload.regulatory_framework
    return (
        f"Capital management and solvency position of the {company} group. "
        f"The group's solvency capital ratio in percentage for 2025 is "
        f"{ratio}% under the regulatory framework {framework}. The solvency "
        "capital ratio expresses the group's eligible own funds as a "
        "percentage of its regulatory capital requirement under the "
        "applicable regulatory framework (Solvency II or SST). "
        f"{company} monitors the group solvency capital ratio throughout "
        "2025 and discloses the ratio in percentage terms together with the "
        f"regulatory framework. At 31 December 2025 the {framework} "
        f"solvency capital ratio of the {company} group stood at {ratio}%, "
        "comfortably within the group's target capital range. The solvency "
        "capital ratio remains the primary regulatory capital metric of "
        f"the group, and {company} reports the 2025 group solvency capital "
        f"ratio of {ratio}% under the regulatory framework {framework} in "
        "its annual solvency and financial condition reporting."
    )


def _discount_section(company: str, payload: DiscountCurveResult) -> str:
    points = "; ".join(
        f"duration {point.duration_year} years: {point.discount_rate_percent:.2f}%"
        for point in payload.rates
    )
    return (
        f"Discount rates for insurance contract liabilities of {company}. "
        "The discount rates for financial or insurance contract liabilities "
        f"in 2025, using only currency {payload.currency}, are disclosed by "
        "duration. For each duration in years, the corresponding discount "
        "rate in percentage reflects the rates as of December 31, 2025, for "
        f"liquid products and non-VFA contracts. The {payload.currency} "
        f"discount rate curve of the {company} group by duration: {points}. "
        "The discount rates in percentage above apply to insurance contract "
        f"liabilities of {company} for each duration year shown, valued as "
        "of December 31, 2025."
    )


def _ratings_section(company: str, payload: FinancialStrengthRatingsResult) -> str:
    entries = "; ".join(
        f"rater {entry.rater}, rating {entry.rating}, outlook {entry.outlook}"
        for entry in payload.ratings
    )
    return (
        f"Insurer financial strength ratings (IFSR) of the {company} group. "
        "The insurer financial strength ratings assigned to the group by "
        "the rating agencies are listed as entries with rater (such as AM "
        "Best, Fitch, Moody's, and S&P), rating, and outlook (stable, "
        f"positive, or negative). Ratings of {company}: {entries}. Each "
        "insurer financial strength rating entry above states the rater, "
        "the rating, and the outlook; the outlook on every insurer "
        f"financial strength rating of {company} is stable, positive, or "
        "negative as assigned by the respective rater."
    )


def _filler_section(company: str, topic: str) -> str:
    return (
        f"{topic} of the {company} group. Management reviews business "
        "performance, strategy execution, and operating developments across "
        f"all segments. {company} continues to invest in its customers, "
        "its people, and the resilience of its operations, and the board "
        "oversees these activities through its established governance "
        "processes and committees during the reporting period."
    )


def synthetic_document(company: str, truth: GroundTruthSet) -> SourceDocument:
    """A small annual-report-like document embedding the gold values.

    Each aspect gets its own vocabulary-dense section, separated by neutral
    filler, so the default chunking leaves at least one chunk per aspect
    that clears the similarity threshold under the hashing backend.
    """
    sections = [
        f"{company} Group Annual Report 2025.",
        _filler_section(company, "Business overview"),
        _solvency_section(company, truth.get(company, "solvency").expected),
        _filler_section(company, "Strategy and outlook for the segments"),
        _discount_section(company, truth.get(company, "discount_rates").expected),
        _filler_section(company, "Risk management and governance"),
        _ratings_section(company, truth.get(company, "ratings").expected),
    ]
    return SourceDocument(
        doc_id=f"{company.lower()}-ar-2025",
        company_label=company,
        text="\n\n".join(sections),
    )


def synthetic_corpus(truth: GroundTruthSet) -> list[SourceDocument]:
    """One synthetic document per company in the ground-truth set."""
    return [synthetic_document(company, truth) for company in truth.companies]


def write_synthetic_corpus(path, truth: GroundTruthSet) -> None:
    docs = synthetic_corpus(truth)
    rows = [
        {"doc_id": d.doc_id, "company_label": d.company_label, "text": d.text} for d in docs
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, ensure_ascii=False, indent=2)
