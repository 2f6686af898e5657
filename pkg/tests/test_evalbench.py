from __future__ import annotations

import json

import pytest

from ragmark.aspects import (
    ASPECTS,
    DiscountCurveResult,
    DiscountRatePoint,
    FinancialStrengthRating,
    SolvencyResult,
)
from ragmark.errors import ConfigurationError
from ragmark.evalbench import (
    GroundTruthRecord,
    GroundTruthSet,
    ScoreOutcome,
    classify_failure,
    evidence_variants,
    ground_truth_from_json,
    load_ground_truth,
    normalize_outlook,
    normalize_rater,
    normalize_rating,
    run_benchmark,
    score_discount_curve,
    score_payload,
    score_ratings,
    score_solvency,
    score_predictions,
)
from ragmark.llm import CompletionCache, CompletionClient, ModelSpec
from ragmark.testing import GoldChatBackend

ZURICH_CURVE = DiscountCurveResult(
    currency="EUR",
    rates=[
        DiscountRatePoint(duration_year=1, discount_rate_percent=2.08),
        DiscountRatePoint(duration_year=5, discount_rate_percent=2.48),
        DiscountRatePoint(duration_year=10, discount_rate_percent=2.86),
        DiscountRatePoint(duration_year=20, discount_rate_percent=3.21),
        DiscountRatePoint(duration_year=40, discount_rate_percent=3.27),
    ],
)

ZURICH_RATINGS = [
    FinancialStrengthRating(rater="S&P", rating="AA", outlook="Stable"),
    FinancialStrengthRating(rater="Moody's", rating="Aa2", outlook="Stable"),
    FinancialStrengthRating(rater="AM Best", rating="A+ Superior", outlook="Stable"),
]


class TestNormalization:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("S&P Global Ratings", "S&P"),
            ("Standard & Poor's", "S&P"),
            ("s&p", "S&P"),
            ("AM Best", "AM Best"),
            ("A.M. Best", "AM Best"),
            ("Moody's Investors Service", "Moody's"),
            ("moodys", "Moody's"),
            ("Fitch Ratings", "Fitch"),
        ],
    )
    def test_rater_aliases(self, raw, expected):
        assert normalize_rater(raw) == expected

    def test_unknown_rater_title_cased(self):
        assert normalize_rater("  some local AGENCY ") == "Some Local Agency"

    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("aa-", "AA-"),
            ("A+ (Superior)", "A+"),
            ("A+ Superior", "A+ SUPERIOR"),
            ("  aa3 ", "AA3"),
            ("A (Excellent) ", "A"),
        ],
    )
    def test_rating_normalization(self, raw, expected):
        assert normalize_rating(raw) == expected

    def test_rating_empty_after_normalization_is_error(self):
        with pytest.raises(ValueError, match="empty after normalization"):
            normalize_rating("(Superior)")

    def test_outlook_title_cased(self):
        assert normalize_outlook("stable") == "Stable"
        assert normalize_outlook("POSITIVE") == "Positive"
        assert normalize_outlook(None) is None
        assert normalize_outlook("  ") is None


class TestScoreSolvency:
    def test_axa_gold_passes(self, truth):
        gt = truth.get("AXA", "solvency").expected
        pred = SolvencyResult(capital_ratio=224, regulatory_framework="Solvency II")
        assert score_solvency(pred, gt).passed

    def test_zurich_gold_passes(self, truth):
        gt = truth.get("Zurich", "solvency").expected
        assert score_solvency(SolvencyResult(capital_ratio=259, regulatory_framework="SST"), gt).passed

    def test_framework_mismatch_named_in_diff(self, truth):
        gt = truth.get("AXA", "solvency").expected
        outcome = score_solvency(SolvencyResult(capital_ratio=224, regulatory_framework="SST"), gt)
        assert not outcome.passed
        fields = [m["field"] for m in outcome.failure_detail["mismatched_fields"]]
        assert fields == ["regulatory_framework"]

    def test_ratio_mismatch(self, truth):
        gt = truth.get("AXA", "solvency").expected
        outcome = score_solvency(SolvencyResult(capital_ratio=225, regulatory_framework="Solvency II"), gt)
        assert not outcome.passed
        assert outcome.failure_detail["mismatched_fields"][0]["field"] == "capital_ratio"


class TestScoreDiscountCurve:
    def test_exact_match_passes(self):
        assert score_discount_curve(ZURICH_CURVE.model_copy(deep=True), ZURICH_CURVE).passed

    def test_missing_duration_fails_with_diff(self):
        pred = DiscountCurveResult(
            currency="EUR", rates=[p for p in ZURICH_CURVE.rates if p.duration_year != 40]
        )
        outcome = score_discount_curve(pred, ZURICH_CURVE)
        assert not outcome.passed
        assert outcome.failure_detail["missing_durations"] == [40]

    def test_two_decimal_rounding(self):
        rates = [p.model_copy() for p in ZURICH_CURVE.rates]
        rates[0] = DiscountRatePoint(duration_year=1, discount_rate_percent=2.0800001)
        assert score_discount_curve(DiscountCurveResult(currency="EUR", rates=rates), ZURICH_CURVE).passed

    def test_third_decimal_difference_fails(self):
        rates = [p.model_copy() for p in ZURICH_CURVE.rates]
        rates[0] = DiscountRatePoint(duration_year=1, discount_rate_percent=2.09)
        outcome = score_discount_curve(DiscountCurveResult(currency="EUR", rates=rates), ZURICH_CURVE)
        assert not outcome.passed
        assert outcome.failure_detail["mismatched_rates"][0]["duration_year"] == 1

    def test_extra_durations_warn_but_pass(self):
        rates = list(ZURICH_CURVE.rates) + [
            DiscountRatePoint(duration_year=30, discount_rate_percent=3.30)
        ]
        outcome = score_discount_curve(DiscountCurveResult(currency="EUR", rates=rates), ZURICH_CURVE)
        assert outcome.passed
        assert outcome.warnings == ("extra duration 30",)


class TestScoreRatings:
    def test_gold_passes(self):
        assert score_ratings([r.model_copy() for r in ZURICH_RATINGS], ZURICH_RATINGS).passed

    def test_alias_spelling_passes(self):
        pred = [
            FinancialStrengthRating(rater="S&P Global Ratings", rating="AA", outlook="Stable"),
            FinancialStrengthRating(rater="Moody's", rating="Aa2", outlook="Stable"),
            FinancialStrengthRating(rater="AM Best", rating="A+ Superior", outlook="Stable"),
        ]
        assert score_ratings(pred, ZURICH_RATINGS).passed

    def test_extra_entry_fails(self):
        pred = [r.model_copy() for r in ZURICH_RATINGS] + [
            FinancialStrengthRating(rater="S&P", rating="A+", outlook="Stable")
        ]
        outcome = score_ratings(pred, ZURICH_RATINGS)
        assert not outcome.passed
        assert outcome.failure_detail["extra_entries"] == [
            {"rater": "S&P", "rating": "A+", "outlook": "Stable"}
        ]
        assert outcome.failure_detail["missing_entries"] == []

    def test_lowercase_outlook_passes(self):
        pred = [
            FinancialStrengthRating(rater="S&P", rating="AA", outlook="stable"),
            FinancialStrengthRating(rater="Moody's", rating="Aa2", outlook="stable"),
            FinancialStrengthRating(rater="AM Best", rating="A+ Superior", outlook="stable"),
        ]
        assert score_ratings(pred, ZURICH_RATINGS).passed

    def test_missing_entry_fails(self):
        outcome = score_ratings([ZURICH_RATINGS[0].model_copy()], ZURICH_RATINGS)
        assert not outcome.passed
        assert len(outcome.failure_detail["missing_entries"]) == 2

    def test_outlook_mismatch_fails(self):
        pred = [r.model_copy() for r in ZURICH_RATINGS]
        pred[0] = FinancialStrengthRating(rater="S&P", rating="AA", outlook="Negative")
        assert not score_ratings(pred, ZURICH_RATINGS).passed


class TestScoreOutcomeInvariants:
    def test_pass_cannot_carry_failure_info(self):
        with pytest.raises(ValueError):
            ScoreOutcome(passed=True, failure_detail={"x": 1})
        with pytest.raises(ValueError):
            ScoreOutcome(passed=True, failure_stage="retrieval")

    def test_stage_vocabulary_closed(self):
        with pytest.raises(ValueError):
            ScoreOutcome(passed=False, failure_stage="cosmic-rays")


class TestClassifyFailure:
    def failing(self) -> ScoreOutcome:
        return ScoreOutcome(passed=False, failure_detail={"mismatched_fields": []})

    def test_value_absent_everywhere_is_retrieval(self, truth):
        record = truth.get("AXA", "solvency")
        stage = classify_failure(self.failing(), ["no numbers here", "nothing relevant"], record)
        assert stage == "retrieval"

    def test_value_present_is_generation(self, truth):
        record = truth.get("AXA", "solvency")
        stage = classify_failure(self.failing(), ["the ratio was 224% this year"], record)
        assert stage == "generation"

    def test_zero_chunks_is_retrieval(self, truth):
        assert classify_failure(self.failing(), [], truth.get("AXA", "solvency")) == "retrieval"

    def test_passing_outcome_rejected(self, truth):
        with pytest.raises(ValueError):
            classify_failure(ScoreOutcome(passed=True), ["x"], truth.get("AXA", "solvency"))

    def test_solvency_variants_include_percent_and_grouping(self, truth):
        variants = evidence_variants(truth.get("AXA", "solvency"))
        assert "224" in variants and "224%" in variants

    def test_rating_evidence_matched_case_insensitively(self, truth):
        record = truth.get("Zurich", "ratings")
        stage = classify_failure(self.failing(), ["rated aa2 by the agency"], record)
        assert stage == "generation"


class TestGroundTruth:
    def test_packaged_truth_shape(self, truth):
        assert len(truth) == 9
        assert truth.companies == ["AXA", "Generali", "Zurich"]
        assert truth.aspect_ids == ["discount_rates", "ratings", "solvency"]

    def test_field_counts_match_reference(self, truth):
        solvency_fields = sum(
            1 for c in truth.companies for _ in [truth.get(c, "solvency")]
        )
        rate_points = sum(len(truth.get(c, "discount_rates").expected.rates) for c in truth.companies)
        rating_entries = sum(len(truth.get(c, "ratings").expected.ratings) for c in truth.companies)
        assert solvency_fields == 3
        assert rate_points == 33  # 10 AXA + 18 Generali + 5 Zurich
        assert rating_entries == 9

    def test_duplicate_records_rejected(self, truth):
        records = truth.records()
        with pytest.raises(ValueError, match="duplicate"):
            GroundTruthSet(records + [records[0]])

    def test_wrong_payload_type_rejected(self):
        with pytest.raises(ValueError, match="wrong payload type"):
            GroundTruthRecord(
                company="X",
                aspect_id="ratings",
                expected=SolvencyResult(capital_ratio=1, regulatory_framework="SST"),
            )

    def test_load_from_explicit_path(self, tmp_path, truth):
        path = tmp_path / "gt.json"
        rows = [
            {"company": r.company, "aspect_id": r.aspect_id, "expected": r.expected.model_dump()}
            for r in truth.records()
        ]
        path.write_text(json.dumps({"records": rows}))
        reloaded = load_ground_truth(path)
        assert len(reloaded) == 9
        for record in reloaded.records():
            assert record.expected == truth.get(record.company, record.aspect_id).expected

    def test_invalid_payload_rejected_at_load(self):
        data = {
            "records": [
                {
                    "company": "X",
                    "aspect_id": "solvency",
                    "expected": {"capital_ratio": -3, "regulatory_framework": "SST"},
                }
            ]
        }
        with pytest.raises(Exception):
            ground_truth_from_json(data)


def gold_on_gold_outcomes(truth):
    outcomes = {}
    for record in truth.records():
        pred = record.expected.model_copy(deep=True)
        outcomes[(record.company, record.aspect_id)] = score_payload(
            record.aspect_id, pred, record.expected
        )
    return outcomes


class TestGoldOnGold:
    def test_all_nine_pairs_pass(self, truth):
        outcomes = gold_on_gold_outcomes(truth)
        assert len(outcomes) == 9
        assert all(outcome.passed for outcome in outcomes.values())


class TestRunBenchmark:
    def run(self, truth, company_indexes, backend, models, n_runs, parallelism=1):
        client = CompletionClient(cache=CompletionCache(), backends={"mock": backend})
        return run_benchmark(
            indexes=company_indexes,
            truth=truth,
            models=models,
            aspects=list(ASPECTS.values()),
            companies=truth.companies,
            n_runs=n_runs,
            client=client,
            parallelism=parallelism,
        )

    def test_all_gold_mock_gives_100(self, truth, company_indexes):
        models = {"gold-a": ModelSpec("mock", "gold-a"), "gold-b": ModelSpec("mock", "gold-b")}
        report = self.run(truth, company_indexes, GoldChatBackend(truth), models, n_runs=20)
        assert len(report.cells) == 2 * 3 * 3 * 20
        for rates in report.pass_rates.values():
            assert all(rate == 100.0 for rate in rates.values())
        assert not report.any_failures

    def test_one_bad_run_in_twelve_gives_91_7(self, truth, company_indexes):
        backend = GoldChatBackend(
            truth, corrupt_when=lambda company, aspect, run: aspect == "ratings" and run == 0
        )
        report = self.run(truth, company_indexes, backend, {"m": ModelSpec("mock", "m-1")}, n_runs=12)
        assert report.pass_rates["m"]["ratings"] == pytest.approx(91.7, abs=0.05)
        assert report.pass_rates["m"]["solvency"] == 100.0

    def test_one_bad_company_gives_66_7(self, truth, company_indexes):
        backend = GoldChatBackend(
            truth, corrupt_when=lambda company, aspect, run: aspect == "ratings" and company == "AXA"
        )
        report = self.run(truth, company_indexes, backend, {"m": ModelSpec("mock", "m-1")}, n_runs=20)
        assert report.pass_rates["m"]["ratings"] == pytest.approx(66.7, abs=0.05)

    def test_pass_rates_recomputable_from_cells(self, truth, company_indexes):
        backend = GoldChatBackend(
            truth, corrupt_when=lambda company, aspect, run: aspect == "solvency" and run % 3 == 0
        )
        report = self.run(truth, company_indexes, backend, {"m": ModelSpec("mock", "m-1")}, n_runs=7)
        for (alias, aspect_id), expected_rate in (
            ((alias, aspect_id), rate)
            for alias, rates in report.pass_rates.items()
            for aspect_id, rate in rates.items()
        ):
            relevant = [
                c for c in report.cells if c.model_alias == alias and c.aspect_id == aspect_id
            ]
            recomputed = 100.0 * sum(c.outcome.passed for c in relevant) / len(relevant)
            assert recomputed == expected_rate

    def test_parallel_execution_is_byte_identical(self, truth, company_indexes):
        backend = GoldChatBackend(
            truth, corrupt_when=lambda company, aspect, run: aspect == "ratings" and run == 1
        )
        models = {"m": ModelSpec("mock", "m-1")}
        serial = self.run(truth, company_indexes, backend, models, n_runs=4, parallelism=1)
        parallel = self.run(truth, company_indexes, backend, models, n_runs=4, parallelism=8)
        assert serial.to_json() == parallel.to_json()

    def test_missing_ground_truth_fails_before_extraction(self, truth, company_indexes):
        partial = GroundTruthSet(
            [r for r in truth.records() if not (r.company == "AXA" and r.aspect_id == "ratings")]
        )
        backend = GoldChatBackend(truth)
        client = CompletionClient(cache=CompletionCache(), backends={"mock": backend})
        with pytest.raises(ConfigurationError, match="missing ground truth"):
            run_benchmark(
                indexes=company_indexes,
                truth=partial,
                models={"m": ModelSpec("mock", "gold")},
                aspects=list(ASPECTS.values()),
                companies=truth.companies,
                n_runs=2,
                client=client,
            )
        assert backend.invocations == []

    def test_invalid_json_cells_fail_as_generation(self, truth, company_indexes):
        models = {"bad": ModelSpec("mock", "invalid-json")}
        report = self.run(truth, company_indexes, GoldChatBackend(truth), models, n_runs=1)
        assert report.any_failures
        for cell in report.cells:
            assert not cell.outcome.passed
            assert cell.outcome.failure_stage == "generation"
            assert cell.outcome.failure_detail["error"] == "generation_invalid"
        assert report.failure_stage_totals["generation"] == len(report.cells)

    def test_failure_stage_totals_match_cells(self, truth, company_indexes):
        backend = GoldChatBackend(
            truth, corrupt_when=lambda company, aspect, run: aspect == "discount_rates"
        )
        report = self.run(truth, company_indexes, backend, {"m": ModelSpec("mock", "m-1")}, n_runs=2)
        tallied = sum(report.failure_stage_totals.values())
        failing = sum(1 for c in report.cells if not c.outcome.passed)
        assert tallied == failing > 0


class TestScorePredictions:
    def test_mixed_predictions(self, truth):
        rows = [
            {
                "company": "AXA",
                "aspect_id": "solvency",
                "payload": {"capital_ratio": 224, "regulatory_framework": "Solvency II"},
            },
            {
                "company": "Zurich",
                "aspect_id": "solvency",
                "payload": {"capital_ratio": 999, "regulatory_framework": "SST"},
            },
        ]
        results = score_predictions(rows, truth)
        assert results[0][2].passed
        assert not results[1][2].passed
