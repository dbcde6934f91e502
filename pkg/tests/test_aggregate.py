from __future__ import annotations

import random
from datetime import date
from fractions import Fraction

import pytest

from modaudit.aggregate import (
    Period,
    PeriodError,
    Predicate,
    PredicateError,
    ResultStatus,
    merge_results,
    replicate_all,
    replicate_claim,
)
from modaudit.claims import Claim, Metric, Precision
from modaudit.sor import DecisionType

from .conftest import make_record
from .oracles import naive_replicate, random_count_claim, random_record

JAN = Period(start=date(2024, 1, 1), end=date(2024, 2, 1))


def count_claim(claim_id, predicate_raw, period=JAN, reported=0):
    return Claim(
        claim_id=claim_id,
        platform_name="examplehub",
        metric=Metric.COUNT,
        predicate=Predicate.parse(predicate_raw),
        denominator_predicate=None,
        period=period,
        reported_value=reported,
        precision=Precision.exact(),
        source_locator="test:fixture",
        value_text=str(reported),
    )


def share_claim(claim_id, predicate_raw, denominator_raw=None, period=JAN):
    return Claim(
        claim_id=claim_id,
        platform_name="examplehub",
        metric=Metric.SHARE,
        predicate=Predicate.parse(predicate_raw),
        denominator_predicate=Predicate.parse(denominator_raw or {}),
        period=period,
        reported_value=Fraction(1, 2),
        precision=Precision.rounded(2),
        source_locator="test:fixture",
        value_text="50.%",
    )


class TestPredicate:
    def test_empty_predicate_is_true(self):
        assert Predicate.parse({}).matches(make_record())

    def test_membership_over_value_sets(self):
        p = Predicate.parse({"decision_type": ["VISIBILITY_REMOVAL", "MONETARY"]})
        assert p.matches(make_record())
        assert not p.matches(make_record(decision_type=DecisionType.ACCOUNT_SUSPENSION))

    def test_unknown_attribute_rejected(self):
        with pytest.raises(PredicateError, match="unknown filter attribute"):
            Predicate.parse({"uuid": "x"})

    def test_unparseable_literal_rejected(self):
        with pytest.raises(PredicateError):
            Predicate.parse({"decision_type": "SHADOWBAN"})

    def test_boolean_attribute(self):
        p = Predicate.parse({"automated_detection": "true"})
        assert p.matches(make_record(automated_detection=True))
        assert not p.matches(make_record())

    def test_json_round_trip_is_canonical(self):
        raw = {"category": ["nudity", "hate_speech"], "automated_decision": "FULLY"}
        p = Predicate.parse(raw)
        assert Predicate.parse(p.to_json()) == p


class TestPeriod:
    def test_start_must_precede_end(self):
        with pytest.raises(PeriodError):
            Period(start=date(2024, 2, 1), end=date(2024, 2, 1))

    def test_unknown_field_rejected(self):
        with pytest.raises(PeriodError):
            Period(start=date(2024, 1, 1), end=date(2024, 2, 1), field="filed_date")

    def test_half_open_bounds(self):
        assert JAN.contains_date(date(2024, 1, 1))
        assert JAN.contains_date(date(2024, 1, 31))
        assert not JAN.contains_date(date(2024, 2, 1))

    def test_created_at_field_uses_timestamp_date(self):
        period = Period(start=date(2024, 1, 13), end=date(2024, 1, 14), field="created_at")
        assert period.contains(make_record())  # created_at 2024-01-13T09:30:00Z


class TestReplicate:
    def fixture_six(self):
        # two hate_speech removals in January, plus distractors
        return [
            make_record(uuid="r1", category="hate_speech"),
            make_record(uuid="r2", category="hate_speech"),
            make_record(uuid="r3", category="nudity"),
            make_record(uuid="r4", category="hate_speech", decision_type=DecisionType.ACCOUNT_SUSPENSION),
            make_record(
                uuid="r5",
                category="hate_speech",
                content_date=date(2024, 2, 10),
                application_date=date(2024, 2, 11),
                created_at=make_record().created_at.replace(month=2, day=12),
            ),
            make_record(uuid="r6", category="misinformation"),
        ]

    def test_count_on_hand_checked_fixture(self):
        claim = count_claim(
            "c1", {"category": "hate_speech", "decision_type": "VISIBILITY_REMOVAL"}
        )
        records = self.fixture_six()
        result = replicate_claim(claim, records)
        assert result.computed_value == 2
        assert result.computed_value == naive_replicate(claim, records)

    def test_true_predicate_counts_everything_in_period(self):
        claim = count_claim("c1", {})
        records = [make_record(uuid=f"r{i}") for i in range(11)]
        assert replicate_claim(claim, records).computed_value == 11

    def test_zero_share_corpus(self):
        # no fully-automated decisions at all: share must be exactly 0
        claim = share_claim("s1", {"automated_decision": "FULLY"})
        records = [make_record(uuid=f"r{i}") for i in range(8)]
        result = replicate_claim(claim, records)
        assert result.computed_value == 0
        assert result.denominator_count == 8
        assert result.status is ResultStatus.OK

    def test_share_with_empty_denominator_is_undefined(self):
        claim = share_claim("s1", {"automated_decision": "FULLY"}, period=Period(date(2030, 1, 1), date(2030, 2, 1)))
        result = replicate_claim(claim, [make_record()])
        assert result.status is ResultStatus.UNDEFINED
        assert result.computed_value is None

    def test_single_pass_equals_per_claim_runs(self):
        records = self.fixture_six()
        claims = [
            count_claim("a", {"category": "hate_speech"}),
            count_claim("b", {"decision_type": "VISIBILITY_REMOVAL"}),
            share_claim("c", {"automated_decision": "NOT_AUTOMATED"}),
        ]
        together = replicate_all(claims, records)
        separate = [replicate_claim(c, records) for c in claims]
        assert together == sorted(separate, key=lambda r: r.claim_id)

    def test_no_claims_reads_nothing(self):
        def exploding():
            raise AssertionError("stream must not be read")
            yield  # pragma: no cover

        assert replicate_all([], exploding()) == []

    def test_disjoint_periods_count_independently(self):
        feb = Period(start=date(2024, 2, 1), end=date(2024, 3, 1))
        claims = [count_claim("jan", {}, period=JAN), count_claim("feb", {}, period=feb)]
        records = self.fixture_six()
        results = {r.claim_id: r.computed_value for r in replicate_all(claims, records)}
        assert results == {"jan": 5, "feb": 1}
        for claim in claims:
            assert results[claim.claim_id] == naive_replicate(claim, records)

    def test_duplicate_claim_ids_abort_before_reading(self):
        claims = [count_claim("dup", {}), count_claim("dup", {"category": "nudity"})]
        with pytest.raises(PredicateError, match="dup"):
            replicate_all(claims, [])

    def test_order_independence(self):
        rng = random.Random(5)
        records = [random_record(rng, i) for i in range(300)]
        claims = [random_count_claim(rng, f"c{i}") for i in range(6)]
        baseline = replicate_all(claims, records)
        for seed in range(5):
            shuffled = records[:]
            random.Random(seed).shuffle(shuffled)
            assert replicate_all(claims, shuffled) == baseline

    def test_adding_matching_record_increments_exactly_that_claim(self):
        claims = [
            count_claim("hate", {"category": "hate_speech"}),
            count_claim("nudity", {"category": "nudity"}),
        ]
        records = self.fixture_six()
        before = {r.claim_id: r.computed_value for r in replicate_all(claims, records)}
        extra = make_record(uuid="extra", category="hate_speech")
        after = {r.claim_id: r.computed_value for r in replicate_all(claims, records + [extra])}
        assert after["hate"] == before["hate"] + 1
        assert after["nudity"] == before["nudity"]

    def test_oracle_equivalence_randomized(self):
        rng = random.Random(99)
        for trial in range(10):
            records = [random_record(rng, i) for i in range(rng.randint(0, 400))]
            claims = [random_count_claim(rng, f"t{trial}-c{i}") for i in range(8)]
            results = {r.claim_id: r.computed_value for r in replicate_all(claims, records)}
            for claim in claims:
                assert results[claim.claim_id] == naive_replicate(claim, records)


class TestMergeResults:
    def test_sharded_counts_merge_to_single_pass(self):
        rng = random.Random(17)
        records = [random_record(rng, i) for i in range(500)]
        claims = [random_count_claim(rng, f"c{i}") for i in range(5)] + [
            share_claim("s", {"automated_decision": "FULLY"}, period=Period(date(2024, 1, 1), date(2024, 3, 15)))
        ]
        whole = replicate_all(claims, records)
        parts = [
            replicate_all(claims, records[:200]),
            replicate_all(claims, records[200:350]),
            replicate_all(claims, records[350:]),
        ]
        assert merge_results(parts) == whole

    def test_merge_order_does_not_matter(self):
        rng = random.Random(23)
        records = [random_record(rng, i) for i in range(120)]
        claims = [random_count_claim(rng, f"c{i}") for i in range(4)]
        a = replicate_all(claims, records[:60])
        b = replicate_all(claims, records[60:])
        assert merge_results([a, b]) == merge_results([b, a])
