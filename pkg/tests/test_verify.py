from __future__ import annotations

import random
from datetime import date, datetime, timezone
from fractions import Fraction

import pytest

from modaudit.aggregate import Period
from modaudit.report import Severity
from modaudit.sor import AutomatedDecision, ContentType, DecisionType
from modaudit.verify import (
    KeywordClassifier,
    LinkageError,
    LinkConfig,
    ModerationEvent,
    VerificationKind,
    VisibilityStatus,
    _pair_score,
    classify,
    link,
    marker_token,
    reconstruct,
    verify_diff,
)

from .conftest import make_record

WINDOW = Period(start=date(2024, 1, 1), end=date(2024, 2, 1))
UTC = timezone.utc


def make_event(**overrides) -> ModerationEvent:
    base = dict(
        content_id="c-0000001",
        puid="p-0000001",
        content_type=ContentType.TEXT,
        content_created=date(2024, 1, 10),
        moderated_at=datetime(2024, 1, 12, 8, 0, 0, tzinfo=UTC),
        visibility_status=VisibilityStatus.REMOVED,
        platform_categories=("hate_speech",),
        automated_detection=False,
        automated_decision=AutomatedDecision.NOT_AUTOMATED,
        annotations=(),
        payload=f"posted text {marker_token('hate_speech')}",
    )
    base.update(overrides)
    return ModerationEvent(**base)


@pytest.fixture
def classifier(taxonomy):
    return KeywordClassifier.from_taxonomy(taxonomy)


class TestClassify:
    def test_marker_hit_is_fully_confident(self, classifier):
        verdict = classify(make_event(), classifier)
        assert verdict == ("hate_speech", 1.0)

    def test_no_marker_yields_other_with_zero_confidence(self, classifier):
        verdict = classify(make_event(payload="just some text"), classifier)
        assert verdict == ("other", 0.0)

    def test_missing_payload_is_unclassifiable(self, classifier):
        assert classify(make_event(payload=None), classifier) is None

    def test_unsupported_content_type_is_unclassifiable(self, classifier):
        assert classify(make_event(content_type=ContentType.IMAGE), classifier) is None

    def test_rule_order_breaks_ties(self):
        clf = KeywordClassifier({"misinformation": ["viral"], "nudity": ["viral"]})
        assert clf.classify_payload("going viral") == ("misinformation", 1.0)


class TestReconstruct:
    def test_filters_unmoderated_and_keeps_moderated(self, classifier):
        events = [
            make_event(content_id="c-1", puid="p-1"),
            make_event(content_id="c-2", puid="p-2", visibility_status=VisibilityStatus.DISABLED),
            make_event(content_id="c-3", puid="p-3", visibility_status=VisibilityStatus.DEMOTED),
            make_event(content_id="c-4", puid="p-4", visibility_status=VisibilityStatus.VISIBLE),
        ]
        out = reconstruct(events, classifier, WINDOW)
        assert [r.content_id for r in out] == ["c-1", "c-2", "c-3"]
        assert [r.decision_type for r in out] == [
            DecisionType.VISIBILITY_REMOVAL,
            DecisionType.VISIBILITY_DISABLE,
            DecisionType.VISIBILITY_DEMOTION,
        ]

    def test_account_annotation_on_visible_content_is_moderation(self, classifier):
        event = make_event(
            visibility_status=VisibilityStatus.VISIBLE, annotations=("account_suspension",)
        )
        out = reconstruct([event], classifier, WINDOW)
        assert out[0].decision_type is DecisionType.ACCOUNT_SUSPENSION

    def test_window_is_start_inclusive_end_exclusive_on_timestamp(self, classifier):
        just_before = make_event(
            content_id="c-early",
            content_created=date(2023, 12, 20),
            moderated_at=datetime(2023, 12, 31, 23, 59, 59, tzinfo=UTC),
        )
        at_start = make_event(
            content_id="c-start",
            content_created=date(2023, 12, 20),
            moderated_at=datetime(2024, 1, 1, 0, 0, 0, tzinfo=UTC),
        )
        at_end = make_event(
            content_id="c-end", moderated_at=datetime(2024, 2, 1, 0, 0, 0, tzinfo=UTC)
        )
        out = reconstruct([just_before, at_start, at_end], classifier, WINDOW)
        assert [r.content_id for r in out] == ["c-start"]

    def test_confident_classifier_beats_platform_categories(self, classifier):
        event = make_event(
            payload=f"clip {marker_token('misinformation')}", platform_categories=("nudity",)
        )
        out = reconstruct([event], classifier, WINDOW)
        assert out[0].category == "misinformation"
        assert out[0].classifier_verdict == ("misinformation", 1.0)

    def test_unclassifiable_falls_back_to_platform_categories(self, classifier):
        event = make_event(content_type=ContentType.IMAGE, payload=None, platform_categories=("nudity",))
        out = reconstruct([event], classifier, WINDOW)
        assert out[0].category == "nudity"

    def test_no_signal_at_all_defaults_to_other(self, classifier):
        event = make_event(payload="nothing to see", platform_categories=())
        out = reconstruct([event], classifier, WINDOW)
        assert out[0].category == "other"

    def test_application_date_is_moderation_date(self, classifier):
        out = reconstruct([make_event()], classifier, WINDOW)
        assert out[0].application_date == date(2024, 1, 12)
        assert out[0].content_date == date(2024, 1, 10)


def filed_record(**overrides):
    defaults = dict(
        uuid="sor-0000001",
        puid="p-0000001",
        category="hate_speech",
        application_date=date(2024, 1, 12),
        content_date=date(2024, 1, 10),
        created_at=datetime(2024, 1, 12, 20, 0, 0, tzinfo=UTC),
    )
    defaults.update(overrides)
    return make_record(**defaults)


def rebuild(events, taxonomy):
    return reconstruct(events, KeywordClassifier.from_taxonomy(taxonomy), WINDOW)


class TestLink:
    def test_puid_match_overrides_attribute_divergence(self, taxonomy):
        rec = rebuild([make_event()], taxonomy)
        filed = [filed_record(category="nudity")]
        linkage = link(rec, filed)
        assert len(linkage.pairs) == 1
        assert not linkage.unmatched_reconstructed and not linkage.unmatched_filed

    def test_same_block_same_attributes_same_day_scores_one(self, taxonomy):
        rec = rebuild([make_event(puid=None)], taxonomy)
        filed = [filed_record(puid=None)]
        assert _pair_score(rec[0], filed[0], LinkConfig()) == Fraction(1)
        linkage = link(rec, filed)
        assert len(linkage.pairs) == 1

    def test_score_formula_components(self, taxonomy):
        config = LinkConfig()
        rec = rebuild([make_event(puid=None)], taxonomy)[0]
        two_days_late = filed_record(
            puid=None, created_at=datetime(2024, 1, 14, 8, 0, 0, tzinfo=UTC)
        )
        assert _pair_score(rec, two_days_late, config) == Fraction(1, 2) + Fraction(3, 10) + Fraction(
            1, 5
        ) * Fraction(1, 3)
        different_category = filed_record(puid=None, category="nudity")
        assert _pair_score(rec, different_category, config) == Fraction(3, 10) + Fraction(1, 5)

    def test_below_threshold_is_not_matched(self, taxonomy):
        rec = rebuild([make_event(puid=None)], taxonomy)
        filed = [filed_record(puid=None, category="nudity")]  # 0.5 score
        linkage = link(rec, filed)
        assert not linkage.pairs
        assert len(linkage.unmatched_reconstructed) == 1
        assert len(linkage.unmatched_filed) == 1

    def test_filed_without_counterpart_stays_unmatched(self, taxonomy):
        rec = rebuild([make_event()], taxonomy)
        extra = filed_record(uuid="sor-extra", puid="p-extra", application_date=date(2024, 1, 20))
        linkage = link(rec, [filed_record(), extra])
        assert [f.uuid for _, f in linkage.pairs] == ["sor-0000001"]
        assert [f.uuid for f in linkage.unmatched_filed] == ["sor-extra"]

    def test_duplicate_puid_is_a_hard_error(self, taxonomy):
        rec = rebuild([make_event()], taxonomy)
        with pytest.raises(LinkageError):
            link(rec, [filed_record(uuid="a"), filed_record(uuid="b")])

    def test_items_with_differing_puids_never_fuzzy_match(self, taxonomy):
        # both sides carry puids; identities are known to differ
        rec = rebuild([make_event(puid="p-AAA")], taxonomy)
        filed = [filed_record(puid="p-BBB")]
        linkage = link(rec, filed)
        assert not linkage.pairs

    def test_one_sided_puid_still_fuzzy_matches(self, taxonomy):
        rec = rebuild([make_event(puid="p-AAA")], taxonomy)
        filed = [filed_record(puid=None)]
        assert len(link(rec, filed).pairs) == 1

    def test_greedy_matching_prefers_higher_score(self, taxonomy):
        rec = rebuild(
            [make_event(puid=None, content_id="c-x")], taxonomy
        )
        close = filed_record(uuid="sor-close", puid=None)
        far = filed_record(
            uuid="sor-far", puid=None, created_at=datetime(2024, 1, 18, 8, 0, 0, tzinfo=UTC)
        )
        linkage = link(rec, [far, close])
        assert [f.uuid for _, f in linkage.pairs] == ["sor-close"]

    def test_permutation_invariance_and_conservation(self, taxonomy):
        rng = random.Random(11)
        events = []
        filed = []
        for i in range(40):
            day = 5 + (i % 10)
            category = ("hate_speech", "misinformation", "nudity")[i % 3]
            events.append(
                make_event(
                    content_id=f"c-{i:03d}",
                    puid=None if i % 4 == 0 else f"p-{i:03d}",
                    moderated_at=datetime(2024, 1, day, 6 + (i % 12), 0, 0, tzinfo=UTC),
                    content_created=date(2024, 1, 2),
                    payload=f"txt {marker_token(category)}",
                    platform_categories=(category,),
                )
            )
            if i % 5 != 4:  # drop some filings
                filed.append(
                    filed_record(
                        uuid=f"sor-{i:03d}",
                        puid=None if i % 4 == 0 else f"p-{i:03d}",
                        category=category,
                        application_date=date(2024, 1, day),
                        content_date=date(2024, 1, 2),
                        created_at=datetime(2024, 1, day, 23, 0, 0, tzinfo=UTC),
                    )
                )
        rec = rebuild(events, taxonomy)
        baseline = link(rec, filed)
        base_pairs = {(r.content_id, f.uuid) for r, f in baseline.pairs}
        assert len(baseline.pairs) + len(baseline.unmatched_reconstructed) == len(rec)
        assert len(baseline.pairs) + len(baseline.unmatched_filed) == len(filed)
        for _ in range(10):
            rec_shuffled = rec[:]
            filed_shuffled = filed[:]
            rng.shuffle(rec_shuffled)
            rng.shuffle(filed_shuffled)
            again = link(rec_shuffled, filed_shuffled)
            assert {(r.content_id, f.uuid) for r, f in again.pairs} == base_pairs

    def test_no_item_appears_in_two_pairs(self, taxonomy):
        rec = rebuild(
            [make_event(puid=None, content_id=f"c-{i}") for i in range(6)], taxonomy
        )
        filed = [filed_record(uuid=f"sor-{i}", puid=None) for i in range(4)]
        linkage = link(rec, filed)
        rec_ids = [r.content_id for r, _ in linkage.pairs]
        filed_ids = [f.uuid for _, f in linkage.pairs]
        assert len(rec_ids) == len(set(rec_ids))
        assert len(filed_ids) == len(set(filed_ids))
        assert len(linkage.pairs) == 4


class TestStrippedPuidRecall:
    def test_omissions_and_phantoms_found_when_blocks_hold_no_partner(self, taxonomy):
        # no puids anywhere; every item sits in its own (content_type, day) block,
        # so a dropped filing or an extra filing has nothing plausible to pair with
        events = []
        filed = []
        for i in range(10):
            day = 3 + i
            events.append(
                make_event(
                    content_id=f"c-{i}",
                    puid=None,
                    moderated_at=datetime(2024, 1, day, 9, 0, 0, tzinfo=UTC),
                    content_created=date(2024, 1, 2),
                )
            )
            if i not in (2, 7):  # two filings dropped
                filed.append(
                    filed_record(
                        uuid=f"sor-{i}",
                        puid=None,
                        application_date=date(2024, 1, day),
                        content_date=date(2024, 1, 2),
                        created_at=datetime(2024, 1, day, 22, 0, 0, tzinfo=UTC),
                    )
                )
        filed.append(  # phantom filing on a day with no moderation at all
            filed_record(
                uuid="sor-phantom",
                puid=None,
                application_date=date(2024, 1, 25),
                content_date=date(2024, 1, 2),
                created_at=datetime(2024, 1, 25, 22, 0, 0, tzinfo=UTC),
            )
        )
        rec = rebuild(events, taxonomy)
        findings = verify_diff(link(rec, filed))
        omitted = {f.content_id for f in findings if f.kind is VerificationKind.OMITTED_SOR}
        phantom = {f.sor_uuid for f in findings if f.kind is VerificationKind.PHANTOM_SOR}
        assert omitted == {"c-2", "c-7"}
        assert phantom == {"sor-phantom"}


class TestVerifyDiff:
    def test_moderated_without_filing_is_omitted(self, taxonomy):
        rec = rebuild([make_event()], taxonomy)
        findings = verify_diff(link(rec, []))
        assert [f.kind for f in findings] == [VerificationKind.OMITTED_SOR]
        assert findings[0].severity is Severity.CRITICAL
        assert findings[0].content_id == "c-0000001"
        assert findings[0].sor_uuid is None

    def test_filing_without_action_is_phantom(self, taxonomy):
        findings = verify_diff(link([], [filed_record()]))
        assert [f.kind for f in findings] == [VerificationKind.PHANTOM_SOR]
        assert findings[0].sor_uuid == "sor-0000001"
        assert findings[0].content_id is None

    def test_automation_flip_is_critical_field_mismatch(self, taxonomy):
        rec = rebuild([make_event()], taxonomy)  # NOT_AUTOMATED platform-side
        filed = [filed_record(automated_decision=AutomatedDecision.FULLY)]
        findings = verify_diff(link(rec, filed))
        assert [f.kind for f in findings] == [VerificationKind.FIELD_MISMATCH]
        assert findings[0].severity is Severity.CRITICAL
        assert findings[0].mismatched_fields == (
            ("automated_decision", "NOT_AUTOMATED", "FULLY"),
        )

    def test_category_divergence_is_warn(self, taxonomy):
        rec = rebuild([make_event()], taxonomy)
        findings = verify_diff(link(rec, [filed_record(category="nudity")]))
        assert findings[0].kind is VerificationKind.FIELD_MISMATCH
        assert findings[0].severity is Severity.WARN

    def test_timely_identical_pair_is_consistent(self, taxonomy):
        rec = rebuild([make_event()], taxonomy)
        filed = [filed_record(created_at=datetime(2024, 1, 14, 8, 0, 0, tzinfo=UTC))]
        findings = verify_diff(link(rec, filed), deadline_days=7)
        assert [f.kind for f in findings] == [VerificationKind.CONSISTENT]
        assert findings[0].severity is Severity.INFO

    def test_late_filing_past_deadline_is_flagged(self, taxonomy):
        rec = rebuild([make_event()], taxonomy)
        late = filed_record(created_at=datetime(2024, 1, 20, 8, 0, 1, tzinfo=UTC))
        findings = verify_diff(link(rec, [late]), deadline_days=7)
        assert [f.kind for f in findings] == [VerificationKind.LATE_SUBMISSION]
        assert findings[0].severity is Severity.WARN

    def test_exactly_deadline_days_is_not_late(self, taxonomy):
        rec = rebuild([make_event()], taxonomy)
        on_time = filed_record(created_at=datetime(2024, 1, 19, 8, 0, 0, tzinfo=UTC))
        findings = verify_diff(link(rec, [on_time]), deadline_days=7)
        assert [f.kind for f in findings] == [VerificationKind.CONSISTENT]

    def test_pair_can_raise_mismatch_and_lateness_together(self, taxonomy):
        rec = rebuild([make_event()], taxonomy)
        bad = filed_record(
            category="nudity", created_at=datetime(2024, 1, 25, 8, 0, 0, tzinfo=UTC)
        )
        kinds = {f.kind for f in verify_diff(link(rec, [bad]))}
        assert kinds == {VerificationKind.FIELD_MISMATCH, VerificationKind.LATE_SUBMISSION}

    def test_findings_sorted_critical_first(self, taxonomy):
        events = [make_event(content_id=f"c-{i}", puid=f"p-{i}") for i in range(3)]
        rec = rebuild(events, taxonomy)
        filed = [
            filed_record(uuid="sor-0", puid="p-0"),
            filed_record(uuid="sor-1", puid="p-1", category="nudity"),
        ]
        findings = verify_diff(link(rec, filed))
        assert [f.kind for f in findings] == [
            VerificationKind.OMITTED_SOR,
            VerificationKind.FIELD_MISMATCH,
            VerificationKind.CONSISTENT,
        ]
