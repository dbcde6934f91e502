from __future__ import annotations

from datetime import date, datetime, timezone

import pytest

from modaudit.sor import (
    AutomatedDecision,
    CategoryTaxonomy,
    ContentType,
    DecisionGround,
    DecisionType,
    SorRecord,
    SourceType,
)


@pytest.fixture
def taxonomy() -> CategoryTaxonomy:
    return CategoryTaxonomy(
        codes=("hate_speech", "misinformation", "nudity", "other"),
        labels={"hate_speech": "Hate speech"},
        aliases={
            "Hate speech": "hate_speech",
            "Disinformation": "misinformation",
            "Adult nudity": "nudity",
        },
    )


def make_record(**overrides) -> SorRecord:
    """A valid baseline record; keyword overrides adjust single fields."""
    base = dict(
        uuid="sor-0000001",
        platform_name="examplehub",
        decision_type=DecisionType.VISIBILITY_REMOVAL,
        decision_type_other=None,
        decision_ground=DecisionGround.INCOMPATIBLE_WITH_TERMS,
        decision_ground_reference_url=None,
        illegal_content_explanation=None,
        category="hate_speech",
        content_type=ContentType.TEXT,
        content_type_other=None,
        automated_detection=False,
        automated_decision=AutomatedDecision.NOT_AUTOMATED,
        source_type=SourceType.VOLUNTARY_INITIATIVE,
        content_date=date(2024, 1, 10),
        application_date=date(2024, 1, 12),
        created_at=datetime(2024, 1, 13, 9, 30, 0, tzinfo=timezone.utc),
        puid=None,
    )
    base.update(overrides)
    return SorRecord(**base)


def make_row(**overrides) -> dict[str, str]:
    """A valid baseline raw CSV row."""
    row = make_record().to_row()
    row.update({k: v for k, v in overrides.items()})
    return row
