"""Statement of Reasons (SoR) records: schema, row validation, fill-rate profiling.

A SoR travels on disk as one CSV row (column name -> string). validate_record
turns a raw row into either a typed SorRecord or a QuarantineEntry; bad data is
never an exception, it is routed to quarantine with a machine-readable reason.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping


class DecisionType(str, Enum):
    VISIBILITY_REMOVAL = "VISIBILITY_REMOVAL"
    VISIBILITY_DISABLE = "VISIBILITY_DISABLE"
    VISIBILITY_DEMOTION = "VISIBILITY_DEMOTION"
    MONETARY = "MONETARY"
    SERVICE_PROVISION = "SERVICE_PROVISION"
    ACCOUNT_SUSPENSION = "ACCOUNT_SUSPENSION"
    ACCOUNT_TERMINATION = "ACCOUNT_TERMINATION"
    OTHER = "OTHER"


class DecisionGround(str, Enum):
    ILLEGAL_CONTENT = "ILLEGAL_CONTENT"
    INCOMPATIBLE_WITH_TERMS = "INCOMPATIBLE_WITH_TERMS"


class ContentType(str, Enum):
    TEXT = "TEXT"
    IMAGE = "IMAGE"
    VIDEO = "VIDEO"
    AUDIO = "AUDIO"
    SYNTHETIC_MEDIA = "SYNTHETIC_MEDIA"
    APP = "APP"
    PRODUCT = "PRODUCT"
    OTHER = "OTHER"


class AutomatedDecision(str, Enum):
    FULLY = "FULLY"
    PARTIALLY = "PARTIALLY"
    NOT_AUTOMATED = "NOT_AUTOMATED"


class SourceType(str, Enum):
    ARTICLE_16_NOTICE = "ARTICLE_16_NOTICE"
    TRUSTED_FLAGGER = "TRUSTED_FLAGGER"
    VOLUNTARY_INITIATIVE = "VOLUNTARY_INITIATIVE"
    OTHER = "OTHER"


class QuarantineReason(str, Enum):
    MISSING_FIELD = "MISSING_FIELD"
    BAD_ENUM = "BAD_ENUM"
    BAD_DATE = "BAD_DATE"
    DATE_ORDER = "DATE_ORDER"
    EMPTY_OTHER_TEXT = "EMPTY_OTHER_TEXT"
    UNKNOWN_CATEGORY = "UNKNOWN_CATEGORY"


# Wire column order of a SoR dump row. The header of every dump file must
# match this exactly.
FIELD_ORDER = (
    "uuid",
    "platform_name",
    "decision_type",
    "decision_type_other",
    "decision_ground",
    "decision_ground_reference_url",
    "illegal_content_explanation",
    "category",
    "content_type",
    "content_type_other",
    "automated_detection",
    "automated_decision",
    "source_type",
    "content_date",
    "application_date",
    "created_at",
    "puid",
)

# Fields that must carry a non-empty value in every row.
_REQUIRED = frozenset(
    (
        "uuid",
        "platform_name",
        "decision_type",
        "decision_ground",
        "category",
        "content_type",
        "automated_detection",
        "automated_decision",
        "source_type",
        "content_date",
        "application_date",
        "created_at",
    )
)

_DECISION_TYPES = {m.value: m for m in DecisionType}
_DECISION_GROUNDS = {m.value: m for m in DecisionGround}
_CONTENT_TYPES = {m.value: m for m in ContentType}
_AUTOMATED_DECISIONS = {m.value: m for m in AutomatedDecision}
_SOURCE_TYPES = {m.value: m for m in SourceType}
_BOOLS = {"true": True, "false": False}


@dataclass(frozen=True, slots=True)
class SorRecord:
    """One moderation action as filed to the transparency database."""

    uuid: str
    platform_name: str
    decision_type: DecisionType
    decision_type_other: str | None
    decision_ground: DecisionGround
    decision_ground_reference_url: str | None
    illegal_content_explanation: str | None
    category: str
    content_type: ContentType
    content_type_other: str | None
    automated_detection: bool
    automated_decision: AutomatedDecision
    source_type: SourceType
    content_date: date
    application_date: date
    created_at: datetime
    puid: str | None

    def to_row(self) -> dict[str, str]:
        """Render the record back into its CSV row form (absent fields as '')."""
        return {
            "uuid": self.uuid,
            "platform_name": self.platform_name,
            "decision_type": self.decision_type.value,
            "decision_type_other": self.decision_type_other or "",
            "decision_ground": self.decision_ground.value,
            "decision_ground_reference_url": self.decision_ground_reference_url or "",
            "illegal_content_explanation": self.illegal_content_explanation or "",
            "category": self.category,
            "content_type": self.content_type.value,
            "content_type_other": self.content_type_other or "",
            "automated_detection": "true" if self.automated_detection else "false",
            "automated_decision": self.automated_decision.value,
            "source_type": self.source_type.value,
            "content_date": self.content_date.isoformat(),
            "application_date": self.application_date.isoformat(),
            "created_at": format_timestamp(self.created_at),
            "puid": self.puid or "",
        }


@dataclass(frozen=True)
class QuarantineEntry:
    """A rejected input row plus why it was rejected.

    file and row_number are filled in by the reader that hit the row; a bare
    validate_record call leaves them unset.
    """

    reason: QuarantineReason
    field: str
    raw_row: dict[str, str]
    file: str | None = None
    row_number: int | None = None

    def located(self, file: str, row_number: int) -> "QuarantineEntry":
        return replace(self, file=file, row_number=row_number)

    def to_json_line(self) -> str:
        payload = {
            "file": self.file,
            "row_number": self.row_number,
            "reason": self.reason.value,
            "field": self.field,
            "raw_row": self.raw_row,
        }
        return json.dumps(payload, sort_keys=True, ensure_ascii=False)


class TaxonomyError(ValueError):
    pass


@dataclass(frozen=True)
class CategoryTaxonomy:
    """Configurable violation-category vocabulary with report-label aliases."""

    codes: tuple[str, ...]
    labels: Mapping[str, str] = field(default_factory=dict)
    aliases: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.codes:
            raise TaxonomyError("taxonomy must declare at least one category code")
        if len(set(self.codes)) != len(self.codes):
            raise TaxonomyError("duplicate category codes in taxonomy")
        code_set = set(self.codes)
        for alias, target in self.aliases.items():
            if target not in code_set:
                raise TaxonomyError(f"alias {alias!r} points at unknown code {target!r}")
        object.__setattr__(self, "_code_set", code_set)
        object.__setattr__(
            self, "_folded", {c.casefold(): c for c in self.codes} | {a.casefold(): t for a, t in self.aliases.items()}
        )

    def __contains__(self, code: str) -> bool:
        return code in self._code_set  # type: ignore[attr-defined]

    def resolve(self, label: str) -> str | None:
        """Map a category code, declared alias, or case-variant thereof to a code.

        Returns None for labels the taxonomy does not know; callers decide
        whether that is an error or a finding.
        """
        if label in self._code_set:  # type: ignore[attr-defined]
            return label
        target = self.aliases.get(label)
        if target is not None:
            return target
        return self._folded.get(label.casefold())  # type: ignore[attr-defined]

    def label(self, code: str) -> str:
        return self.labels.get(code, code)

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "CategoryTaxonomy":
        codes = data.get("codes")
        if not isinstance(codes, list) or not all(isinstance(c, str) for c in codes):
            raise TaxonomyError("taxonomy 'codes' must be a list of strings")
        labels = data.get("labels", {})
        aliases = data.get("aliases", {})
        if not isinstance(labels, dict) or not isinstance(aliases, dict):
            raise TaxonomyError("taxonomy 'labels' and 'aliases' must be objects")
        return cls(codes=tuple(codes), labels=dict(labels), aliases=dict(aliases))

    @classmethod
    def from_file(cls, path: str | Path) -> "CategoryTaxonomy":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict[str, object]:
        return {"codes": list(self.codes), "labels": dict(self.labels), "aliases": dict(self.aliases)}


def default_taxonomy() -> CategoryTaxonomy:
    """Built-in vocabulary used when no taxonomy file is supplied."""
    return CategoryTaxonomy(
        codes=(
            "hate_speech",
            "misinformation",
            "nudity",
            "deepfake",
            "scam",
            "other",
        ),
        labels={
            "hate_speech": "Hate speech",
            "misinformation": "Misinformation",
            "nudity": "Adult nudity",
            "deepfake": "Synthetic or manipulated media",
            "scam": "Scams and fraud",
            "other": "Other violation",
        },
        aliases={
            "Hate speech": "hate_speech",
            "Hateful conduct": "hate_speech",
            "Misinformation": "misinformation",
            "Disinformation": "misinformation",
            "Adult nudity": "nudity",
            "Nudity and sexual content": "nudity",
            "Deepfakes": "deepfake",
            "Manipulated media": "deepfake",
            "Scams": "scam",
            "Fraud": "scam",
            "Other": "other",
        },
    )


def parse_date(text: str) -> date:
    """Strict YYYY-MM-DD."""
    return date.fromisoformat(text)


_DATE_MEMO: dict[str, date] = {}


def _parse_date_memo(text: str) -> date:
    # Dump dates repeat heavily; memoise with a size guard against garbage input.
    d = _DATE_MEMO.get(text)
    if d is None:
        d = date.fromisoformat(text)
        if len(_DATE_MEMO) > 4096:
            _DATE_MEMO.clear()
        _DATE_MEMO[text] = d
    return d


def parse_timestamp(text: str) -> datetime:
    """Strict YYYY-MM-DDThh:mm:ssZ, second precision, UTC."""
    if len(text) != 20 or text[10] != "T" or text[19] != "Z":
        raise ValueError(f"bad timestamp {text!r}")
    return datetime.fromisoformat(text[:19]).replace(tzinfo=timezone.utc)


def format_timestamp(dt: datetime) -> str:
    return f"{dt.year:04d}-{dt.month:02d}-{dt.day:02d}T{dt.hour:02d}:{dt.minute:02d}:{dt.second:02d}Z"


def validate_record(
    raw: Mapping[str, str], taxonomy: CategoryTaxonomy
) -> SorRecord | QuarantineEntry:
    """Validate one raw dump row. Total and deterministic: always returns
    exactly one of SorRecord or QuarantineEntry, never raises on data.
    """

    def bad(reason: QuarantineReason, field_name: str) -> QuarantineEntry:
        return QuarantineEntry(reason=reason, field=field_name, raw_row=dict(raw))

    for name in FIELD_ORDER:
        value = raw.get(name)
        if value is None:
            return bad(QuarantineReason.MISSING_FIELD, name)
        if name in _REQUIRED and value == "":
            return bad(QuarantineReason.MISSING_FIELD, name)

    decision_type = _DECISION_TYPES.get(raw["decision_type"])
    if decision_type is None:
        return bad(QuarantineReason.BAD_ENUM, "decision_type")
    decision_ground = _DECISION_GROUNDS.get(raw["decision_ground"])
    if decision_ground is None:
        return bad(QuarantineReason.BAD_ENUM, "decision_ground")
    content_type = _CONTENT_TYPES.get(raw["content_type"])
    if content_type is None:
        return bad(QuarantineReason.BAD_ENUM, "content_type")
    automated_detection = _BOOLS.get(raw["automated_detection"])
    if automated_detection is None:
        return bad(QuarantineReason.BAD_ENUM, "automated_detection")
    automated_decision = _AUTOMATED_DECISIONS.get(raw["automated_decision"])
    if automated_decision is None:
        return bad(QuarantineReason.BAD_ENUM, "automated_decision")
    source_type = _SOURCE_TYPES.get(raw["source_type"])
    if source_type is None:
        return bad(QuarantineReason.BAD_ENUM, "source_type")

    category = raw["category"]
    if category not in taxonomy:
        return bad(QuarantineReason.UNKNOWN_CATEGORY, "category")

    try:
        content_date = _parse_date_memo(raw["content_date"])
    except ValueError:
        return bad(QuarantineReason.BAD_DATE, "content_date")
    try:
        application_date = _parse_date_memo(raw["application_date"])
    except ValueError:
        return bad(QuarantineReason.BAD_DATE, "application_date")
    try:
        created_at = parse_timestamp(raw["created_at"])
    except ValueError:
        return bad(QuarantineReason.BAD_DATE, "created_at")

    if content_date > application_date:
        return bad(QuarantineReason.DATE_ORDER, "application_date")
    if application_date > created_at.date():
        return bad(QuarantineReason.DATE_ORDER, "created_at")

    if decision_type is DecisionType.OTHER and raw["decision_type_other"] == "":
        return bad(QuarantineReason.EMPTY_OTHER_TEXT, "decision_type_other")
    if content_type is ContentType.OTHER and raw["content_type_other"] == "":
        return bad(QuarantineReason.EMPTY_OTHER_TEXT, "content_type_other")

    return SorRecord(
        uuid=raw["uuid"],
        platform_name=raw["platform_name"],
        decision_type=decision_type,
        decision_type_other=raw["decision_type_other"] or None,
        decision_ground=decision_ground,
        decision_ground_reference_url=raw["decision_ground_reference_url"] or None,
        illegal_content_explanation=raw["illegal_content_explanation"] or None,
        category=category,
        content_type=content_type,
        content_type_other=raw["content_type_other"] or None,
        automated_detection=automated_detection,
        automated_decision=automated_decision,
        source_type=source_type,
        content_date=content_date,
        application_date=application_date,
        created_at=created_at,
        puid=raw["puid"] or None,
    )


# Optional and conditionally required attributes whose fill rates quantify how
# informative a corpus is. Values are applicability tests.
PROFILE_ATTRIBUTES: dict[str, str] = {
    "decision_ground_reference_url": "always",
    "illegal_content_explanation": "illegal_ground",
    "decision_type_other": "decision_other",
    "content_type_other": "content_other",
    "puid": "always",
}


@dataclass
class FillStat:
    filled: int = 0
    applicable: int = 0

    @property
    def rate(self) -> float | None:
        """Fill rate in [0, 1], or None when no record was applicable."""
        if self.applicable == 0:
            return None
        return self.filled / self.applicable


@dataclass
class AttributeFillReport:
    """Per-attribute fill counts over a record stream. Mergeable by addition."""

    stats: dict[str, FillStat]

    @classmethod
    def empty(cls) -> "AttributeFillReport":
        return cls(stats={name: FillStat() for name in PROFILE_ATTRIBUTES})

    def add(self, record: SorRecord) -> None:
        s = self.stats
        st = s["decision_ground_reference_url"]
        st.applicable += 1
        if record.decision_ground_reference_url:
            st.filled += 1
        st = s["puid"]
        st.applicable += 1
        if record.puid:
            st.filled += 1
        if record.decision_ground is DecisionGround.ILLEGAL_CONTENT:
            st = s["illegal_content_explanation"]
            st.applicable += 1
            if record.illegal_content_explanation:
                st.filled += 1
        if record.decision_type is DecisionType.OTHER:
            st = s["decision_type_other"]
            st.applicable += 1
            if record.decision_type_other:
                st.filled += 1
        if record.content_type is ContentType.OTHER:
            st = s["content_type_other"]
            st.applicable += 1
            if record.content_type_other:
                st.filled += 1

    def merged(self, other: "AttributeFillReport") -> "AttributeFillReport":
        out = AttributeFillReport.empty()
        for name, st in out.stats.items():
            a = self.stats[name]
            b = other.stats[name]
            st.filled = a.filled + b.filled
            st.applicable = a.applicable + b.applicable
        return out

    def to_dict(self) -> dict[str, dict[str, object]]:
        return {
            name: {"filled": st.filled, "applicable": st.applicable, "rate": st.rate}
            for name, st in self.stats.items()
        }


def informativeness_profile(records: Iterable[SorRecord]) -> AttributeFillReport:
    """Count, per optional or conditional attribute, how often it is filled."""
    report = AttributeFillReport.empty()
    for record in records:
        report.add(record)
    return report
