"""Filing verification: rebuild expected statements from platform-side moderation
data, link them against the filed records, and report completeness and
trustworthiness findings.

The linkage step pairs rebuilt and filed statements. Where both sides carry a
pseudonymous content id (puid) the pairing is exact; everything else falls back
to blocked fuzzy scoring. Two items that both carry puids but different ones are
never fuzzy-paired: their identities are known to differ.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime, time, timedelta, timezone
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Protocol, Sequence

from .aggregate import Period
from .report import SEVERITY_RANK, Severity
from .sor import (
    AutomatedDecision,
    CategoryTaxonomy,
    ContentType,
    DecisionGround,
    DecisionType,
    QuarantineEntry,
    QuarantineReason,
    SorRecord,
    format_timestamp,
    parse_date,
    parse_timestamp,
)


class VisibilityStatus(str, Enum):
    VISIBLE = "VISIBLE"
    REMOVED = "REMOVED"
    DISABLED = "DISABLED"
    DEMOTED = "DEMOTED"


# Annotation tokens that mark an account-level enforcement on an otherwise
# visible piece of content.
ACCOUNT_ANNOTATIONS = {
    "account_suspension": DecisionType.ACCOUNT_SUSPENSION,
    "account_termination": DecisionType.ACCOUNT_TERMINATION,
}

_VISIBILITY_TO_DECISION = {
    VisibilityStatus.REMOVED: DecisionType.VISIBILITY_REMOVAL,
    VisibilityStatus.DISABLED: DecisionType.VISIBILITY_DISABLE,
    VisibilityStatus.DEMOTED: DecisionType.VISIBILITY_DEMOTION,
}

EVENT_FIELD_ORDER = (
    "content_id",
    "puid",
    "content_type",
    "content_created",
    "moderated_at",
    "visibility_status",
    "platform_categories",
    "automated_detection",
    "automated_decision",
    "annotations",
    "payload",
)

_EVENT_REQUIRED = frozenset(
    (
        "content_id",
        "content_type",
        "content_created",
        "moderated_at",
        "visibility_status",
        "automated_detection",
        "automated_decision",
    )
)

_VISIBILITIES = {m.value: m for m in VisibilityStatus}
_CONTENT_TYPES = {m.value: m for m in ContentType}
_AUTOMATED_DECISIONS = {m.value: m for m in AutomatedDecision}
_BOOLS = {"true": True, "false": False}


@dataclass(frozen=True, slots=True)
class ModerationEvent:
    """Platform-side record of one enforcement action (or of untouched content)."""

    content_id: str
    puid: str | None
    content_type: ContentType
    content_created: date
    moderated_at: datetime
    visibility_status: VisibilityStatus
    platform_categories: tuple[str, ...]
    automated_detection: bool
    automated_decision: AutomatedDecision
    annotations: tuple[str, ...]
    payload: str | None

    @property
    def is_moderated(self) -> bool:
        if self.visibility_status is not VisibilityStatus.VISIBLE:
            return True
        return any(a in ACCOUNT_ANNOTATIONS for a in self.annotations)

    def to_row(self) -> dict[str, str]:
        return {
            "content_id": self.content_id,
            "puid": self.puid or "",
            "content_type": self.content_type.value,
            "content_created": self.content_created.isoformat(),
            "moderated_at": format_timestamp(self.moderated_at),
            "visibility_status": self.visibility_status.value,
            "platform_categories": ";".join(self.platform_categories),
            "automated_detection": "true" if self.automated_detection else "false",
            "automated_decision": self.automated_decision.value,
            "annotations": ";".join(self.annotations),
            "payload": self.payload or "",
        }


def parse_event_row(raw: Mapping[str, str]) -> ModerationEvent | QuarantineEntry:
    """Validate one platform-export row; mirrors validate_record's contract."""

    def bad(reason: QuarantineReason, field_name: str) -> QuarantineEntry:
        return QuarantineEntry(reason=reason, field=field_name, raw_row=dict(raw))

    for name in EVENT_FIELD_ORDER:
        value = raw.get(name)
        if value is None:
            return bad(QuarantineReason.MISSING_FIELD, name)
        if name in _EVENT_REQUIRED and value == "":
            return bad(QuarantineReason.MISSING_FIELD, name)

    content_type = _CONTENT_TYPES.get(raw["content_type"])
    if content_type is None:
        return bad(QuarantineReason.BAD_ENUM, "content_type")
    visibility = _VISIBILITIES.get(raw["visibility_status"])
    if visibility is None:
        return bad(QuarantineReason.BAD_ENUM, "visibility_status")
    automated_detection = _BOOLS.get(raw["automated_detection"])
    if automated_detection is None:
        return bad(QuarantineReason.BAD_ENUM, "automated_detection")
    automated_decision = _AUTOMATED_DECISIONS.get(raw["automated_decision"])
    if automated_decision is None:
        return bad(QuarantineReason.BAD_ENUM, "automated_decision")

    try:
        content_created = parse_date(raw["content_created"])
    except ValueError:
        return bad(QuarantineReason.BAD_DATE, "content_created")
    try:
        moderated_at = parse_timestamp(raw["moderated_at"])
    except ValueError:
        return bad(QuarantineReason.BAD_DATE, "moderated_at")

    if content_created > moderated_at.date():
        return bad(QuarantineReason.DATE_ORDER, "moderated_at")

    categories = tuple(c for c in raw["platform_categories"].split(";") if c)
    annotations = tuple(a for a in raw["annotations"].split(";") if a)

    return ModerationEvent(
        content_id=raw["content_id"],
        puid=raw["puid"] or None,
        content_type=content_type,
        content_created=content_created,
        moderated_at=moderated_at,
        visibility_status=visibility,
        platform_categories=categories,
        automated_detection=automated_detection,
        automated_decision=automated_decision,
        annotations=annotations,
        payload=raw["payload"] or None,
    )


# ---------------------------------------------------------------------------
# Content classification
# ---------------------------------------------------------------------------


def marker_token(category: str) -> str:
    """Reserved payload token that the reference classifier keys on."""
    return f"<<{category}>>"


class ContentClassifier(Protocol):
    """Pluggable violation-type classifier.

    Real deployments would put ML models behind this; the reference
    implementation is a deterministic keyword-rule table.
    """

    requires_payload: bool

    def handles(self, content_type: ContentType) -> bool: ...

    def classify_payload(self, payload: str) -> tuple[str, float]: ...


class KeywordClassifier:
    """Rule-based reference classifier: first category whose token list hits wins.

    Rules are checked in declaration order, so classification is deterministic.
    No hit yields ('other', 0.0).
    """

    requires_payload = True

    def __init__(
        self,
        rules: Mapping[str, Sequence[str]],
        supported_types: Iterable[ContentType] = (ContentType.TEXT,),
    ) -> None:
        self.rules: list[tuple[str, tuple[str, ...]]] = [
            (category, tuple(t.casefold() for t in tokens)) for category, tokens in rules.items()
        ]
        self.supported_types = frozenset(supported_types)

    @classmethod
    def from_taxonomy(cls, taxonomy: CategoryTaxonomy) -> "KeywordClassifier":
        return cls({code: [marker_token(code)] for code in taxonomy.codes})

    def handles(self, content_type: ContentType) -> bool:
        return content_type in self.supported_types

    def classify_payload(self, payload: str) -> tuple[str, float]:
        text = payload.casefold()
        for category, tokens in self.rules:
            if any(token in text for token in tokens):
                return category, 1.0
        return "other", 0.0


def classify(event: ModerationEvent, classifier: ContentClassifier) -> tuple[str, float] | None:
    """Classify one event's content. None means the event is unclassifiable
    (no payload for a payload-requiring classifier, or unsupported content
    type); reconstruction then falls back to the platform's own categories.
    """
    if not classifier.handles(event.content_type):
        return None
    if classifier.requires_payload and not event.payload:
        return None
    return classifier.classify_payload(event.payload or "")


# ---------------------------------------------------------------------------
# Reconstruction
# ---------------------------------------------------------------------------

# Classifier verdicts below this confidence defer to the platform's categories.
CLASSIFIER_CONFIDENCE_FLOOR = 0.5

# Events carry no legal ground, so rebuilt statements default to a terms basis
# and ground divergences are reported at WARN only.
DEFAULT_RECONSTRUCTED_GROUND = DecisionGround.INCOMPATIBLE_WITH_TERMS


@dataclass(frozen=True, slots=True)
class ReconstructedSor:
    """Statement derived from an event: the fields an export can support."""

    content_id: str
    puid: str | None
    decision_type: DecisionType
    decision_ground: DecisionGround
    category: str
    content_type: ContentType
    automated_detection: bool
    automated_decision: AutomatedDecision
    content_date: date
    application_date: date
    moderated_at: datetime
    classifier_verdict: tuple[str, float] | None


def _decision_type_for(event: ModerationEvent) -> DecisionType | None:
    mapped = _VISIBILITY_TO_DECISION.get(event.visibility_status)
    if mapped is not None:
        return mapped
    for annotation in event.annotations:
        account_action = ACCOUNT_ANNOTATIONS.get(annotation)
        if account_action is not None:
            return account_action
    return None


def reconstruct(
    events: Iterable[ModerationEvent],
    classifier: ContentClassifier,
    window: Period,
) -> list[ReconstructedSor]:
    """Rebuild the expected statement for every moderated event whose
    moderation timestamp falls in [window.start, window.end).
    """
    start_dt = datetime.combine(window.start, time.min, tzinfo=timezone.utc)
    end_dt = datetime.combine(window.end, time.min, tzinfo=timezone.utc)
    out: list[ReconstructedSor] = []
    for event in events:
        if not (start_dt <= event.moderated_at < end_dt):
            continue
        decision_type = _decision_type_for(event)
        if decision_type is None:
            continue  # not a moderated item
        verdict = classify(event, classifier)
        if verdict is not None and verdict[1] >= CLASSIFIER_CONFIDENCE_FLOOR:
            category = verdict[0]
        elif event.platform_categories:
            category = event.platform_categories[0]
        else:
            category = "other"
        out.append(
            ReconstructedSor(
                content_id=event.content_id,
                puid=event.puid,
                decision_type=decision_type,
                decision_ground=DEFAULT_RECONSTRUCTED_GROUND,
                category=category,
                content_type=event.content_type,
                automated_detection=event.automated_detection,
                automated_decision=event.automated_decision,
                content_date=event.content_created,
                application_date=event.moderated_at.date(),
                moderated_at=event.moderated_at,
                classifier_verdict=verdict,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Linkage
# ---------------------------------------------------------------------------


class LinkageError(ValueError):
    """Corpus defect that makes linkage meaningless (duplicate puid)."""


@dataclass(frozen=True)
class LinkConfig:
    """Fuzzy-pairing weights and acceptance threshold, exact rationals."""

    category_weight: Fraction = Fraction(1, 2)
    decision_weight: Fraction = Fraction(3, 10)
    time_weight: Fraction = Fraction(1, 5)
    threshold: Fraction = Fraction(7, 10)
    max_day_distance: int = 3

    def __post_init__(self) -> None:
        if min(self.category_weight, self.decision_weight, self.time_weight, self.threshold) < 0:
            raise ValueError("linkage weights and threshold must be non-negative")
        if self.max_day_distance < 1:
            raise ValueError("max_day_distance must be at least 1")

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "LinkConfig":
        def frac(key: str, default: Fraction) -> Fraction:
            value = data.get(key)
            return default if value is None else Fraction(str(value))

        return cls(
            category_weight=frac("category_weight", Fraction(1, 2)),
            decision_weight=frac("decision_weight", Fraction(3, 10)),
            time_weight=frac("time_weight", Fraction(1, 5)),
            threshold=frac("threshold", Fraction(7, 10)),
            max_day_distance=int(data.get("max_day_distance", 3)),  # type: ignore[arg-type]
        )


@dataclass
class Linkage:
    pairs: list[tuple[ReconstructedSor, SorRecord]]
    unmatched_reconstructed: list[ReconstructedSor]
    unmatched_filed: list[SorRecord]


def _pair_score(rec: ReconstructedSor, filed: SorRecord, config: LinkConfig) -> Fraction:
    score = Fraction(0)
    if rec.category == filed.category:
        score += config.category_weight
    if rec.decision_type is filed.decision_type:
        score += config.decision_weight
    distance = abs((filed.created_at.date() - rec.moderated_at.date()).days)
    clamped = min(distance, config.max_day_distance)
    score += config.time_weight * (1 - Fraction(clamped, config.max_day_distance))
    return score


def link(
    reconstructed: Sequence[ReconstructedSor],
    filed: Sequence[SorRecord],
    config: LinkConfig | None = None,
) -> Linkage:
    """One-to-one pairing of rebuilt and filed statements.

    puid matches first; the remainder is blocked by (content_type,
    application_date) and greedily matched in descending score with a total
    tie-break, so the result is independent of input order.
    """
    config = config or LinkConfig()

    rec_by_puid: dict[str, ReconstructedSor] = {}
    for rec in reconstructed:
        if rec.puid:
            if rec.puid in rec_by_puid:
                raise LinkageError(f"duplicate puid {rec.puid!r} among reconstructed items")
            rec_by_puid[rec.puid] = rec
    filed_by_puid: dict[str, SorRecord] = {}
    for sor in filed:
        if sor.puid:
            if sor.puid in filed_by_puid:
                raise LinkageError(f"duplicate puid {sor.puid!r} among filed statements")
            filed_by_puid[sor.puid] = sor

    shared = sorted(rec_by_puid.keys() & filed_by_puid.keys())
    pairs: list[tuple[ReconstructedSor, SorRecord]] = [
        (rec_by_puid[p], filed_by_puid[p]) for p in shared
    ]
    linked_rec = {id(r) for r, _ in pairs}
    linked_filed = {id(f) for _, f in pairs}

    rest_rec = [r for r in reconstructed if id(r) not in linked_rec]
    rest_filed = [f for f in filed if id(f) not in linked_filed]

    blocks_rec: dict[tuple[ContentType, date], list[ReconstructedSor]] = {}
    for rec in rest_rec:
        blocks_rec.setdefault((rec.content_type, rec.application_date), []).append(rec)

    candidates: list[tuple[Fraction, str, str, ReconstructedSor, SorRecord]] = []
    for sor in rest_filed:
        block = blocks_rec.get((sor.content_type, sor.application_date))
        if not block:
            continue
        for rec in block:
            if rec.puid and sor.puid:
                continue  # both identities known, and they differ
            score = _pair_score(rec, sor, config)
            if score >= config.threshold:
                candidates.append((score, sor.uuid, rec.content_id, rec, sor))

    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    taken_rec: set[int] = set()
    taken_filed: set[int] = set()
    for _score, _uuid, _cid, rec, sor in candidates:
        if id(rec) in taken_rec or id(sor) in taken_filed:
            continue
        taken_rec.add(id(rec))
        taken_filed.add(id(sor))
        pairs.append((rec, sor))

    unmatched_rec = [r for r in rest_rec if id(r) not in taken_rec]
    unmatched_filed = [f for f in rest_filed if id(f) not in taken_filed]

    pairs.sort(key=lambda p: p[1].uuid)
    unmatched_rec.sort(key=lambda r: r.content_id)
    unmatched_filed.sort(key=lambda f: f.uuid)
    return Linkage(pairs=pairs, unmatched_reconstructed=unmatched_rec, unmatched_filed=unmatched_filed)


# ---------------------------------------------------------------------------
# Diffing
# ---------------------------------------------------------------------------


class VerificationKind(str, Enum):
    CONSISTENT = "consistent"
    OMITTED_SOR = "omitted_sor"
    PHANTOM_SOR = "phantom_sor"
    FIELD_MISMATCH = "field_mismatch"
    LATE_SUBMISSION = "late_submission"


_VKIND_RANK = {k: i for i, k in enumerate(VerificationKind)}

# Fields a platform export can support; everything else (source_type, free
# texts) is excluded from diffing and listed in run metadata instead.
DIFF_FIELDS = (
    "category",
    "decision_type",
    "decision_ground",
    "content_type",
    "automated_detection",
    "automated_decision",
    "content_date",
)
UNDIFFED_FIELDS = (
    "decision_type_other",
    "decision_ground_reference_url",
    "illegal_content_explanation",
    "content_type_other",
    "source_type",
    "created_at",
)

DEFAULT_DEADLINE_DAYS = 7


@dataclass(frozen=True)
class VerificationFinding:
    kind: VerificationKind
    severity: Severity
    content_id: str | None = None
    sor_uuid: str | None = None
    mismatched_fields: tuple[tuple[str, str, str], ...] = ()
    evidence: str = ""

    def to_dict(self) -> dict[str, object]:
        return {
            "kind": self.kind.value,
            "severity": self.severity.value,
            "content_id": self.content_id,
            "sor_uuid": self.sor_uuid,
            "mismatched_fields": [
                {"field": f, "expected": e, "filed": g} for f, e, g in self.mismatched_fields
            ],
            "evidence": self.evidence,
        }


def _render(value: object) -> str:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, date):
        return value.isoformat()
    return str(value)


def sort_verification_findings(findings: list[VerificationFinding]) -> list[VerificationFinding]:
    findings.sort(
        key=lambda f: (
            SEVERITY_RANK[f.severity],
            _VKIND_RANK[f.kind],
            f.content_id or "",
            f.sor_uuid or "",
        )
    )
    return findings


def verify_diff(linkage: Linkage, deadline_days: int = DEFAULT_DEADLINE_DAYS) -> list[VerificationFinding]:
    """Turn linkage output into typed findings.

    A matched pair can raise both a field divergence and a late-submission
    finding; it is CONSISTENT only when neither fires.
    """
    findings: list[VerificationFinding] = []

    for rec in linkage.unmatched_reconstructed:
        findings.append(
            VerificationFinding(
                kind=VerificationKind.OMITTED_SOR,
                severity=Severity.CRITICAL,
                content_id=rec.content_id,
                evidence=(
                    f"moderated content {rec.content_id} "
                    f"({rec.decision_type.value} on {rec.application_date.isoformat()}) "
                    "has no filed statement in the audited window"
                ),
            )
        )
    for sor in linkage.unmatched_filed:
        findings.append(
            VerificationFinding(
                kind=VerificationKind.PHANTOM_SOR,
                severity=Severity.CRITICAL,
                sor_uuid=sor.uuid,
                evidence=(
                    f"filed statement {sor.uuid} "
                    f"({sor.decision_type.value} on {sor.application_date.isoformat()}) "
                    "matches no platform-side moderation action"
                ),
            )
        )

    deadline = timedelta(days=deadline_days)
    for rec, sor in linkage.pairs:
        diffs: list[tuple[str, str, str]] = []
        for name in DIFF_FIELDS:
            expected = getattr(rec, name)
            filed_value = getattr(sor, name)
            if expected != filed_value:
                diffs.append((name, _render(expected), _render(filed_value)))
        clean = True
        if diffs:
            clean = False
            fields = {d[0] for d in diffs}
            severity = Severity.CRITICAL if "automated_decision" in fields else Severity.WARN
            findings.append(
                VerificationFinding(
                    kind=VerificationKind.FIELD_MISMATCH,
                    severity=severity,
                    content_id=rec.content_id,
                    sor_uuid=sor.uuid,
                    mismatched_fields=tuple(diffs),
                    evidence=(
                        f"statement {sor.uuid} diverges from platform data for "
                        f"{rec.content_id} on: " + ", ".join(sorted(fields))
                    ),
                )
            )
        if sor.created_at - rec.moderated_at > deadline:
            clean = False
            lag_days = (sor.created_at - rec.moderated_at) / timedelta(days=1)
            findings.append(
                VerificationFinding(
                    kind=VerificationKind.LATE_SUBMISSION,
                    severity=Severity.WARN,
                    content_id=rec.content_id,
                    sor_uuid=sor.uuid,
                    evidence=(
                        f"statement {sor.uuid} was filed {lag_days:.1f} days after the "
                        f"action, past the {deadline_days}-day deadline"
                    ),
                )
            )
        if clean:
            findings.append(
                VerificationFinding(
                    kind=VerificationKind.CONSISTENT,
                    severity=Severity.INFO,
                    content_id=rec.content_id,
                    sor_uuid=sor.uuid,
                    evidence=f"statement {sor.uuid} is consistent with platform data for {rec.content_id}",
                )
            )

    return sort_verification_findings(findings)
