"""Claim replication: evaluate report predicates over record streams and compute
the aggregate each claim asserts, in one pass and with exact arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from enum import Enum
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .sor import (
    AutomatedDecision,
    ContentType,
    DecisionGround,
    DecisionType,
    SorRecord,
    SourceType,
    parse_date,
)

if TYPE_CHECKING:  # pragma: no cover
    from .claims import Claim


class PredicateError(ValueError):
    pass


class PeriodError(ValueError):
    pass


# Filterable record attributes and how their literals parse. Category and
# platform_name are open string domains; the rest are closed enums.
_ENUM_ATTRS = {
    "decision_type": DecisionType,
    "decision_ground": DecisionGround,
    "content_type": ContentType,
    "automated_decision": AutomatedDecision,
    "source_type": SourceType,
}
_STRING_ATTRS = ("category", "platform_name")
FILTERABLE_ATTRIBUTES = tuple(_ENUM_ATTRS) + _STRING_ATTRS + ("automated_detection",)


def _parse_literal(attr: str, value: object) -> object:
    if attr in _ENUM_ATTRS:
        enum_cls = _ENUM_ATTRS[attr]
        try:
            return enum_cls(str(value))
        except ValueError:
            raise PredicateError(f"{value!r} is not a valid {attr} value") from None
    if attr == "automated_detection":
        if isinstance(value, bool):
            return value
        if value in ("true", "false"):
            return value == "true"
        raise PredicateError(f"{value!r} is not a valid automated_detection value")
    if not isinstance(value, str) or value == "":
        raise PredicateError(f"{attr} literal must be a non-empty string, got {value!r}")
    return value


@dataclass(frozen=True)
class Predicate:
    """Conjunction of membership tests over record attributes.

    An empty conjunct list is TRUE. Disjunctions across attributes are out of
    scope; a multi-valued conjunct expresses attribute-level alternatives.
    """

    conjuncts: tuple[tuple[str, frozenset], ...] = ()

    @classmethod
    def parse(cls, raw: Mapping[str, object]) -> "Predicate":
        conjuncts: list[tuple[str, frozenset]] = []
        for attr in sorted(raw):
            if attr not in FILTERABLE_ATTRIBUTES:
                raise PredicateError(f"unknown filter attribute {attr!r}")
            value = raw[attr]
            values = value if isinstance(value, (list, tuple)) else [value]
            if not values:
                raise PredicateError(f"empty value set for attribute {attr!r}")
            parsed = frozenset(_parse_literal(attr, v) for v in values)
            conjuncts.append((attr, parsed))
        return cls(conjuncts=tuple(conjuncts))

    @property
    def is_true(self) -> bool:
        return not self.conjuncts

    def matches(self, record: SorRecord) -> bool:
        for attr, allowed in self.conjuncts:
            if getattr(record, attr) not in allowed:
                return False
        return True

    def allows(self, attr: str, value: object) -> bool:
        """Whether a record carrying this attribute value could satisfy the
        predicate (used for report-coverage checks)."""
        for name, allowed in self.conjuncts:
            if name == attr:
                return value in allowed
        return True

    def to_json(self) -> dict[str, object]:
        out: dict[str, object] = {}
        for attr, allowed in self.conjuncts:
            rendered = sorted(
                v.value if isinstance(v, Enum) else ("true" if v is True else "false" if v is False else v)
                for v in allowed
            )
            out[attr] = rendered[0] if len(rendered) == 1 else rendered
        return out

    def replace_values(self, attr: str, mapper) -> "Predicate":
        """Predicate with attr's literals rewritten through mapper (raises KeyError
        via mapper for unmappable values)."""
        conjuncts = []
        for name, allowed in self.conjuncts:
            if name == attr:
                allowed = frozenset(mapper(v) for v in allowed)
            conjuncts.append((name, allowed))
        return Predicate(conjuncts=tuple(conjuncts))


PERIOD_FIELDS = ("application_date", "content_date", "created_at")


@dataclass(frozen=True)
class Period:
    """Half-open date window [start, end) over one of the record's dates."""

    start: date
    end: date
    field: str = "application_date"

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise PeriodError(f"period start {self.start} must precede end {self.end}")
        if self.field not in PERIOD_FIELDS:
            raise PeriodError(f"unknown period field {self.field!r}")

    @classmethod
    def parse(cls, raw: Mapping[str, object]) -> "Period":
        try:
            start = parse_date(str(raw["start"]))
            end = parse_date(str(raw["end"]))
        except KeyError as exc:
            raise PeriodError(f"period is missing {exc.args[0]!r}") from None
        except ValueError as exc:
            raise PeriodError(str(exc)) from None
        field = str(raw.get("field", "application_date"))
        return cls(start=start, end=end, field=field)

    def record_date(self, record: SorRecord) -> date:
        if self.field == "application_date":
            return record.application_date
        if self.field == "content_date":
            return record.content_date
        return record.created_at.date()

    def contains(self, record: SorRecord) -> bool:
        d = self.record_date(record)
        return self.start <= d < self.end

    def contains_date(self, d: date) -> bool:
        return self.start <= d < self.end

    def intersects(self, lo: date, hi: date) -> bool:
        """Overlap with the closed date range [lo, hi]."""
        return self.start <= hi and lo < self.end

    def to_json(self) -> dict[str, str]:
        return {"start": self.start.isoformat(), "end": self.end.isoformat(), "field": self.field}


class ResultStatus(str, Enum):
    OK = "ok"
    UNDEFINED = "undefined"
    UNREPLICABLE = "unreplicable"


@dataclass(frozen=True)
class AggregateResult:
    """Replicated value for one claim. computed_value is exact: an int for
    counts, a Fraction for shares, None when UNDEFINED or UNREPLICABLE."""

    claim_id: str
    computed_value: int | Fraction | None
    matched_count: int
    denominator_count: int | None = None
    status: ResultStatus = ResultStatus.OK
    note: str = ""

    @classmethod
    def unreplicable(cls, claim_id: str, note: str) -> "AggregateResult":
        return cls(
            claim_id=claim_id,
            computed_value=None,
            matched_count=0,
            denominator_count=None,
            status=ResultStatus.UNREPLICABLE,
            note=note,
        )

    def to_dict(self) -> dict[str, object]:
        value: object
        if self.computed_value is None:
            value = None
        elif isinstance(self.computed_value, Fraction):
            value = float(self.computed_value)
        else:
            value = self.computed_value
        return {
            "claim_id": self.claim_id,
            "computed_value": value,
            "matched_count": self.matched_count,
            "denominator_count": self.denominator_count,
            "status": self.status.value,
            "note": self.note,
        }


class CellTally:
    """Per (category, decision_type) activity counter, used for coverage checks
    of exhaustive claim sets. Rides along the single replication pass."""

    def __init__(self, hull_start: date, hull_end: date) -> None:
        self.hull_start = hull_start
        self.hull_end = hull_end
        self.counts: dict[tuple[str, DecisionType], int] = {}

    @classmethod
    def for_claims(cls, claims: Sequence["Claim"]) -> "CellTally | None":
        periods = [c.period for c in claims]
        if not periods:
            return None
        return cls(min(p.start for p in periods), max(p.end for p in periods))

    def add(self, record: SorRecord) -> None:
        if self.hull_start <= record.application_date < self.hull_end:
            key = (record.category, record.decision_type)
            self.counts[key] = self.counts.get(key, 0) + 1


class _Counter:
    __slots__ = ("claim", "period", "tests", "den_tests", "matched", "denominator", "is_share")

    def __init__(self, claim: "Claim") -> None:
        self.claim = claim
        self.period = claim.period
        self.tests = claim.predicate.conjuncts
        self.den_tests = claim.denominator_predicate.conjuncts if claim.denominator_predicate else None
        self.is_share = self.den_tests is not None
        self.matched = 0
        self.denominator = 0

    def result(self) -> AggregateResult:
        if not self.is_share:
            return AggregateResult(
                claim_id=self.claim.claim_id,
                computed_value=self.matched,
                matched_count=self.matched,
            )
        if self.denominator == 0:
            return AggregateResult(
                claim_id=self.claim.claim_id,
                computed_value=None,
                matched_count=self.matched,
                denominator_count=0,
                status=ResultStatus.UNDEFINED,
                note="share denominator matched no records",
            )
        return AggregateResult(
            claim_id=self.claim.claim_id,
            computed_value=Fraction(self.matched, self.denominator),
            matched_count=self.matched,
            denominator_count=self.denominator,
        )


def replicate_all(
    claims: Sequence["Claim"],
    records: Iterable[SorRecord],
    cell_tally: CellTally | None = None,
) -> list[AggregateResult]:
    """Replicate every claim in a single pass over the stream.

    All claim counters (and the optional coverage tally) advance per record;
    results come back ordered by claim_id.
    """
    seen: set[str] = set()
    for claim in claims:
        if claim.claim_id in seen:
            raise PredicateError(f"duplicate claim_id {claim.claim_id!r}")
        seen.add(claim.claim_id)

    counters = [_Counter(c) for c in claims]
    if counters or cell_tally is not None:
        for record in records:
            if cell_tally is not None:
                cell_tally.add(record)
            for counter in counters:
                period = counter.period
                d = (
                    record.application_date
                    if period.field == "application_date"
                    else record.content_date
                    if period.field == "content_date"
                    else record.created_at.date()
                )
                if d < period.start or d >= period.end:
                    continue
                ok = True
                for attr, allowed in counter.tests:
                    if getattr(record, attr) not in allowed:
                        ok = False
                        break
                if ok:
                    counter.matched += 1
                if counter.den_tests is not None:
                    ok = True
                    for attr, allowed in counter.den_tests:
                        if getattr(record, attr) not in allowed:
                            ok = False
                            break
                    if ok:
                        counter.denominator += 1
    results = [c.result() for c in counters]
    results.sort(key=lambda r: r.claim_id)
    return results


def replicate_claim(claim: "Claim", records: Iterable[SorRecord]) -> AggregateResult:
    """Single-claim convenience wrapper over replicate_all."""
    return replicate_all([claim], records)[0]


def merge_results(parts: Iterable[Sequence[AggregateResult]]) -> list[AggregateResult]:
    """Merge per-partition replication results by adding counters.

    Associative and commutative, so any parallel partitioning of the record
    stream yields identical totals.
    """
    acc: dict[str, dict[str, object]] = {}
    order: list[str] = []
    share: dict[str, bool] = {}
    for part in parts:
        for res in part:
            if res.status is ResultStatus.UNREPLICABLE:
                raise ValueError("cannot merge unreplicable results")
            slot = acc.get(res.claim_id)
            if slot is None:
                acc[res.claim_id] = {"matched": res.matched_count, "den": res.denominator_count}
                share[res.claim_id] = res.denominator_count is not None
                order.append(res.claim_id)
            else:
                slot["matched"] = slot["matched"] + res.matched_count  # type: ignore[operator]
                if res.denominator_count is not None:
                    slot["den"] = (slot["den"] or 0) + res.denominator_count  # type: ignore[operator]
    merged: list[AggregateResult] = []
    for claim_id in order:
        matched = acc[claim_id]["matched"]
        den = acc[claim_id]["den"]
        if not share[claim_id]:
            merged.append(AggregateResult(claim_id=claim_id, computed_value=matched, matched_count=matched))  # type: ignore[arg-type]
        elif not den:
            merged.append(
                AggregateResult(
                    claim_id=claim_id,
                    computed_value=None,
                    matched_count=matched,  # type: ignore[arg-type]
                    denominator_count=0,
                    status=ResultStatus.UNDEFINED,
                    note="share denominator matched no records",
                )
            )
        else:
            merged.append(
                AggregateResult(
                    claim_id=claim_id,
                    computed_value=Fraction(matched, den),  # type: ignore[arg-type]
                    matched_count=matched,  # type: ignore[arg-type]
                    denominator_count=den,  # type: ignore[arg-type]
                )
            )
    merged.sort(key=lambda r: r.claim_id)
    return merged
