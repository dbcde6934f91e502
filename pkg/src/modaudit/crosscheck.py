"""Report cross-checking: compare each claim's reported value with its
replicated aggregate under a tolerance policy and emit typed findings.

This is an internal-coherence check. A finding never says which side is wrong,
only that the two self-reported sources disagree.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .aggregate import AggregateResult, CellTally, ResultStatus, replicate_all
from .claims import Claim, ClaimSet, Metric, Precision, floor_log10, resolve_categories
from .report import SEVERITY_RANK, Severity
from .sor import CategoryTaxonomy, SorRecord


class PipelineError(RuntimeError):
    """Wiring bug: the results handed to cross_check do not cover the claims."""


@dataclass(frozen=True)
class ToleranceSpec:
    """How much slack a reported value gets before it counts as a mismatch.

    rounding_aware grants ROUNDED(d) values half a unit in their last
    significant digit; approximate_relative replaces relative for hedged
    values.
    """

    absolute_floor: float = 0.0
    relative: float = 0.0
    rounding_aware: bool = True
    approximate_relative: float = 0.05

    def __post_init__(self) -> None:
        if self.absolute_floor < 0 or self.relative < 0 or self.approximate_relative < 0:
            raise ValueError("tolerance fields must be non-negative")
        if self.approximate_relative < self.relative:
            raise ValueError("approximate_relative must be at least relative")

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "ToleranceSpec":
        return cls(
            absolute_floor=float(data.get("absolute_floor", 0.0)),  # type: ignore[arg-type]
            relative=float(data.get("relative", 0.0)),  # type: ignore[arg-type]
            rounding_aware=bool(data.get("rounding_aware", True)),
            approximate_relative=float(data.get("approximate_relative", 0.05)),  # type: ignore[arg-type]
        )


def tolerance_bound(
    value: int | Fraction | float, precision: Precision, spec: ToleranceSpec
) -> Fraction:
    """Maximum accepted |reported - computed| for a reported value."""
    v = Fraction(str(value)) if isinstance(value, float) else Fraction(value)
    if v < 0:
        raise ValueError("tolerance_bound needs a non-negative value")
    relative = spec.approximate_relative if precision.kind == "approximate" else spec.relative
    bound = max(Fraction(str(spec.absolute_floor)), Fraction(str(relative)) * v)
    if precision.kind == "rounded" and spec.rounding_aware and v > 0:
        half_ulp = Fraction(1, 2) * Fraction(10) ** (floor_log10(v) - (precision.digits or 1) + 1)
        bound = max(bound, half_ulp)
    return bound


class FindingKind(str, Enum):
    MATCH = "match"
    MISMATCH = "mismatch"
    MISSING_IN_DB = "missing_in_db"
    MISSING_IN_REPORT = "missing_in_report"
    UNREPLICABLE = "unreplicable"


_KIND_RANK = {k: i for i, k in enumerate(FindingKind)}


@dataclass(frozen=True)
class Finding:
    kind: FindingKind
    severity: Severity
    claim_id: str | None = None
    reported_value: int | Fraction | None = None
    computed_value: int | Fraction | None = None
    deviation: Fraction | None = None
    relative_deviation: Fraction | None = None
    evidence: str = ""

    def to_dict(self) -> dict[str, object]:
        def num(x: int | Fraction | None) -> object:
            if x is None:
                return None
            if isinstance(x, Fraction):
                return int(x) if x.denominator == 1 else float(x)
            return x

        return {
            "kind": self.kind.value,
            "severity": self.severity.value,
            "claim_id": self.claim_id,
            "reported_value": num(self.reported_value),
            "computed_value": num(self.computed_value),
            "deviation": num(self.deviation),
            "relative_deviation": None
            if self.relative_deviation is None
            else float(self.relative_deviation),
            "evidence": self.evidence,
        }


def sort_findings(findings: list[Finding]) -> list[Finding]:
    findings.sort(
        key=lambda f: (
            SEVERITY_RANK[f.severity],
            _KIND_RANK[f.kind],
            f.claim_id is None,
            f.claim_id or "",
            f.evidence,
        )
    )
    return findings


def _check_one(claim: Claim, result: AggregateResult, spec: ToleranceSpec) -> Finding:
    locator = claim.source_locator
    if result.status is ResultStatus.UNREPLICABLE:
        return Finding(
            kind=FindingKind.UNREPLICABLE,
            severity=Severity.WARN,
            claim_id=claim.claim_id,
            reported_value=claim.reported_value,
            evidence=f"claim {claim.claim_id} could not be replicated: {result.note} [{locator}]",
        )
    if result.status is ResultStatus.UNDEFINED:
        return Finding(
            kind=FindingKind.UNREPLICABLE,
            severity=Severity.WARN,
            claim_id=claim.claim_id,
            reported_value=claim.reported_value,
            evidence=(
                f"claim {claim.claim_id} share is undefined: "
                f"denominator matched no records [{locator}]"
            ),
        )

    reported = Fraction(claim.reported_value)
    computed = Fraction(result.computed_value)  # type: ignore[arg-type]
    deviation = abs(reported - computed)
    bound = tolerance_bound(claim.reported_value, claim.precision, spec)
    largest = max(reported, computed)
    relative = None if largest == 0 else deviation / largest

    if deviation <= bound:
        return Finding(
            kind=FindingKind.MATCH,
            severity=Severity.INFO,
            claim_id=claim.claim_id,
            reported_value=claim.reported_value,
            computed_value=result.computed_value,
            deviation=deviation,
            relative_deviation=relative,
            evidence=(
                f"reported {claim.value_text} agrees with computed {result.computed_value} "
                f"within tolerance {float(bound):g} [{locator}]"
            ),
        )

    if claim.metric is Metric.COUNT and computed == 0 and reported > 0:
        return Finding(
            kind=FindingKind.MISSING_IN_DB,
            severity=Severity.CRITICAL,
            claim_id=claim.claim_id,
            reported_value=claim.reported_value,
            computed_value=result.computed_value,
            deviation=deviation,
            relative_deviation=relative,
            evidence=(
                f"report states {claim.value_text} but the database holds no matching "
                f"records at all [{locator}]"
            ),
        )

    zero_vs_nonzero = (reported == 0) != (computed == 0)
    severity = (
        Severity.CRITICAL
        if zero_vs_nonzero or (relative is not None and relative > Fraction(1, 2))
        else Severity.WARN
    )
    return Finding(
        kind=FindingKind.MISMATCH,
        severity=severity,
        claim_id=claim.claim_id,
        reported_value=claim.reported_value,
        computed_value=result.computed_value,
        deviation=deviation,
        relative_deviation=relative,
        evidence=(
            f"reported {claim.value_text} vs computed "
            f"{float(computed) if computed.denominator != 1 else int(computed)}; "
            f"deviation {float(deviation):g} exceeds tolerance {float(bound):g} [{locator}]"
        ),
    )


def cross_check(
    claims: ClaimSet,
    results: Sequence[AggregateResult],
    spec: ToleranceSpec | None = None,
    cell_tally: CellTally | None = None,
) -> list[Finding]:
    """Compare every claim against its replicated result.

    Results must cover exactly the claim ids in `claims` (unreplicable ones
    included, carrying their marker); anything else is a wiring bug, not data.
    For exhaustive claim sets a cell tally turns uncovered database activity
    into MISSING_IN_REPORT findings.
    """
    spec = spec or ToleranceSpec()
    by_id = {r.claim_id: r for r in results}
    if len(by_id) != len(results):
        raise PipelineError("duplicate claim_id among results")

    findings: list[Finding] = []
    for claim in claims:
        result = by_id.pop(claim.claim_id, None)
        if result is None:
            raise PipelineError(f"no replication result for claim {claim.claim_id!r}")
        findings.append(_check_one(claim, result, spec))
    if by_id:
        raise PipelineError(f"results for unknown claims: {sorted(by_id)}")

    if claims.exhaustive and cell_tally is not None:
        for (category, decision_type), count in sorted(
            cell_tally.counts.items(), key=lambda kv: (kv[0][0], kv[0][1].value)
        ):
            if count == 0:
                continue
            covered = any(
                c.predicate.allows("category", category)
                and c.predicate.allows("decision_type", decision_type)
                for c in claims
            )
            if not covered:
                findings.append(
                    Finding(
                        kind=FindingKind.MISSING_IN_REPORT,
                        severity=Severity.WARN,
                        computed_value=count,
                        evidence=(
                            f"database shows {count} action(s) for category={category} "
                            f"decision_type={decision_type.value} but no claim covers them"
                        ),
                    )
                )

    return sort_findings(findings)


def finalize_results(
    resolved: ClaimSet,
    unresolvable: Mapping[str, str],
    results: Sequence[AggregateResult],
    coverage: tuple[date, date] | None,
) -> list[AggregateResult]:
    """Complete a replication result set: unresolvable-category claims get an
    UNREPLICABLE marker, and claims whose period misses the corpus coverage
    entirely are downgraded to UNREPLICABLE with a period-gap note."""
    by_id = {r.claim_id: r for r in results}
    final: list[AggregateResult] = []
    for claim in resolved:
        if claim.claim_id in unresolvable:
            final.append(
                AggregateResult.unreplicable(
                    claim.claim_id,
                    f"category label {unresolvable[claim.claim_id]!r} is not in the taxonomy",
                )
            )
            continue
        result = by_id[claim.claim_id]
        if coverage is not None and not claim.period.intersects(*coverage):
            result = AggregateResult.unreplicable(
                claim.claim_id,
                (
                    f"claim period [{claim.period.start}, {claim.period.end}) lies outside "
                    f"corpus coverage [{coverage[0]}, {coverage[1]}] (period gap)"
                ),
            )
        final.append(result)
    final.sort(key=lambda r: r.claim_id)
    return final


def run_crosscheck(
    claimset: ClaimSet,
    records: Iterable[SorRecord],
    taxonomy: CategoryTaxonomy,
    spec: ToleranceSpec | None = None,
    coverage: tuple[date, date] | None = None,
) -> tuple[list[Finding], list[AggregateResult]]:
    """Full cross-checking pipeline over an already-open record stream.

    Claims with unresolvable category labels are not replicated; coverage
    defaults to the manifest of a CorpusReader stream, known after the pass.
    """
    resolved, unresolvable = resolve_categories(claimset, taxonomy)
    replicable = [c for c in resolved if c.claim_id not in unresolvable]
    tally = CellTally.for_claims(list(resolved.claims)) if resolved.exhaustive else None

    results = replicate_all(replicable, records, cell_tally=tally)

    if coverage is None:
        manifest = getattr(records, "manifest", None)
        if manifest is not None and manifest.date_range is not None:
            coverage = manifest.date_range

    final = finalize_results(resolved, unresolvable, results, coverage)
    findings = cross_check(resolved, final, spec, cell_tally=tally)
    return findings, final
