"""Finding severity scale and deterministic report emission.

Both audit pipelines produce findings with the same surface (kind, severity,
identifiers, evidence); emit_report renders any mix of them to JSON (canonical
machine format), CSV, or a MARKDOWN summary. Identical findings always yield
byte-identical documents.
"""

from __future__ import annotations

import csv
import io
import json
from enum import Enum
from typing import Iterable, Mapping, Sequence


class Severity(str, Enum):
    INFO = "info"
    WARN = "warn"
    CRITICAL = "critical"


SEVERITY_RANK = {Severity.CRITICAL: 0, Severity.WARN: 1, Severity.INFO: 2}
SEVERITY_ORDER = (Severity.CRITICAL, Severity.WARN, Severity.INFO)


def parse_severity(text: str) -> Severity:
    try:
        return Severity(text.lower())
    except ValueError:
        raise ValueError(f"unknown severity {text!r}; expected info, warn, or critical") from None


def meets_threshold(severity: Severity, threshold: Severity) -> bool:
    return SEVERITY_RANK[severity] <= SEVERITY_RANK[threshold]


REPORT_FORMATS = ("json", "csv", "markdown")

# Union of the two finding schemas; absent fields render empty in CSV.
_CSV_COLUMNS = (
    "severity",
    "kind",
    "claim_id",
    "reported_value",
    "computed_value",
    "deviation",
    "relative_deviation",
    "content_id",
    "sor_uuid",
    "mismatched_fields",
    "evidence",
)


def _as_dicts(findings: Iterable[object]) -> list[dict[str, object]]:
    out: list[dict[str, object]] = []
    for f in findings:
        if isinstance(f, Mapping):
            out.append(dict(f))
        else:
            out.append(f.to_dict())  # type: ignore[attr-defined]
    return out


def _severity_counts(rows: Sequence[Mapping[str, object]]) -> dict[str, int]:
    counts = {s.value: 0 for s in SEVERITY_ORDER}
    for row in rows:
        sev = str(row.get("severity", ""))
        if sev in counts:
            counts[sev] += 1
    return counts


def _csv_cell(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, list):  # mismatched_fields
        return ";".join(
            f"{m.get('field')}:{m.get('expected')}->{m.get('filed')}"
            if isinstance(m, Mapping)
            else str(m)
            for m in value
        )
    return str(value)


def emit_report(findings: Iterable[object], format: str = "json") -> str:
    """Render findings (objects with to_dict, or plain dicts) deterministically."""
    if format not in REPORT_FORMATS:
        raise ValueError(f"unknown report format {format!r}; expected one of {REPORT_FORMATS}")
    rows = _as_dicts(findings)

    if format == "json":
        return json.dumps(rows, indent=2, ensure_ascii=False) + "\n"

    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        for row in rows:
            writer.writerow([_csv_cell(row.get(col)) for col in _CSV_COLUMNS])
        return buf.getvalue()

    counts = _severity_counts(rows)
    lines = ["# Audit findings", ""]
    lines.append(
        f"{len(rows)} finding(s): "
        f"{counts['critical']} critical, {counts['warn']} warn, {counts['info']} info."
    )
    lines.append("")
    if rows:
        lines.append("| severity | kind | subject | evidence |")
        lines.append("| --- | --- | --- | --- |")
        for row in rows:
            subject = row.get("claim_id") or row.get("content_id") or row.get("sor_uuid") or ""
            evidence = str(row.get("evidence", "")).replace("|", "\\|")
            lines.append(
                f"| {row.get('severity', '')} | {row.get('kind', '')} | {subject} | {evidence} |"
            )
        lines.append("")
    return "\n".join(lines)
