"""Streaming readers and writers for SoR dump corpora and platform exports.

Readers are single-pass and memory-bounded: rows become typed records as they
stream by, malformed rows go to a quarantine sink, and exact totals land in a
manifest once the pass completes. File order is lexicographic by name and row
order is preserved within a file, so two runs over the same directory produce
identical sequences.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .sor import (
    FIELD_ORDER,
    CategoryTaxonomy,
    QuarantineEntry,
    QuarantineReason,
    SorRecord,
    validate_record,
)
from .verify import EVENT_FIELD_ORDER, ModerationEvent, parse_event_row


class IngestError(RuntimeError):
    """File-level failure: unreadable file or a header that does not match the
    dump format. Row-level problems never raise; they are quarantined."""


@dataclass(frozen=True)
class CorpusManifest:
    files: tuple[str, ...]
    record_count: int
    quarantine_count: int
    date_range: tuple[date, date] | None

    def to_dict(self) -> dict[str, object]:
        return {
            "files": list(self.files),
            "record_count": self.record_count,
            "quarantine_count": self.quarantine_count,
            "date_range": None
            if self.date_range is None
            else [self.date_range[0].isoformat(), self.date_range[1].isoformat()],
        }


def _check_header(header: list[str] | None, expected: tuple[str, ...], path: Path) -> None:
    if header is None or [h.strip() for h in header] != list(expected):
        raise IngestError(f"{path}: header row does not match the expected column order")


def stream_dump_file(
    path: Path,
    taxonomy: CategoryTaxonomy,
    on_quarantine: Callable[[QuarantineEntry], None],
) -> Iterator[SorRecord]:
    """Stream the valid records of one dump file; malformed rows go to the sink."""
    name = path.name
    n_fields = len(FIELD_ORDER)
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            _check_header(header, FIELD_ORDER, path)
            for row in reader:
                if len(row) != n_fields:
                    on_quarantine(
                        QuarantineEntry(
                            reason=QuarantineReason.MISSING_FIELD,
                            field="row_shape",
                            raw_row=dict(zip(FIELD_ORDER, row)),
                            file=name,
                            row_number=reader.line_num,
                        )
                    )
                    continue
                result = validate_record(dict(zip(FIELD_ORDER, row)), taxonomy)
                if isinstance(result, QuarantineEntry):
                    on_quarantine(result.located(name, reader.line_num))
                    continue
                yield result
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc


class CorpusReader:
    """Iterable over every valid SoR record in a dump directory.

    Iterating runs one full streaming pass; the manifest is available once a
    pass has completed. Quarantined rows go to `on_quarantine` when given,
    otherwise they collect on `.quarantine`.
    """

    def __init__(
        self,
        path: str | Path,
        taxonomy: CategoryTaxonomy,
        on_quarantine: Callable[[QuarantineEntry], None] | None = None,
    ) -> None:
        self.root = Path(path)
        if not self.root.is_dir():
            raise IngestError(f"{self.root}: corpus path is not a directory")
        self.taxonomy = taxonomy
        # every .csv entry is claimed corpus content; unreadable ones abort loudly
        self.files = sorted(p for p in self.root.iterdir() if p.suffix == ".csv")
        self._sink = on_quarantine
        self.quarantine: list[QuarantineEntry] = []
        self._manifest: CorpusManifest | None = None

    def __iter__(self) -> Iterator[SorRecord]:
        self._manifest = None
        self.quarantine = []
        record_count = 0
        quarantine_count = 0
        min_date: date | None = None
        max_date: date | None = None

        def quarantined(entry: QuarantineEntry) -> None:
            nonlocal quarantine_count
            quarantine_count += 1
            self._quarantined(entry)

        for path in self.files:
            for result in stream_dump_file(path, self.taxonomy, quarantined):
                record_count += 1
                d = result.application_date
                if min_date is None or d < min_date:
                    min_date = d
                if max_date is None or d > max_date:
                    max_date = d
                yield result

        self._manifest = CorpusManifest(
            files=tuple(p.name for p in self.files),
            record_count=record_count,
            quarantine_count=quarantine_count,
            date_range=None if min_date is None else (min_date, max_date),  # type: ignore[arg-type]
        )

    def _quarantined(self, entry: QuarantineEntry) -> None:
        if self._sink is not None:
            self._sink(entry)
        else:
            self.quarantine.append(entry)

    @property
    def manifest(self) -> CorpusManifest:
        if self._manifest is None:
            raise RuntimeError("manifest is available after a complete pass over the corpus")
        return self._manifest


def open_corpus(
    path: str | Path,
    taxonomy: CategoryTaxonomy,
    on_quarantine: Callable[[QuarantineEntry], None] | None = None,
) -> CorpusReader:
    return CorpusReader(path, taxonomy, on_quarantine)


class ExportReader:
    """Iterable over the moderation events of one platform-export file."""

    def __init__(
        self,
        path: str | Path,
        on_quarantine: Callable[[QuarantineEntry], None] | None = None,
    ) -> None:
        self.path = Path(path)
        if not self.path.is_file():
            raise IngestError(f"{self.path}: export path is not a file")
        self._sink = on_quarantine
        self.quarantine: list[QuarantineEntry] = []
        self.event_count = 0
        self.quarantine_count = 0
        self.moderated_range: tuple[datetime, datetime] | None = None
        self._complete = False

    def __iter__(self) -> Iterator[ModerationEvent]:
        self.quarantine = []
        self.event_count = 0
        self.quarantine_count = 0
        self.moderated_range = None
        self._complete = False
        lo: datetime | None = None
        hi: datetime | None = None
        n_fields = len(EVENT_FIELD_ORDER)
        name = self.path.name
        try:
            with open(self.path, "r", encoding="utf-8", newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                _check_header(header, EVENT_FIELD_ORDER, self.path)
                for row in reader:
                    if len(row) != n_fields:
                        self.quarantine_count += 1
                        self._quarantined(
                            QuarantineEntry(
                                reason=QuarantineReason.MISSING_FIELD,
                                field="row_shape",
                                raw_row=dict(zip(EVENT_FIELD_ORDER, row)),
                                file=name,
                                row_number=reader.line_num,
                            )
                        )
                        continue
                    result = parse_event_row(dict(zip(EVENT_FIELD_ORDER, row)))
                    if isinstance(result, QuarantineEntry):
                        self.quarantine_count += 1
                        self._quarantined(result.located(name, reader.line_num))
                        continue
                    self.event_count += 1
                    t = result.moderated_at
                    if lo is None or t < lo:
                        lo = t
                    if hi is None or t > hi:
                        hi = t
                    yield result
        except OSError as exc:
            raise IngestError(f"cannot read {self.path}: {exc}") from exc
        self.moderated_range = None if lo is None else (lo, hi)  # type: ignore[assignment]
        self._complete = True

    def _quarantined(self, entry: QuarantineEntry) -> None:
        if self._sink is not None:
            self._sink(entry)
        else:
            self.quarantine.append(entry)


def open_platform_export(
    path: str | Path,
    on_quarantine: Callable[[QuarantineEntry], None] | None = None,
) -> ExportReader:
    return ExportReader(path, on_quarantine)


# ---------------------------------------------------------------------------
# Writers (the canonical producers of both CSV formats)
# ---------------------------------------------------------------------------


def write_dump_file(records: Iterable[SorRecord], path: str | Path) -> int:
    """Write one dump CSV file; returns the number of rows written."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FIELD_ORDER)
        for record in records:
            row = record.to_row()
            writer.writerow([row[name] for name in FIELD_ORDER])
            count += 1
    return count


def write_dump(
    records: Iterable[SorRecord], directory: str | Path, chunk_size: int = 50_000
) -> list[Path]:
    """Write records into a dump directory, chunked into part-NNNNN.csv files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    writer = None
    fh = None
    in_chunk = 0
    try:
        for record in records:
            if writer is None or in_chunk >= chunk_size:
                if fh is not None:
                    fh.close()
                part = directory / f"part-{len(paths):05d}.csv"
                paths.append(part)
                fh = open(part, "w", encoding="utf-8", newline="")
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(FIELD_ORDER)
                in_chunk = 0
            row = record.to_row()
            writer.writerow([row[name] for name in FIELD_ORDER])
            in_chunk += 1
    finally:
        if fh is not None:
            fh.close()
    if not paths:  # an empty corpus still needs one well-formed file
        part = directory / "part-00000.csv"
        with open(part, "w", encoding="utf-8", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(FIELD_ORDER)
        paths.append(part)
    return paths


def write_export(events: Iterable[ModerationEvent], path: str | Path) -> int:
    """Write one platform-export CSV file; returns the number of rows."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EVENT_FIELD_ORDER)
        for event in events:
            row = event.to_row()
            writer.writerow([row[name] for name in EVENT_FIELD_ORDER])
            count += 1
    return count
