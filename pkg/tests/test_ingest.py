from __future__ import annotations

import csv
from datetime import date, timedelta

import pytest

from modaudit.ingest import (
    IngestError,
    open_corpus,
    open_platform_export,
    write_dump,
    write_dump_file,
    write_export,
)
from modaudit.sor import FIELD_ORDER, QuarantineReason
from modaudit.verify import EVENT_FIELD_ORDER

from .conftest import make_record, make_row


def write_rows(path, rows, header=FIELD_ORDER):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([row.get(name, "") for name in header])


def records(n, **overrides):
    return [
        make_record(uuid=f"sor-{i:05d}", application_date=date(2024, 1, 5) + timedelta(days=i), **overrides)
        for i in range(n)
    ]


def fix_dates(record):
    # keep content <= application <= created when shifting application dates
    from dataclasses import replace
    from datetime import datetime, timezone

    return replace(
        record,
        content_date=record.application_date - timedelta(days=1),
        created_at=datetime(
            record.application_date.year,
            record.application_date.month,
            record.application_date.day,
            12,
            0,
            0,
            tzinfo=timezone.utc,
        ),
    )


class TestOpenCorpus:
    def test_single_file_all_valid(self, tmp_path, taxonomy):
        recs = [fix_dates(r) for r in records(3)]
        write_dump_file(recs, tmp_path / "a.csv")
        reader = open_corpus(tmp_path, taxonomy)
        out = list(reader)
        assert out == recs
        assert reader.manifest.record_count == 3
        assert reader.manifest.quarantine_count == 0
        assert reader.manifest.date_range == (date(2024, 1, 5), date(2024, 1, 7))

    def test_malformed_row_is_quarantined_not_fatal(self, tmp_path, taxonomy):
        write_rows(tmp_path / "a.csv", [make_row()])
        write_rows(
            tmp_path / "b.csv",
            [make_row(uuid="sor-2"), make_row(uuid="sor-3", decision_type="BOGUS")],
        )
        reader = open_corpus(tmp_path, taxonomy)
        out = list(reader)
        assert [r.uuid for r in out] == ["sor-0000001", "sor-2"]
        assert reader.manifest.record_count == 2
        assert reader.manifest.quarantine_count == 1
        entry = reader.quarantine[0]
        assert entry.reason is QuarantineReason.BAD_ENUM
        assert entry.file == "b.csv"
        assert entry.row_number == 3

    def test_empty_directory(self, tmp_path, taxonomy):
        reader = open_corpus(tmp_path, taxonomy)
        assert list(reader) == []
        assert reader.manifest.record_count == 0
        assert reader.manifest.date_range is None

    def test_files_read_in_name_order(self, tmp_path, taxonomy):
        write_rows(tmp_path / "b.csv", [make_row(uuid="sor-b")])
        write_rows(tmp_path / "a.csv", [make_row(uuid="sor-a")])
        assert [r.uuid for r in open_corpus(tmp_path, taxonomy)] == ["sor-a", "sor-b"]

    def test_two_passes_are_identical(self, tmp_path, taxonomy):
        write_dump([fix_dates(r) for r in records(25)], tmp_path, chunk_size=10)
        reader = open_corpus(tmp_path, taxonomy)
        first = list(reader)
        first_manifest = reader.manifest
        second = list(reader)
        assert first == second
        assert reader.manifest == first_manifest
        assert len(reader.manifest.files) == 3  # 10 + 10 + 5

    def test_partition_merge_preserves_records_and_totals(self, tmp_path, taxonomy):
        recs = [fix_dates(r) for r in records(9)]
        whole = tmp_path / "whole"
        split = tmp_path / "split"
        whole.mkdir()
        split.mkdir()
        write_dump_file(recs, whole / "all.csv")
        write_dump_file(recs[:4], split / "p1.csv")
        write_dump_file(recs[4:], split / "p2.csv")
        reader_whole = open_corpus(whole, taxonomy)
        reader_split = open_corpus(split, taxonomy)
        assert sorted(r.uuid for r in reader_whole) == sorted(r.uuid for r in reader_split)
        mw, ms = reader_whole.manifest, reader_split.manifest
        assert (mw.record_count, mw.quarantine_count, mw.date_range) == (
            ms.record_count,
            ms.quarantine_count,
            ms.date_range,
        )

    def test_unreadable_file_aborts_naming_it(self, tmp_path, taxonomy):
        trap = tmp_path / "oops.csv"
        trap.mkdir()  # a directory with a .csv name: open() fails
        reader = open_corpus(tmp_path, taxonomy)
        with pytest.raises(IngestError, match="oops.csv"):
            list(reader)

    def test_wrong_header_aborts(self, tmp_path, taxonomy):
        (tmp_path / "a.csv").write_text("foo,bar\n1,2\n", encoding="utf-8")
        with pytest.raises(IngestError, match="header"):
            list(open_corpus(tmp_path, taxonomy))

    def test_missing_directory(self, tmp_path, taxonomy):
        with pytest.raises(IngestError):
            open_corpus(tmp_path / "nope", taxonomy)

    def test_quarantine_sink_receives_entries(self, tmp_path, taxonomy):
        write_rows(tmp_path / "a.csv", [make_row(category="")])
        got = []
        reader = open_corpus(tmp_path, taxonomy, got.append)
        assert list(reader) == []
        assert len(got) == 1
        assert reader.quarantine == []  # sink bypasses the local list
        line = got[0].to_json_line()
        assert '"reason": "MISSING_FIELD"' in line


def make_event_row(**overrides):
    row = {
        "content_id": "c-1",
        "puid": "p-1",
        "content_type": "TEXT",
        "content_created": "2024-01-10",
        "moderated_at": "2024-01-12T08:00:00Z",
        "visibility_status": "REMOVED",
        "platform_categories": "hate_speech",
        "automated_detection": "true",
        "automated_decision": "FULLY",
        "annotations": "",
        "payload": "sample <<hate_speech>>",
    }
    row.update(overrides)
    return row


class TestOpenPlatformExport:
    def test_well_formed_events(self, tmp_path):
        path = tmp_path / "export.csv"
        write_rows(
            path,
            [make_event_row(content_id=f"c-{i}", puid=f"p-{i}") for i in range(5)],
            header=EVENT_FIELD_ORDER,
        )
        reader = open_platform_export(path)
        events = list(reader)
        assert [e.content_id for e in events] == [f"c-{i}" for i in range(5)]
        assert reader.event_count == 5
        assert reader.quarantine_count == 0

    def test_moderation_before_creation_is_date_order(self, tmp_path):
        path = tmp_path / "export.csv"
        write_rows(
            path,
            [make_event_row(content_created="2024-01-20")],
            header=EVENT_FIELD_ORDER,
        )
        reader = open_platform_export(path)
        assert list(reader) == []
        assert reader.quarantine[0].reason is QuarantineReason.DATE_ORDER

    def test_caller_side_window_filter(self, tmp_path):
        path = tmp_path / "export.csv"
        rows = [
            make_event_row(content_id=f"c-{i}", puid=f"p-{i}", moderated_at=f"2024-01-{10 + i:02d}T08:00:00Z")
            for i in range(6)
        ]
        write_rows(path, rows, header=EVENT_FIELD_ORDER)
        events = list(open_platform_export(path))
        cutoff = [e for e in events if e.moderated_at.day < 13]
        assert [e.content_id for e in cutoff] == ["c-0", "c-1", "c-2"]

    def test_round_trip_via_writer(self, tmp_path):
        path = tmp_path / "export.csv"
        write_rows(path, [make_event_row()], header=EVENT_FIELD_ORDER)
        events = list(open_platform_export(path))
        back = tmp_path / "back.csv"
        write_export(events, back)
        assert list(open_platform_export(back)) == events
