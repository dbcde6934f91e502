"""Opt-in process parallelism for the replication hot path.

Corpus files are parsed and counted in worker processes; per-file counter
vectors merge by addition, which is associative and commutative, so any
worker count produces exactly the serial results. Quarantine entries come back
in file order.
"""

from __future__ import annotations

from datetime import date
from multiprocessing import get_context
from typing import Sequence

from .aggregate import AggregateResult, CellTally, merge_results, replicate_all
from .claims import Claim
from .ingest import CorpusManifest, CorpusReader, stream_dump_file
from .sor import QuarantineEntry


def _replicate_one_file(payload):
    path, taxonomy, claims, hull = payload
    tally = CellTally(*hull) if hull is not None else None
    quarantine: list[QuarantineEntry] = []
    record_count = 0
    min_date: date | None = None
    max_date: date | None = None

    def counting():
        nonlocal record_count, min_date, max_date
        for record in stream_dump_file(path, taxonomy, quarantine.append):
            record_count += 1
            d = record.application_date
            if min_date is None or d < min_date:
                min_date = d
            if max_date is None or d > max_date:
                max_date = d
            yield record

    results = replicate_all(claims, counting(), cell_tally=tally)
    return (
        results,
        None if tally is None else tally.counts,
        record_count,
        quarantine,
        min_date,
        max_date,
    )


def parallel_replicate(
    reader: CorpusReader,
    claims: Sequence[Claim],
    workers: int,
    cell_tally: CellTally | None = None,
) -> tuple[list[AggregateResult], CorpusManifest, list[QuarantineEntry]]:
    """Replicate claims over a corpus using worker processes, one file per task.

    Returns the merged results, the exact manifest, and all quarantine entries
    (ordered by file, then row). Output is identical to the serial pass for any
    worker count.
    """
    hull = None if cell_tally is None else (cell_tally.hull_start, cell_tally.hull_end)
    payloads = [(path, reader.taxonomy, list(claims), hull) for path in reader.files]

    if workers <= 1 or len(payloads) <= 1:
        parts = [_replicate_one_file(p) for p in payloads]
    else:
        ctx = get_context("spawn")
        with ctx.Pool(processes=min(workers, len(payloads))) as pool:
            parts = pool.map(_replicate_one_file, payloads)

    if not parts:
        results = replicate_all(claims, [], cell_tally=cell_tally)
        manifest = CorpusManifest(files=(), record_count=0, quarantine_count=0, date_range=None)
        return results, manifest, []

    record_count = 0
    quarantine: list[QuarantineEntry] = []
    min_date: date | None = None
    max_date: date | None = None
    for _results, counts, n, q, lo, hi in parts:
        record_count += n
        quarantine.extend(q)
        if lo is not None and (min_date is None or lo < min_date):
            min_date = lo
        if hi is not None and (max_date is None or hi > max_date):
            max_date = hi
        if cell_tally is not None and counts:
            for key, count in counts.items():
                cell_tally.counts[key] = cell_tally.counts.get(key, 0) + count

    results = merge_results([p[0] for p in parts])
    manifest = CorpusManifest(
        files=tuple(p.name for p in reader.files),
        record_count=record_count,
        quarantine_count=len(quarantine),
        date_range=None if min_date is None else (min_date, max_date),  # type: ignore[arg-type]
    )
    return results, manifest, quarantine
