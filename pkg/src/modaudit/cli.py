"""Command-line driver wiring the audit pipelines.

Every data-touching subcommand persists its run under <out>/<run_id>/ with
fixed file names (findings.json, quarantine.log, manifest.json, run.json);
run.json is written last and only on successful completion. Findings files are
byte-identical across runs over identical inputs.

Exit codes: 0 completed with no findings at or above the severity threshold,
1 completed with such findings, 2 usage or config error, 3 input error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import secrets
import sys
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable, Sequence

from .aggregate import CellTally, Period, replicate_all
from .claims import ClaimsError, load_claims, resolve_categories
from .crosscheck import ToleranceSpec, cross_check, finalize_results
from .ingest import IngestError, open_corpus, open_platform_export
from .parallel import parallel_replicate
from .report import REPORT_FORMATS, Severity, emit_report, meets_threshold, parse_severity
from .sor import CategoryTaxonomy, TaxonomyError, default_taxonomy, informativeness_profile
from .synth import ScenarioConfig, ScenarioError, generate
from .verify import (
    DEFAULT_DEADLINE_DAYS,
    DIFF_FIELDS,
    UNDIFFED_FIELDS,
    KeywordClassifier,
    LinkConfig,
    link,
    reconstruct,
    verify_diff,
)


class ConfigError(Exception):
    pass


class InputError(Exception):
    pass


@dataclass
class AppConfig:
    taxonomy: CategoryTaxonomy
    taxonomy_path: Path | None
    tolerance: ToleranceSpec
    link: LinkConfig
    deadline_days: int
    severity_threshold: Severity
    parallel: int = 1
    extra_inputs: list[Path] = field(default_factory=list)


def _resolve_config(args: argparse.Namespace) -> AppConfig:
    """Precedence: flags > config file > defaults."""
    file_data: dict = {}
    extra_inputs: list[Path] = []
    config_path = getattr(args, "config", None)
    if config_path:
        path = Path(config_path)
        try:
            file_data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(file_data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        extra_inputs.append(path)

    taxonomy_arg = getattr(args, "taxonomy", None) or file_data.get("taxonomy")
    taxonomy_path: Path | None = None
    if taxonomy_arg:
        taxonomy_path = Path(taxonomy_arg)
        try:
            taxonomy = CategoryTaxonomy.from_file(taxonomy_path)
        except OSError as exc:
            raise InputError(f"cannot read taxonomy {taxonomy_path}: {exc}") from None
        except (TaxonomyError, json.JSONDecodeError) as exc:
            raise InputError(f"bad taxonomy {taxonomy_path}: {exc}") from None
    else:
        taxonomy = default_taxonomy()

    try:
        tolerance = ToleranceSpec.from_dict(file_data.get("tolerance", {}) or {})
        link_config = LinkConfig.from_dict(file_data.get("linkage", {}) or {})
        deadline_days = int(file_data.get("deadline_days", DEFAULT_DEADLINE_DAYS))
        threshold_text = getattr(args, "severity_threshold", None) or file_data.get(
            "severity_threshold", "warn"
        )
        threshold = parse_severity(str(threshold_text))
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None

    return AppConfig(
        taxonomy=taxonomy,
        taxonomy_path=taxonomy_path,
        tolerance=tolerance,
        link=link_config,
        deadline_days=deadline_days,
        severity_threshold=threshold,
        parallel=max(1, int(getattr(args, "parallel", 1) or 1)),
        extra_inputs=extra_inputs,
    )


def _config_snapshot(config: AppConfig) -> dict[str, object]:
    return {
        "taxonomy": str(config.taxonomy_path) if config.taxonomy_path else "<builtin>",
        "tolerance": {
            "absolute_floor": config.tolerance.absolute_floor,
            "relative": config.tolerance.relative,
            "rounding_aware": config.tolerance.rounding_aware,
            "approximate_relative": config.tolerance.approximate_relative,
        },
        "linkage": {
            "category_weight": str(config.link.category_weight),
            "decision_weight": str(config.link.decision_weight),
            "time_weight": str(config.link.time_weight),
            "threshold": str(config.link.threshold),
            "max_day_distance": config.link.max_day_distance,
        },
        "deadline_days": config.deadline_days,
        "severity_threshold": config.severity_threshold.value,
        "parallel": config.parallel,
    }


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass(frozen=True)
class AuditRunRecord:
    """Provenance of one audit run; persisted as run.json, last, and only on
    successful completion (findings still count as success)."""

    run_id: str
    timestamp: str
    command: list[str]
    config: dict
    input_digests: dict[str, str]
    manifest: dict | None
    finding_counts: dict[str, int]
    outputs: dict[str, dict[str, str]]  # name -> {path, sha256}

    def to_dict(self) -> dict[str, object]:
        return {
            "run_id": self.run_id,
            "timestamp": self.timestamp,
            "command": self.command,
            "config": self.config,
            "input_digests": self.input_digests,
            "manifest": self.manifest,
            "finding_counts": self.finding_counts,
            "outputs": self.outputs,
        }


class RunDir:
    """Audit-run persistence: fixed file names, run.json written once, last."""

    def __init__(self, out_base: str | Path, command: Sequence[str]) -> None:
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
        self.run_id = f"{stamp}-{secrets.token_hex(3)}"
        self.path = Path(out_base) / self.run_id
        self.path.mkdir(parents=True, exist_ok=False)
        self.command = list(command)
        self.inputs: list[Path] = []
        self._output_paths: dict[str, Path] = {}
        self._quarantine_fh = None
        self.quarantine_count = 0

    def track_inputs(self, *paths: Path) -> None:
        self.inputs.extend(paths)

    def quarantine_sink(self) -> Callable:
        log_path = self.path / "quarantine.log"
        self._quarantine_fh = open(log_path, "w", encoding="utf-8")
        self._output_paths["quarantine.log"] = log_path

        def sink(entry) -> None:
            self.quarantine_count += 1
            self._quarantine_fh.write(entry.to_json_line() + "\n")

        return sink

    def write(self, name: str, text: str) -> Path:
        target = self.path / name
        target.write_text(text, encoding="utf-8")
        self._output_paths[name] = target
        return target

    def finish(self, config: AppConfig, manifest: dict | None, finding_counts: dict[str, int]) -> None:
        if self._quarantine_fh is not None:
            self._quarantine_fh.close()
            self._quarantine_fh = None
        outputs = {
            name: {"path": str(path), "sha256": _sha256(path)}
            for name, path in sorted(self._output_paths.items())
        }
        record = AuditRunRecord(
            run_id=self.run_id,
            timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            command=self.command,
            config=_config_snapshot(config),
            input_digests={str(p): _sha256(p) for p in sorted(set(self.inputs))},
            manifest=manifest,
            finding_counts=finding_counts,
            outputs=outputs,
        )
        (self.path / "run.json").write_text(
            json.dumps(record.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _finding_counts(findings) -> dict[str, int]:
    counts = {"critical": 0, "warn": 0, "info": 0}
    for f in findings:
        counts[f.severity.value] += 1
    return counts


def _exit_for(findings, threshold: Severity) -> int:
    flagged = sum(1 for f in findings if meets_threshold(f.severity, threshold))
    return 1 if flagged else 0


def _corpus_inputs(reader) -> list[Path]:
    return list(reader.files)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_validate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    run = RunDir(args.out, ["validate", str(args.corpus)])
    reader = open_corpus(args.corpus, config.taxonomy, run.quarantine_sink())
    for _ in reader:
        pass
    manifest = reader.manifest.to_dict()
    run.write("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    run.track_inputs(*_corpus_inputs(reader), *config.extra_inputs)
    run.finish(config, manifest, {"critical": 0, "warn": 0, "info": 0})
    print(
        f"validated {manifest['record_count']} record(s), "
        f"quarantined {manifest['quarantine_count']} row(s) -> {run.path}"
    )
    return 0


def _cmd_profile(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    run = RunDir(args.out, ["profile", str(args.corpus)])
    reader = open_corpus(args.corpus, config.taxonomy, run.quarantine_sink())
    profile = informativeness_profile(reader)
    manifest = reader.manifest.to_dict()
    run.write("profile.json", json.dumps(profile.to_dict(), indent=2, sort_keys=True) + "\n")
    run.write("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    run.track_inputs(*_corpus_inputs(reader), *config.extra_inputs)
    run.finish(config, manifest, {"critical": 0, "warn": 0, "info": 0})
    print(f"profiled {manifest['record_count']} record(s) -> {run.path}")
    return 0


def _load_claimset(path: str) -> object:
    try:
        return load_claims(path)
    except OSError as exc:
        raise InputError(f"cannot read claims file {path}: {exc}") from None
    except ClaimsError as exc:
        raise InputError(str(exc)) from None


def _replicate(config: AppConfig, claimset, reader, quarantine_sink: Callable):
    """Shared replicate/crosscheck core; honours config.parallel."""
    resolved, unresolvable = resolve_categories(claimset, config.taxonomy)
    replicable = [c for c in resolved if c.claim_id not in unresolvable]
    tally = CellTally.for_claims(list(resolved.claims)) if resolved.exhaustive else None

    if config.parallel > 1:
        results, manifest, quarantine = parallel_replicate(
            reader, replicable, config.parallel, cell_tally=tally
        )
        for entry in quarantine:
            quarantine_sink(entry)
        coverage = manifest.date_range
    else:
        results = replicate_all(replicable, reader, cell_tally=tally)
        manifest = reader.manifest
        coverage = manifest.date_range

    final = finalize_results(resolved, unresolvable, results, coverage)
    return resolved, final, tally, manifest


def _cmd_replicate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    claimset = _load_claimset(args.claims)
    run = RunDir(args.out, ["replicate", str(args.corpus), str(args.claims)])
    sink = run.quarantine_sink()
    reader = open_corpus(args.corpus, config.taxonomy, sink)
    _resolved, results, _tally, manifest = _replicate(config, claimset, reader, sink)
    run.write(
        "results.json",
        json.dumps([r.to_dict() for r in results], indent=2, sort_keys=True) + "\n",
    )
    run.write("manifest.json", json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    run.track_inputs(*_corpus_inputs(reader), Path(args.claims), *config.extra_inputs)
    run.finish(config, manifest.to_dict(), {"critical": 0, "warn": 0, "info": 0})
    print(f"replicated {len(results)} claim(s) -> {run.path}")
    return 0


def _write_findings(run: RunDir, findings, fmt: str) -> None:
    run.write("findings.json", emit_report(findings, "json"))
    if fmt != "json":
        suffix = "md" if fmt == "markdown" else fmt
        run.write(f"findings.{suffix}", emit_report(findings, fmt))


def _cmd_crosscheck(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    claimset = _load_claimset(args.claims)
    run = RunDir(args.out, ["crosscheck", str(args.corpus), str(args.claims)])
    sink = run.quarantine_sink()
    reader = open_corpus(args.corpus, config.taxonomy, sink)
    resolved, results, tally, manifest = _replicate(config, claimset, reader, sink)
    findings = cross_check(resolved, results, config.tolerance, cell_tally=tally)
    _write_findings(run, findings, args.format)
    run.write("manifest.json", json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    run.track_inputs(*_corpus_inputs(reader), Path(args.claims), *config.extra_inputs)
    counts = _finding_counts(findings)
    run.finish(config, manifest.to_dict(), counts)
    print(
        f"cross-check: {counts['critical']} critical, {counts['warn']} warn, "
        f"{counts['info']} info -> {run.path}"
    )
    return _exit_for(findings, config.severity_threshold)


def _parse_window(args: argparse.Namespace, events) -> Period:
    if args.window_start and args.window_end:
        try:
            return Period.parse({"start": args.window_start, "end": args.window_end})
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if args.window_start or args.window_end:
        raise ConfigError("--window-start and --window-end must be given together")
    if not events:
        raise InputError("export holds no events and no window was given")
    lo = min(e.moderated_at for e in events).date()
    hi = max(e.moderated_at for e in events).date()
    return Period(start=lo, end=hi + timedelta(days=1), field="application_date")


def _cmd_verify(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    run = RunDir(args.out, ["verify", str(args.export), str(args.corpus)])
    sink = run.quarantine_sink()

    export_reader = open_platform_export(args.export, sink)
    events = list(export_reader)
    window = _parse_window(args, events)

    classifier = KeywordClassifier.from_taxonomy(config.taxonomy)
    reconstructed = reconstruct(events, classifier, window)

    corpus_reader = open_corpus(args.corpus, config.taxonomy, sink)
    filed = [
        r
        for r in corpus_reader
        if window.contains_date(r.application_date)
        and (not args.platform or r.platform_name == args.platform)
    ]

    linkage = link(reconstructed, filed, config.link)
    findings = verify_diff(linkage, config.deadline_days)
    _write_findings(run, findings, args.format)
    manifest = {
        "export": {
            "events": export_reader.event_count,
            "quarantined": export_reader.quarantine_count,
        },
        "corpus": corpus_reader.manifest.to_dict(),
        "window": window.to_json(),
        "reconstructed": len(reconstructed),
        "filed_in_window": len(filed),
        "diffed_fields": list(DIFF_FIELDS),
        "undiffed_fields": list(UNDIFFED_FIELDS),
    }
    run.write("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    run.track_inputs(Path(args.export), *_corpus_inputs(corpus_reader), *config.extra_inputs)
    counts = _finding_counts(findings)
    run.finish(config, manifest, counts)
    print(
        f"verify: {counts['critical']} critical, {counts['warn']} warn, "
        f"{counts['info']} info -> {run.path}"
    )
    return _exit_for(findings, config.severity_threshold)


def _cmd_synth(args: argparse.Namespace) -> int:
    try:
        config = ScenarioConfig.from_file(args.scenario)
        if args.seed is not None:
            config = ScenarioConfig.from_dict({**config.to_dict(), "seed": args.seed})
        artifacts = generate(config, args.out)
    except OSError as exc:
        raise InputError(f"cannot read scenario file {args.scenario}: {exc}") from None
    except (ScenarioError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"bad scenario config: {exc}") from None
    print(
        f"scenario written: export={artifacts.export_path} dump={artifacts.dump_dir} "
        f"claims={artifacts.claims_path} ground-truth={artifacts.ground_truth_path}"
    )
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.findings)
    try:
        rows = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read findings file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"findings file {path} is not valid JSON: {exc}") from None
    if not isinstance(rows, list):
        raise InputError(f"findings file {path} must hold a JSON array")
    sys.stdout.write(emit_report(rows, args.format))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modaudit",
        description="Batch auditing of content-moderation transparency data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, *, fmt: bool = True) -> None:
        p.add_argument("--taxonomy", help="category taxonomy JSON file")
        p.add_argument("--config", help="declarative config JSON file")
        p.add_argument("--out", default="runs", help="directory for run output (default: runs)")
        p.add_argument(
            "--severity-threshold",
            choices=[s.value for s in Severity],
            help="lowest severity that drives a nonzero exit code (default: warn)",
        )
        p.add_argument("--parallel", type=int, default=1, help="worker processes (default: 1)")
        if fmt:
            p.add_argument(
                "--format", choices=REPORT_FORMATS, default="json", help="extra findings format"
            )

    p = sub.add_parser("validate", help="ingest a corpus and report quarantine stats")
    p.add_argument("--corpus", required=True, help="SoR dump directory")
    common(p, fmt=False)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("profile", help="attribute fill-rate report over a corpus")
    p.add_argument("--corpus", required=True)
    common(p, fmt=False)
    p.set_defaults(func=_cmd_profile)

    p = sub.add_parser("replicate", help="replicate claims against a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--claims", required=True, help="claims JSON file")
    common(p, fmt=False)
    p.set_defaults(func=_cmd_replicate)

    p = sub.add_parser("crosscheck", help="compare report claims with replicated aggregates")
    p.add_argument("--corpus", required=True)
    p.add_argument("--claims", required=True)
    common(p)
    p.set_defaults(func=_cmd_crosscheck)

    p = sub.add_parser("verify", help="verify filed statements against a platform export")
    p.add_argument("--corpus", required=True)
    p.add_argument("--export", required=True, help="platform export CSV")
    p.add_argument("--platform", help="restrict filed statements to one platform name")
    p.add_argument("--window-start", help="audit window start date (YYYY-MM-DD)")
    p.add_argument("--window-end", help="audit window end date, exclusive (YYYY-MM-DD)")
    common(p)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--scenario", required=True, help="scenario config JSON")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", default="scenario-out", help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("report", help="render a findings JSON file")
    p.add_argument("findings", help="findings.json produced by crosscheck or verify")
    p.add_argument("--format", choices=REPORT_FORMATS, default="markdown")
    p.set_defaults(func=_cmd_report)

    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InputError, IngestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
