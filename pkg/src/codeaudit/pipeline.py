"""Stage orchestration: resumable batch processing with shared caches.

Every stage processes only units that lack outputs (append-only JSONL
keyed by unit id), logs unit failures without aborting the batch, and
reports processed/skipped/failed counts. Units are handled in sorted
order and results written in input order, so an interrupted run, once
resumed, produces the same final outputs as an uninterrupted one.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Optional

from . import assess as assess_mod
from . import flatten, metrics, report
from .backends import make_backend
from .config import PipelineConfig
from .httpio import HttpClient
from .ingest import (
    ArticleRecord,
    EmptyTextError,
    FullTextClient,
    OaStatus,
    PreprocessError,
    aggregate_citations,
    load_citation_lists,
    preprocess_fulltext,
)
from .links import DoiResolver, Provider, Resolution, ResolvedRepoLink, resolve_link
from .repofetch import (
    FetchStatus,
    KindTable,
    ProviderError,
    RepoFetcher,
    RepoSnapshot,
    default_kind_table,
    has_source_code,
)
from .screening import (
    LinkOutcome,
    PaperAssessment,
    ScreeningFailedError,
    determine_sharing_status,
    screen_article,
)
from .store import (
    append_jsonl,
    atomic_write_json,
    jsonl_index,
    processed_ids,
    read_json,
    read_jsonl,
)

logger = logging.getLogger(__name__)


class MissingInputError(Exception):
    """A predecessor stage's outputs are absent."""

    def __init__(self, stage: str, required_stage: str, path: Path):
        super().__init__(
            f"stage '{stage}' requires outputs of stage '{required_stage}' ({path} missing)"
        )
        self.required_stage = required_stage


@dataclass
class StageSummary:
    stage: str
    processed: int = 0
    skipped: int = 0
    failed: int = 0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "processed": self.processed,
            "skipped": self.skipped,
            "failed": self.failed,
            "details": self.details,
        }


def _require(stage: str, required_stage: str, path: Path) -> None:
    if not path.exists():
        raise MissingInputError(stage, required_stage, path)


def _http_client(cfg: PipelineConfig) -> HttpClient:
    client = HttpClient(
        attempts=cfg.retry_attempts, backoff_base=cfg.retry_backoff_base
    )
    for name, rate in cfg.rate_limits.items():
        client.set_rate_limit(name, rate)
    return client


def _kind_table(cfg: PipelineConfig) -> KindTable:
    if cfg.file_kinds:
        return KindTable.load(Path(cfg.file_kinds))
    return default_kind_table()


def _patterns(cfg: PipelineConfig):
    path = Path(cfg.detector_patterns) if cfg.detector_patterns else None
    return assess_mod.load_detector_patterns(path)


def _map_units(
    cfg: PipelineConfig,
    units: list,
    worker: Callable[[Any], Any],
) -> Iterable[tuple[Any, Any, Optional[Exception]]]:
    """Run worker over units, yielding (unit, result, error) in input order."""

    def safe(unit):
        try:
            return unit, worker(unit), None
        except Exception as exc:  # unit failures never abort the batch
            return unit, None, exc

    if cfg.max_workers <= 1 or len(units) <= 1:
        for unit in units:
            yield safe(unit)
        return
    with ThreadPoolExecutor(max_workers=cfg.max_workers) as pool:
        yield from pool.map(safe, units)


# ---------------------------------------------------------------------------
# Stage: ingest


def run_ingest(cfg: PipelineConfig) -> StageSummary:
    summary = StageSummary("ingest")
    cache = cfg.cache_path
    manifest_path = cache / "manifest.jsonl"
    counts_path = cache / "cohort_counts.json"

    if manifest_path.exists():
        records = {
            aid: ArticleRecord.from_dict(rec)
            for aid, rec in jsonl_index(manifest_path, "article_id").items()
        }
        counts = read_json(counts_path)
    else:
        if not cfg.citation_lists:
            raise MissingInputError("ingest", "input citation lists", Path("citation_lists"))
        lists = load_citation_lists(sorted(Path(cfg.citation_lists).glob("*.txt")))
        manifest = aggregate_citations(lists)
        records = {r.article_id: r for r in manifest.records}
        counts = manifest.counts.to_dict()
        for record in manifest.records:
            append_jsonl(manifest_path, record.to_dict())
        atomic_write_json(counts_path, counts)

    client = _http_client(cfg)
    fulltext = FullTextClient(
        cfg.oa_endpoint,
        cache,
        client=client,
        idconv_template=cfg.idconv_endpoint,
    )
    screening_dir = cache / "screening"
    pending = sorted(
        aid for aid, rec in records.items() if rec.oa_status == OaStatus.PENDING
    )
    summary.skipped = len(records) - len(pending)

    def fetch_one(article_id: str) -> ArticleRecord:
        updated = fulltext.fetch(records[article_id])
        if updated.oa_status == OaStatus.RETRIEVED:
            raw = fulltext.cache_path(article_id).read_bytes()
            text = preprocess_fulltext(raw)
            (screening_dir / f"{article_id}.txt").parent.mkdir(
                parents=True, exist_ok=True
            )
            (screening_dir / f"{article_id}.txt").write_text(text, encoding="utf-8")
        return updated

    for article_id, updated, error in _map_units(cfg, pending, fetch_one):
        if error is not None:
            if isinstance(error, (PreprocessError, EmptyTextError)):
                logger.error("ingest: article %s unpreprocessable: %s", article_id, error)
            else:
                logger.error("ingest: article %s failed: %s", article_id, error)
            summary.failed += 1
            continue
        records[article_id] = updated
        append_jsonl(manifest_path, updated.to_dict())
        summary.processed += 1

    # Recomputed from the manifest so an interrupted run never skews counts.
    counts["not_retrievable"] = sum(
        1 for r in records.values() if r.oa_status == OaStatus.NOT_RETRIEVABLE
    )
    atomic_write_json(counts_path, counts)
    summary.details = dict(counts)
    return summary


# ---------------------------------------------------------------------------
# Stage: screen


def run_screen(cfg: PipelineConfig) -> StageSummary:
    summary = StageSummary("screen")
    manifest_path = cfg.cache_path / "manifest.jsonl"
    _require("screen", "ingest", manifest_path)
    backend = make_backend(cfg.backend)
    if backend is None:
        raise MissingInputError("screen", "an assessor backend (config: backend)", Path("backend"))

    out = cfg.out_path
    assessments_path = out / "paper_assessments.jsonl"
    failures_path = out / "screen_failures.jsonl"
    raw_dir = out / "paper_assessments_raw"
    done = processed_ids(assessments_path, "article_id") | processed_ids(
        failures_path, "article_id"
    )

    records = jsonl_index(manifest_path, "article_id")
    units = sorted(
        aid
        for aid, rec in records.items()
        if rec.get("oa_status") == "retrieved" and aid not in done
    )
    summary.skipped = len(done)

    for article_id in units:
        text_path = cfg.cache_path / "screening" / f"{article_id}.txt"
        try:
            text = text_path.read_text(encoding="utf-8")
            result = screen_article(text, backend)
        except (OSError, ValueError, ScreeningFailedError) as exc:
            logger.error("screen: article %s failed: %s", article_id, exc)
            append_jsonl(
                failures_path, {"article_id": article_id, "reason": str(exc)}
            )
            if isinstance(exc, ScreeningFailedError):
                raw_dir.mkdir(parents=True, exist_ok=True)
                atomic_write_json(
                    raw_dir / f"{article_id}.json",
                    {"attempts": exc.raw_outputs},
                )
            summary.failed += 1
            continue
        raw_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_json(
            raw_dir / f"{article_id}.json", {"attempts": result.raw_outputs}
        )
        append_jsonl(
            assessments_path,
            {
                "article_id": article_id,
                **result.assessment.to_dict(),
                "country_recognized": result.country_recognized,
                "attempts": result.attempts,
            },
        )
        summary.processed += 1
    return summary


# ---------------------------------------------------------------------------
# Stage: resolve


def run_resolve(cfg: PipelineConfig) -> StageSummary:
    summary = StageSummary("resolve")
    assessments_path = cfg.out_path / "paper_assessments.jsonl"
    _require("resolve", "screen", assessments_path)
    links_path = cfg.out_path / "resolved_links.jsonl"
    done = processed_ids(links_path, "article_id")
    summary.skipped = len(done)

    resolver = DoiResolver(_http_client(cfg), base_url=cfg.doi_resolver)
    assessments = jsonl_index(assessments_path, "article_id")
    units = sorted(
        aid
        for aid, rec in assessments.items()
        if rec.get("repo_url") not in (None, "Appendix") and aid not in done
    )

    def resolve_one(article_id: str) -> ResolvedRepoLink:
        return resolve_link(
            assessments[article_id]["repo_url"],
            doi_resolver=resolver,
            extra_hosts=cfg.extra_hosts,
        )

    outcome_counts: dict[str, int] = {}
    for article_id, link, error in _map_units(cfg, units, resolve_one):
        if error is not None:
            logger.error("resolve: article %s failed: %s", article_id, error)
            summary.failed += 1
            continue
        outcome_counts[link.resolution.value] = (
            outcome_counts.get(link.resolution.value, 0) + 1
        )
        append_jsonl(links_path, {"article_id": article_id, **link.to_dict()})
        summary.processed += 1
    summary.details = outcome_counts
    return summary


# ---------------------------------------------------------------------------
# Stage: fetch


def run_fetch(cfg: PipelineConfig) -> StageSummary:
    summary = StageSummary("fetch")
    links_path = cfg.out_path / "resolved_links.jsonl"
    _require("fetch", "resolve", links_path)
    snapshots_path = cfg.out_path / "repo_snapshots.jsonl"
    done = processed_ids(snapshots_path, "article_id")
    summary.skipped = len(done)

    fetcher = RepoFetcher(
        cfg.cache_path,
        client=_http_client(cfg),
        provider_endpoints=cfg.providers,
        kind_table=_kind_table(cfg),
    )
    links = jsonl_index(links_path, "article_id")
    units = sorted(aid for aid in links if aid not in done)
    counts = {"ok": 0, "unsupported": 0, "unresolved": 0}

    def fetch_one(article_id: str) -> Optional[RepoSnapshot]:
        row = links[article_id]
        if row["resolution"] != Resolution.OK.value:
            return None
        link = ResolvedRepoLink(
            original_url=row["original_url"],
            provider=Provider(row["provider"]) if row.get("provider") else None,
            canonical_root=row["canonical_root"],
            resolution=Resolution(row["resolution"]),
            via_doi=row.get("via_doi", False),
        )
        return fetcher.fetch_repository(link)

    for article_id, snapshot, error in _map_units(cfg, units, fetch_one):
        row = links[article_id]
        if error is not None:
            logger.error("fetch: article %s failed: %s", article_id, error)
            summary.failed += 1
            continue
        if snapshot is None:
            category = (
                "unsupported"
                if row["resolution"] == Resolution.UNSUPPORTED_PROVIDER.value
                else "unresolved"
            )
            counts[category] += 1
            append_jsonl(
                snapshots_path,
                {
                    "article_id": article_id,
                    "canonical_root": row["canonical_root"],
                    "resolution": row["resolution"],
                    "fetch_status": None,
                    "has_source": None,
                },
            )
            summary.processed += 1
            continue
        ok = snapshot.fetch_status == FetchStatus.OK
        counts["ok" if ok else "unresolved"] += 1
        append_jsonl(
            snapshots_path,
            {
                "article_id": article_id,
                "canonical_root": snapshot.canonical_root,
                "resolution": row["resolution"],
                "fetch_status": snapshot.fetch_status.value,
                "ref_label": snapshot.ref_label,
                "retrieved_at": snapshot.retrieved_at,
                "has_source": has_source_code(snapshot) if ok else None,
                "snapshot_manifest": str(
                    fetcher.snapshot_dir(
                        ResolvedRepoLink(
                            row["original_url"],
                            snapshot.provider,
                            snapshot.canonical_root,
                            Resolution.OK,
                        )
                    )
                    / "snapshot.json"
                ),
            },
        )
        summary.processed += 1
    summary.details = counts
    return summary


# ---------------------------------------------------------------------------
# Stage: compile


def run_compile(cfg: PipelineConfig) -> StageSummary:
    summary = StageSummary("compile")
    snapshots_path = cfg.out_path / "repo_snapshots.jsonl"
    _require("compile", "fetch", snapshots_path)
    index_path = cfg.out_path / "compiled_index.jsonl"
    done = processed_ids(index_path, "canonical_root")
    summary.skipped = len(done)

    compiled_dir = cfg.cache_path / "compiled"
    seen: set[str] = set(done)
    for row in sorted(
        read_jsonl(snapshots_path), key=lambda r: str(r.get("canonical_root"))
    ):
        root = row.get("canonical_root")
        if not root or root in seen or row.get("fetch_status") != "ok":
            continue
        seen.add(root)
        try:
            snapshot = RepoSnapshot.from_dict(read_json(row["snapshot_manifest"]))
            compiled = flatten.compile_repo(snapshot)
            doc_path = flatten.write_compiled(compiled, compiled_dir)
        except Exception as exc:
            logger.error("compile: %s failed: %s", root, exc)
            summary.failed += 1
            continue
        append_jsonl(
            index_path,
            {
                "canonical_root": root,
                "compiled_txt": str(doc_path),
                "snapshot_manifest": row["snapshot_manifest"],
                "total_tokens": compiled.total_tokens,
            },
        )
        summary.processed += 1
    return summary


# ---------------------------------------------------------------------------
# Stage: assess


def run_assess(cfg: PipelineConfig) -> StageSummary:
    summary = StageSummary("assess")
    index_path = cfg.out_path / "compiled_index.jsonl"
    _require("assess", "compile", index_path)
    assessments_path = cfg.out_path / "repo_assessments.jsonl"
    prov_dir = cfg.out_path / "repo_assessments_prov"
    raw_dir = cfg.out_path / "repo_assessments_raw"
    done = processed_ids(assessments_path, "canonical_root")
    summary.skipped = len(done)

    backend = make_backend(cfg.backend)
    patterns = _patterns(cfg)
    table = _kind_table(cfg)
    index = jsonl_index(index_path, "canonical_root")
    units = sorted(root for root in index if root not in done)

    for root in units:
        try:
            snapshot = RepoSnapshot.from_dict(
                read_json(index[root]["snapshot_manifest"])
            )
            compiled = flatten.compile_repo(snapshot)
            static_values, prov = assess_mod.detect_static_features(
                snapshot, compiled, patterns, table
            )
            backend_record = None
            raw_outputs: list[str] = []
            if backend is not None:
                compiled_for_backend = assess_mod.compile_for_backend(
                    snapshot, backend, compiled, prov
                )
                backend_record, raw_outputs = assess_mod.assess_with_backend(
                    compiled_for_backend, backend
                )
            merged, prov = assess_mod.merge_assessments(
                static_values, backend_record, prov
            )
        except Exception as exc:
            logger.error("assess: %s failed: %s", root, exc)
            summary.failed += 1
            continue
        base = flatten.compiled_basename(root)
        prov_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_json(prov_dir / f"{base}.json", prov.to_dict())
        if raw_outputs:
            raw_dir.mkdir(parents=True, exist_ok=True)
            atomic_write_json(raw_dir / f"{base}.json", {"attempts": raw_outputs})
        append_jsonl(assessments_path, {"canonical_root": root, **merged})
        summary.processed += 1
    return summary


# ---------------------------------------------------------------------------
# Stage: evaluate


def run_evaluate(cfg: PipelineConfig) -> StageSummary:
    summary = StageSummary("evaluate")
    out = cfg.out_path
    metrics_dir = out / "metrics"
    metrics_dir.mkdir(parents=True, exist_ok=True)

    if "articles" in cfg.annotations:
        assessments_path = out / "paper_assessments.jsonl"
        _require("evaluate", "screen", assessments_path)
        gold = jsonl_index(Path(cfg.annotations["articles"]), "article_id")
        pred = jsonl_index(assessments_path, "article_id")
        scope_report = metrics.evaluate_label_field(
            {k: pred[k]["is_match"] for k in gold if k in pred},
            {k: bool(rec["is_match"]) for k, rec in gold.items()},
            label_names={True: "In scope", False: "Out of scope"},
        )
        gold_links = {k: rec.get("repo_url") for k, rec in gold.items()}
        if any(gold_links.values()):
            scope_report.extra["link_retrieval_accuracy"] = metrics.link_retrieval_accuracy(
                {k: pred.get(k, {}).get("repo_url") for k in gold},
                gold_links,
                extra_hosts=cfg.extra_hosts,
            )
        atomic_write_json(metrics_dir / "articles_metrics.json", scope_report.to_dict())
        (metrics_dir / "articles_metrics.txt").write_text(
            metrics.render_metric_table(scope_report, "Article screening"),
            encoding="utf-8",
        )
        summary.processed += 1

    if "repositories" in cfg.annotations:
        assessments_path = out / "repo_assessments.jsonl"
        _require("evaluate", "assess", assessments_path)
        gold_rows = list(read_jsonl(Path(cfg.annotations["repositories"])))
        id_field = "canonical_root" if gold_rows and "canonical_root" in gold_rows[0] else "article_id"
        gold = {str(r[id_field]): r for r in gold_rows}
        pred = jsonl_index(assessments_path, id_field) if id_field == "canonical_root" else {}
        if id_field == "article_id":
            by_root = jsonl_index(assessments_path, "canonical_root")
            snapshots = jsonl_index(out / "repo_snapshots.jsonl", "article_id")
            pred = {
                aid: by_root[snapshots[aid]["canonical_root"]]
                for aid in gold
                if aid in snapshots and snapshots[aid].get("canonical_root") in by_root
            }
        feature_report = metrics.evaluate_features(
            pred, gold, report.RUBRIC_FEATURES
        )
        atomic_write_json(
            metrics_dir / "repositories_metrics.json", feature_report.to_dict()
        )
        (metrics_dir / "repositories_metrics.txt").write_text(
            metrics.render_metric_table(feature_report, "Repository characterization"),
            encoding="utf-8",
        )
        summary.processed += 1

    if summary.processed == 0:
        raise MissingInputError(
            "evaluate", "annotation files (config: annotations)", Path("annotations")
        )
    return summary


# ---------------------------------------------------------------------------
# Stage: report


def build_sharing_statuses(cfg: PipelineConfig) -> tuple[dict, dict, int]:
    """(statuses for in-scope articles, assessment rows, out-of-scope count)."""
    out = cfg.out_path
    assessments = jsonl_index(out / "paper_assessments.jsonl", "article_id")
    links = jsonl_index(out / "resolved_links.jsonl", "article_id")
    snapshots = jsonl_index(out / "repo_snapshots.jsonl", "article_id")
    statuses: dict[str, str] = {}
    n_out_of_scope = 0
    for article_id, rec in assessments.items():
        if not rec.get("is_match"):
            n_out_of_scope += 1
            continue
        assessment = PaperAssessment(
            is_match=True,
            reason=rec.get("reason", ""),
            country_first_author_institution=rec.get(
                "country_first_author_institution", "not reported"
            ),
            repo_url=rec.get("repo_url"),
            code_statement_locations=(
                tuple(rec["code_statement_locations"])
                if rec.get("code_statement_locations")
                else None
            ),
            code_statement_sentence=rec.get("code_statement_sentence"),
        )
        outcome = None
        if assessment.repo_url and assessment.repo_url != "Appendix":
            link_row = links.get(article_id)
            snap_row = snapshots.get(article_id)
            if link_row is None:
                continue  # resolve stage has not covered this article yet
            outcome = LinkOutcome(
                resolution=Resolution(link_row["resolution"]),
                fetch_status=(
                    FetchStatus(snap_row["fetch_status"])
                    if snap_row and snap_row.get("fetch_status")
                    else None
                ),
                has_source=snap_row.get("has_source") if snap_row else None,
            )
        statuses[article_id] = determine_sharing_status(assessment, outcome).value
    return statuses, assessments, n_out_of_scope


def run_report(cfg: PipelineConfig) -> StageSummary:
    summary = StageSummary("report")
    out = cfg.out_path
    manifest_path = cfg.cache_path / "manifest.jsonl"
    _require("report", "ingest", manifest_path)
    _require("report", "screen", out / "paper_assessments.jsonl")

    records = jsonl_index(manifest_path, "article_id")
    counts = read_json(cfg.cache_path / "cohort_counts.json")
    statuses, assessments, n_out_of_scope = build_sharing_statuses(cfg)
    n_failed = len(processed_ids(out / "screen_failures.jsonl", "article_id"))

    articles_meta = {
        aid: {
            "publication_year": rec.get("publication_year"),
            "journal": rec.get("journal"),
            "country_first_author_institution": assessments.get(aid, {}).get(
                "country_first_author_institution"
            ),
            "source_entries": rec.get("source_entries", []),
        }
        for aid, rec in records.items()
    }

    repo_assessments = list(read_jsonl(out / "repo_assessments.jsonl"))
    snapshots = jsonl_index(out / "repo_snapshots.jsonl", "article_id")
    by_root = {r["canonical_root"]: r for r in repo_assessments}
    # Article-level join: each sharing article contributes its repo verdict.
    joined_repo_records = []
    for article_id, snap in snapshots.items():
        root = snap.get("canonical_root")
        if root in by_root and statuses.get(article_id) == "shares_repository":
            joined_repo_records.append(
                {
                    **by_root[root],
                    "article_id": article_id,
                    "publication_year": articles_meta.get(article_id, {}).get(
                        "publication_year"
                    ),
                    "journal": articles_meta.get(article_id, {}).get("journal"),
                }
            )

    tables: dict[str, Any] = {
        "prisma_flow": report.prisma_flow(counts, n_out_of_scope, n_failed, statuses),
        "share_by_year": report.share_by_year(articles_meta, statuses),
        "share_by_country": report.share_by_group(
            articles_meta, statuses, "country", cfg.min_group_n
        ),
        "share_by_journal": report.share_by_group(
            articles_meta, statuses, "journal", cfg.min_group_n
        ),
        "statement_stats": report.statement_stats(
            [assessments[aid] for aid in sorted(assessments)]
        ),
        "feature_prevalence": report.feature_prevalence(joined_repo_records),
        "language_by_year": report.language_distribution(
            joined_repo_records, cfg.min_language_repos, cfg.min_year_repos
        ),
        "language_totals": report.overall_language_counts(joined_repo_records),
        "journal_profiles": report.journal_profiles(
            joined_repo_records, cfg.min_journal_repos
        ),
    }
    if cfg.entry_groups:
        tables["share_by_year_split"] = report.share_by_year(
            articles_meta, statuses, cfg.entry_groups, split_by_guideline=True
        )
    report.emit_reports(out, tables)
    summary.processed = len(tables)
    summary.details = {"share_pct": tables["prisma_flow"]["share_pct"]}
    return summary


# ---------------------------------------------------------------------------


STAGE_RUNNERS = {
    "ingest": run_ingest,
    "screen": run_screen,
    "resolve": run_resolve,
    "fetch": run_fetch,
    "compile": run_compile,
    "assess": run_assess,
    "evaluate": run_evaluate,
    "report": run_report,
}


def run_stage(stage: str, cfg: PipelineConfig) -> StageSummary:
    if stage not in STAGE_RUNNERS:
        raise ValueError(f"unknown stage {stage!r}")
    summary = STAGE_RUNNERS[stage](cfg)
    logger.info(
        "stage %s: processed=%d skipped=%d failed=%d",
        stage, summary.processed, summary.skipped, summary.failed,
    )
    return summary


def run_audit(url: str, cfg: PipelineConfig) -> dict:
    """Resolve, fetch, compile and assess a single repository URL.

    Writes the full result (link, snapshot summary, assessment,
    provenance) under <out>/audit/ and returns it. Idempotent: the warm
    cache makes a second run byte-identical.
    """
    client = _http_client(cfg)
    resolver = DoiResolver(client, base_url=cfg.doi_resolver)
    link = resolve_link(url, doi_resolver=resolver, extra_hosts=cfg.extra_hosts)
    result: dict[str, Any] = {"url": url, "link": link.to_dict()}
    if link.resolution != Resolution.OK:
        result["outcome"] = link.resolution.value
        _write_audit(cfg, url, result)
        return result

    fetcher = RepoFetcher(
        cfg.cache_path,
        client=client,
        provider_endpoints=cfg.providers,
        kind_table=_kind_table(cfg),
    )
    try:
        snapshot = fetcher.fetch_repository(link)
    except ProviderError as exc:
        result["outcome"] = "provider_error"
        result["error"] = str(exc)
        _write_audit(cfg, url, result)
        return result
    result["snapshot"] = {
        "fetch_status": snapshot.fetch_status.value,
        "ref_label": snapshot.ref_label,
        "retrieved_at": snapshot.retrieved_at,
        "n_files": len(snapshot.files),
    }
    if snapshot.fetch_status != FetchStatus.OK:
        result["outcome"] = snapshot.fetch_status.value
        _write_audit(cfg, url, result)
        return result

    compiled = flatten.compile_repo(snapshot)
    flatten.write_compiled(compiled, cfg.cache_path / "compiled")
    result["snapshot"]["has_source"] = has_source_code(snapshot)
    static_values, prov = assess_mod.detect_static_features(
        snapshot, compiled, _patterns(cfg), _kind_table(cfg)
    )
    backend = make_backend(cfg.backend)
    backend_record = None
    if backend is not None:
        compiled_for_backend = assess_mod.compile_for_backend(
            snapshot, backend, compiled, prov
        )
        backend_record, raw_outputs = assess_mod.assess_with_backend(
            compiled_for_backend, backend
        )
        result["raw_outputs"] = raw_outputs
    merged, prov = assess_mod.merge_assessments(static_values, backend_record, prov)
    result["assessment"] = merged
    result["provenance"] = prov.to_dict()
    result["outcome"] = "assessed"
    _write_audit(cfg, url, result)
    return result


def _write_audit(cfg: PipelineConfig, url: str, result: dict) -> None:
    base = flatten.compiled_basename(url)
    atomic_write_json(cfg.out_path / "audit" / f"{base}.json", result)
