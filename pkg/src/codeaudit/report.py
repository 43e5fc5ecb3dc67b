"""Cohort-level aggregation of screening and repository assessments.

Pure single-pass tabulations with stable sort keys: identical inputs give
byte-identical tables. Percentages are rounded half-up to one decimal at
emission only. Denominator choices for conditional rubric features are
stated in emitted footnotes: README completeness and version constraints
are reported over all characterized repositories (absent counts as
false), seed fixing over repositories with stochastic components only.
"""

from __future__ import annotations

import csv
import io
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from .screening import SHARING, SharingStatus
from .store import atomic_write_json, atomic_write_text

RUBRIC_FEATURES = (
    "contains_readme",
    "readme_purpose_and_outputs",
    "contains_requirements",
    "requirements_dependency_versions",
    "contains_license",
    "sufficient_code_documentation",
    "is_modular_and_structured",
    "implements_tests",
    "fixes_seed_if_stochastic",
    "lists_hardware_requirements",
    "contains_link_to_paper",
    "contains_citation",
    "includes_data_or_sample",
)

CONDITIONAL_DENOMINATOR_FEATURES = frozenset({"fixes_seed_if_stochastic"})

STATEMENT_LOCATIONS = (
    "abstract",
    "introduction",
    "methods",
    "results",
    "discussion",
    "data_availability_section",
    "code_availability_section",
    "supplementary_material",
    "other",
)


def round_pct(numerator: float, denominator: float, decimals: int = 1) -> float:
    """Percentage rounded half-up, the convention used throughout."""
    if denominator == 0:
        raise ValueError("zero denominator")
    quantum = Decimal(10) ** -decimals
    value = Decimal(numerator) * 100 / Decimal(denominator)
    return float(value.quantize(quantum, rounding=ROUND_HALF_UP))


def is_sharing(status: SharingStatus | str) -> bool:
    return SharingStatus(status) in SHARING


def share_by_year(
    articles: Mapping[str, Mapping[str, Any]],
    statuses: Mapping[str, SharingStatus | str],
    entry_groups: Optional[Mapping[str, str]] = None,
    split_by_guideline: bool = False,
) -> list[dict]:
    """Per-year sharing ratios; optionally split by cited guideline.

    In split mode an article belongs to the group every one of its source
    entries maps to; articles citing both guidelines are excluded, as in
    the cohort figures. Articles without a year land in an "unknown" row.
    """
    rows: dict[tuple, dict] = {}
    for article_id, meta in articles.items():
        if article_id not in statuses:
            continue
        year = meta.get("publication_year")
        year_key = year if year is not None else "unknown"
        groups: Sequence[Optional[str]]
        if split_by_guideline:
            if not entry_groups:
                raise ValueError("split mode requires an entry-to-guideline mapping")
            cited = {
                entry_groups.get(entry)
                for entry in meta.get("source_entries", ())
                if entry_groups.get(entry)
            }
            if len(cited) != 1:
                continue  # dual citers (or unmapped) are excluded from the split
            groups = [next(iter(cited))]
        else:
            groups = [None]
        for group in groups:
            key = (year_key, group)
            row = rows.setdefault(
                key,
                {"year": year_key, "guideline": group, "n_articles": 0, "n_sharing": 0},
            )
            row["n_articles"] += 1
            if is_sharing(statuses[article_id]):
                row["n_sharing"] += 1
    out = []
    for key in sorted(rows, key=lambda k: (str(k[0]), str(k[1]))):
        row = rows[key]
        row["share_pct"] = round_pct(row["n_sharing"], row["n_articles"])
        if not split_by_guideline:
            row.pop("guideline")
        out.append(row)
    return out


def share_by_group(
    articles: Mapping[str, Mapping[str, Any]],
    statuses: Mapping[str, SharingStatus | str],
    key: str,
    min_n: int = 10,
) -> list[dict]:
    """Sharing ratio per country or journal.

    Groups with n <= min_n are excluded ("more than" is strict); rows are
    sorted by share_pct descending, then n descending, then name.
    """
    if key not in ("country", "journal"):
        raise ValueError("group key must be 'country' or 'journal'")
    if min_n < 0:
        raise ValueError("min_n must be >= 0")
    field = "country_first_author_institution" if key == "country" else "journal"
    groups: dict[str, dict] = {}
    for article_id, meta in articles.items():
        if article_id not in statuses:
            continue
        name = meta.get(field) or "not reported"
        row = groups.setdefault(name, {"group": name, "n": 0, "n_sharing": 0})
        row["n"] += 1
        if is_sharing(statuses[article_id]):
            row["n_sharing"] += 1
    out = []
    for row in groups.values():
        if row["n"] <= min_n:
            continue
        row["share_pct"] = round_pct(row["n_sharing"], row["n"])
        out.append(row)
    out.sort(key=lambda r: (-r["share_pct"], -r["n"], r["group"]))
    return out


def statement_stats(assessments: Iterable[Mapping[str, Any]]) -> dict:
    """Statement locations, per-article statement counts, exact phrasings.

    Restricted to assessments that carry a repository reference. Sentence
    frequencies are case-sensitive exact-string counts.
    """
    location_counts = {loc: 0 for loc in STATEMENT_LOCATIONS}
    histogram: dict[int, int] = {}
    sentences: dict[str, int] = {}
    for record in assessments:
        if not record.get("repo_url"):
            continue
        locations = record.get("code_statement_locations") or []
        for loc in locations:
            if loc in location_counts:
                location_counts[loc] += 1
        n = len(locations)
        if n:
            histogram[n] = histogram.get(n, 0) + 1
        sentence = record.get("code_statement_sentence")
        if sentence:
            sentences[sentence] = sentences.get(sentence, 0) + 1
    total_with_statements = sum(histogram.values())
    histogram_rows = [
        {
            "statements": k,
            "n_articles": v,
            "pct": round_pct(v, total_with_statements) if total_with_statements else 0.0,
        }
        for k, v in sorted(histogram.items())
    ]
    n_phrasings = len(sentences)
    singletons = sum(1 for c in sentences.values() if c == 1)
    frequency = [
        {"sentence": s, "occurrences": c}
        for s, c in sorted(sentences.items(), key=lambda kv: (-kv[1], kv[0]))
    ]
    return {
        "location_counts": location_counts,
        "statements_per_article": histogram_rows,
        "sentence_frequency": frequency,
        "singleton_phrasing_pct": (
            round_pct(singletons, n_phrasings) if n_phrasings else 0.0
        ),
    }


def feature_prevalence(repo_assessments: Sequence[Mapping[str, Any]]) -> list[dict]:
    """Per-feature prevalence over characterized (non-empty) repositories.

    Unconditional features and the two README/requirements completeness
    features use all repositories as the denominator (absent counts as
    false); seed fixing is computed over stochastic repositories only.
    """
    records = [r for r in repo_assessments if not r.get("is_empty")]
    total = len(records)
    rows = []
    for feature in RUBRIC_FEATURES:
        if feature in CONDITIONAL_DENOMINATOR_FEATURES:
            defined = [r for r in records if r.get(feature) is not None]
            numerator = sum(1 for r in defined if r.get(feature) is True)
            denominator = len(defined)
        else:
            numerator = sum(1 for r in records if r.get(feature) is True)
            denominator = total
        rows.append(
            {
                "feature": feature,
                "numerator": numerator,
                "denominator": denominator,
                "pct": round_pct(numerator, denominator) if denominator else 0.0,
            }
        )
    return rows


def language_distribution(
    repo_records: Sequence[Mapping[str, Any]],
    min_repos_per_language: int = 5,
    min_repos_per_year: int = 5,
) -> list[dict]:
    """(year, language, count) rows; a k-language repo counts once per language.

    Languages must appear in strictly more than min_repos_per_language
    repositories overall; years with fewer than min_repos_per_year
    repositories are excluded.
    """
    if min_repos_per_language < 0 or min_repos_per_year < 0:
        raise ValueError("thresholds must be >= 0")
    overall: dict[str, int] = {}
    per_year_repos: dict[Any, int] = {}
    for rec in repo_records:
        year = rec.get("publication_year")
        per_year_repos[year] = per_year_repos.get(year, 0) + 1
        for lang in rec.get("coding_languages") or []:
            overall[lang] = overall.get(lang, 0) + 1
    kept_languages = {l for l, c in overall.items() if c > min_repos_per_language}
    kept_years = {y for y, c in per_year_repos.items() if c >= min_repos_per_year}
    counts: dict[tuple, int] = {}
    for rec in repo_records:
        year = rec.get("publication_year")
        if year not in kept_years:
            continue
        for lang in set(rec.get("coding_languages") or []):
            if lang in kept_languages:
                counts[(year, lang)] = counts.get((year, lang), 0) + 1
    return [
        {"year": year, "language": lang, "count": counts[(year, lang)]}
        for year, lang in sorted(counts, key=lambda k: (str(k[0]), -counts[k], k[1]))
    ]


def overall_language_counts(repo_records: Sequence[Mapping[str, Any]]) -> list[dict]:
    counts: dict[str, int] = {}
    for rec in repo_records:
        for lang in set(rec.get("coding_languages") or []):
            counts[lang] = counts.get(lang, 0) + 1
    return [
        {"language": lang, "count": counts[lang]}
        for lang in sorted(counts, key=lambda l: (-counts[l], l))
    ]


def journal_profiles(
    repo_records: Sequence[Mapping[str, Any]],
    min_repos: int = 5,
) -> dict:
    """Per-journal per-feature percentages plus deviation from the global mean.

    The global baseline is the mean across the same feature set over all
    characterized repositories. Journals with more than min_repos
    repositories are included.
    """
    if min_repos < 0:
        raise ValueError("min_repos must be >= 0")
    records = [r for r in repo_records if not r.get("is_empty")]

    def feature_pcts(rows: Sequence[Mapping[str, Any]]) -> dict[str, float]:
        out = {}
        for row in feature_prevalence(rows):
            if row["denominator"]:
                out[row["feature"]] = row["pct"]
        return out

    global_pcts = feature_pcts(records)
    global_mean = (
        sum(global_pcts.values()) / len(global_pcts) if global_pcts else 0.0
    )
    by_journal: dict[str, list] = {}
    for rec in records:
        by_journal.setdefault(rec.get("journal") or "not reported", []).append(rec)
    profiles = []
    for journal in sorted(by_journal):
        rows = by_journal[journal]
        if len(rows) <= min_repos:
            continue
        pcts = feature_pcts(rows)
        mean = sum(pcts.values()) / len(pcts) if pcts else 0.0
        profiles.append(
            {
                "journal": journal,
                "n_repos": len(rows),
                "features": pcts,
                "mean_pct": round(mean, 1),
                "deviation_from_global": round(mean - global_mean, 1),
            }
        )
    profiles.sort(key=lambda p: (-p["mean_pct"], p["journal"]))
    return {
        "global_mean_pct": round(global_mean, 1),
        "footnote": "global mean computed over all characterized repositories",
        "journals": profiles,
    }


def prisma_flow(
    cohort_counts: Mapping[str, int],
    n_out_of_scope: int,
    n_assessment_failed: int,
    statuses: Mapping[str, SharingStatus | str],
) -> dict:
    """Cohort accounting: every unique article lands in exactly one bucket."""
    status_counts = {s.value: 0 for s in SharingStatus}
    for status in statuses.values():
        status_counts[SharingStatus(status).value] += 1
    n_sharing = sum(status_counts[s.value] for s in SHARING)
    accounted = (
        sum(status_counts.values())
        + n_out_of_scope
        + n_assessment_failed
        + cohort_counts["not_retrievable"]
    )
    eligible = len(statuses)
    return {
        "total_raw": cohort_counts["total_raw"],
        "duplicates_removed": cohort_counts["duplicates_removed"],
        "unique": cohort_counts["unique"],
        "not_retrievable": cohort_counts["not_retrievable"],
        "out_of_scope": n_out_of_scope,
        "assessment_failed": n_assessment_failed,
        "eligible": eligible,
        **status_counts,
        "n_sharing": n_sharing,
        "share_pct": round_pct(n_sharing, eligible) if eligible else 0.0,
        "balanced": accounted == cohort_counts["unique"],
    }


# ---------------------------------------------------------------------------
# Emission


def _csv_text(rows: Sequence[Mapping[str, Any]]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def emit_reports(out_dir: Path, tables: Mapping[str, Any]) -> dict:
    """Write each statistic as CSV (row tables) and JSON, plus a manifest.

    The manifest lists the emitted files per statistic so plotting code
    can locate the table behind each figure.
    """
    reports_dir = Path(out_dir) / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict[str, dict] = {}
    for name in sorted(tables):
        payload = tables[name]
        entry: dict[str, str] = {}
        json_path = reports_dir / f"{name}.json"
        atomic_write_json(json_path, payload)
        entry["json"] = json_path.name
        if isinstance(payload, list) and payload and isinstance(payload[0], Mapping):
            csv_path = reports_dir / f"{name}.csv"
            atomic_write_text(csv_path, _csv_text(payload))
            entry["csv"] = csv_path.name
        manifest[name] = entry
    atomic_write_json(reports_dir / "plot_manifest.json", manifest)
    return manifest
