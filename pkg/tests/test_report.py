"""Cohort statistics against brute-force recomputation."""

from __future__ import annotations

import random

import pytest

from codeaudit.report import (
    emit_reports,
    feature_prevalence,
    journal_profiles,
    language_distribution,
    overall_language_counts,
    prisma_flow,
    round_pct,
    share_by_group,
    share_by_year,
    statement_stats,
)
from codeaudit.screening import SharingStatus

SHARES = SharingStatus.SHARES_REPOSITORY.value
NOCODE = SharingStatus.NO_CODE.value


def _cohort(spec):
    """spec: list of (year, journal, country, n, n_sharing, entries)."""
    articles, statuses = {}, {}
    i = 0
    for year, journal, country, n, n_sharing, entries in spec:
        for k in range(n):
            aid = str(1000 + i)
            i += 1
            articles[aid] = {
                "publication_year": year,
                "journal": journal,
                "country_first_author_institution": country,
                "source_entries": entries,
            }
            statuses[aid] = SHARES if k < n_sharing else NOCODE
    return articles, statuses


def test_round_pct_half_up():
    assert round_pct(1, 16) == 6.3  # 6.25 rounds up, not to even
    assert round_pct(119, 820) == 14.5
    assert round_pct(184, 286) == 64.3
    assert round_pct(482, 3967) == 12.2
    with pytest.raises(ValueError):
        round_pct(1, 0)


def test_share_by_year_ratios():
    articles, statuses = _cohort(
        [(2015, "J", "France", 16, 1, ["t1"]), (2024, "J", "France", 820, 119, ["t1"])]
    )
    rows = share_by_year(articles, statuses)
    by_year = {r["year"]: r for r in rows}
    assert by_year[2015]["share_pct"] == 6.3
    assert by_year[2024]["share_pct"] == 14.5
    assert by_year[2024]["n_articles"] == 820


def test_share_by_year_zero_sharing():
    articles, statuses = _cohort([(2020, "J", "France", 12, 0, ["t1"])])
    assert share_by_year(articles, statuses)[0]["share_pct"] == 0.0


def test_share_by_year_unknown_year_row():
    articles, statuses = _cohort([(2020, "J", "France", 2, 1, ["t1"])])
    articles["9999"] = {"publication_year": None, "journal": "J",
                        "country_first_author_institution": "France",
                        "source_entries": ["t1"]}
    statuses["9999"] = NOCODE
    rows = share_by_year(articles, statuses)
    assert any(r["year"] == "unknown" for r in rows)


def test_share_by_year_split_excludes_dual_citers():
    entry_groups = {"t1": "TRIPOD", "ai1": "TRIPOD+AI"}
    articles, statuses = _cohort(
        [
            (2025, "J", "France", 356, 42, ["t1"]),
            (2025, "J", "France", 101, 30, ["ai1"]),
            (2025, "J", "France", 11, 3, ["t1", "ai1"]),  # dual citers
        ]
    )
    rows = share_by_year(articles, statuses, entry_groups, split_by_guideline=True)
    by_group = {r["guideline"]: r for r in rows}
    assert by_group["TRIPOD"]["n_articles"] == 356
    assert by_group["TRIPOD"]["share_pct"] == 11.8
    assert by_group["TRIPOD+AI"]["share_pct"] == 29.7
    assert sum(r["n_articles"] for r in rows) == 457  # dual citers excluded


def test_share_by_year_matches_brute_force():
    rng = random.Random(17)
    articles, statuses = {}, {}
    for i in range(400):
        aid = str(i)
        year = rng.choice([2019, 2020, 2021])
        articles[aid] = {"publication_year": year, "journal": "J",
                         "country_first_author_institution": "France",
                         "source_entries": ["t1"]}
        statuses[aid] = rng.choice([SHARES, NOCODE])
    for row in share_by_year(articles, statuses):
        ids = [a for a, m in articles.items() if m["publication_year"] == row["year"]]
        sharing = [a for a in ids if statuses[a] == SHARES]
        assert row["n_articles"] == len(ids)
        assert row["n_sharing"] == len(sharing)
        assert row["share_pct"] == round_pct(len(sharing), len(ids))


def test_share_by_group_threshold_and_sorting():
    articles, statuses = _cohort(
        [
            (2024, "Nature Communications", "France", 14, 10, ["t1"]),
            (2024, "Tiny Journal", "France", 10, 9, ["t1"]),  # n == min_n: excluded
            (2024, "Big Journal", "France", 50, 5, ["t1"]),
        ]
    )
    rows = share_by_group(articles, statuses, "journal", min_n=10)
    assert [r["group"] for r in rows] == ["Nature Communications", "Big Journal"]
    assert rows[0]["share_pct"] == 71.4


def test_share_by_group_country_and_brute_force():
    rng = random.Random(23)
    countries = ["France", "Germany", "China", "not reported"]
    articles, statuses = {}, {}
    for i in range(300):
        aid = str(i)
        articles[aid] = {"publication_year": 2024, "journal": "J",
                         "country_first_author_institution": rng.choice(countries),
                         "source_entries": []}
        statuses[aid] = rng.choice([SHARES, NOCODE])
    rows = share_by_group(articles, statuses, "country", min_n=0)
    assert sum(r["n"] for r in rows) == 300
    for row in rows:
        ids = [
            a for a, m in articles.items()
            if m["country_first_author_institution"] == row["group"]
        ]
        assert row["n"] == len(ids)
        assert row["n_sharing"] == sum(1 for a in ids if statuses[a] == SHARES)


def test_statement_stats_counts():
    assessments = []
    for _ in range(8):
        assessments.append({
            "repo_url": "https://github.com/u/r",
            "code_statement_locations": ["data_availability_section"],
            "code_statement_sentence": "publicly available on GitHub:",
        })
    assessments.append({
        "repo_url": "https://github.com/u/r2",
        "code_statement_locations": ["methods", "data_availability_section"],
        "code_statement_sentence": "Publicly Available on GitHub:",  # case differs
    })
    assessments.append({"repo_url": None, "code_statement_locations": ["methods"]})
    stats = statement_stats(assessments)
    assert stats["sentence_frequency"][0] == {
        "sentence": "publicly available on GitHub:",
        "occurrences": 8,
    }
    # case-sensitive: the differently-cased sentence is its own row
    assert {"sentence": "Publicly Available on GitHub:", "occurrences": 1} in stats[
        "sentence_frequency"
    ]
    assert stats["location_counts"]["data_availability_section"] == 9
    assert stats["location_counts"]["methods"] == 1  # repo-less article excluded
    hist = {r["statements"]: r["n_articles"] for r in stats["statements_per_article"]}
    assert hist == {1: 8, 2: 1}


def test_statement_stats_brute_force_frequencies():
    rng = random.Random(31)
    sentences = ["alpha", "beta", "Beta", "gamma"]
    assessments = [
        {
            "repo_url": "https://github.com/u/r",
            "code_statement_locations": ["methods"],
            "code_statement_sentence": rng.choice(sentences),
        }
        for _ in range(60)
    ]
    stats = statement_stats(assessments)
    counts = {row["sentence"]: row["occurrences"] for row in stats["sentence_frequency"]}
    for s in sentences:
        expected = sum(1 for a in assessments if a["code_statement_sentence"] == s)
        assert counts.get(s, 0) == expected


def _repo(is_empty=False, **features):
    base = {
        "is_empty": is_empty,
        "contains_readme": False,
        "readme_purpose_and_outputs": None,
        "contains_requirements": False,
        "requirements_dependency_versions": None,
        "contains_license": False,
        "sufficient_code_documentation": False,
        "is_modular_and_structured": False,
        "implements_tests": False,
        "fixes_seed_if_stochastic": None,
        "lists_hardware_requirements": False,
        "contains_link_to_paper": False,
        "contains_citation": False,
        "includes_data_or_sample": False,
        "coding_languages": None,
    }
    base.update(features)
    return base


def test_feature_prevalence_seed_denominator():
    repos = []
    for i in range(286):
        repos.append(_repo(fixes_seed_if_stochastic=i < 184))
    for _ in range(94):
        repos.append(_repo(fixes_seed_if_stochastic=None))
    rows = {r["feature"]: r for r in feature_prevalence(repos)}
    seed = rows["fixes_seed_if_stochastic"]
    assert (seed["numerator"], seed["denominator"], seed["pct"]) == (184, 286, 64.3)
    readme = rows["contains_readme"]
    assert readme["denominator"] == 380


def test_feature_prevalence_absent_counts_false():
    repos = [_repo(contains_readme=True, readme_purpose_and_outputs=True),
             _repo(contains_readme=False, readme_purpose_and_outputs=None)]
    rows = {r["feature"]: r for r in feature_prevalence(repos)}
    assert rows["readme_purpose_and_outputs"]["denominator"] == 2
    assert rows["readme_purpose_and_outputs"]["numerator"] == 1


def test_feature_prevalence_all_false():
    rows = feature_prevalence([_repo() for _ in range(10)])
    for row in rows:
        if row["denominator"]:
            assert row["pct"] == 0.0


def test_feature_prevalence_excludes_empty_repos():
    repos = [_repo(contains_readme=True), _repo(is_empty=True, contains_readme=True)]
    rows = {r["feature"]: r for r in feature_prevalence(repos)}
    assert rows["contains_readme"]["denominator"] == 1


def test_feature_prevalence_brute_force():
    rng = random.Random(41)
    repos = [
        _repo(
            contains_readme=rng.random() < 0.8,
            contains_license=rng.random() < 0.3,
            fixes_seed_if_stochastic=rng.choice([None, True, False]),
        )
        for _ in range(97)
    ]
    rows = {r["feature"]: r for r in feature_prevalence(repos)}
    assert rows["contains_readme"]["numerator"] == sum(
        1 for r in repos if r["contains_readme"]
    )
    defined = [r for r in repos if r["fixes_seed_if_stochastic"] is not None]
    assert rows["fixes_seed_if_stochastic"]["denominator"] == len(defined)
    assert rows["fixes_seed_if_stochastic"]["numerator"] == sum(
        1 for r in defined if r["fixes_seed_if_stochastic"]
    )


def test_overall_language_counts_top_two():
    repos = []
    for i in range(190):
        langs = ["python"] + (["r"] if i < 150 else [])
        repos.append({"coding_languages": langs})
    for _ in range(39):
        repos.append({"coding_languages": ["r"]})
    counts = overall_language_counts(repos)
    assert counts[0] == {"language": "python", "count": 190}
    assert counts[1] == {"language": "r", "count": 189}


def test_language_distribution_thresholds():
    repos = []
    for year, lang, n in [
        (2023, "python", 10), (2023, "r", 8), (2023, "julia", 5),  # julia: exactly 5
        (2019, "python", 4),  # 2019 has 4 repos: excluded
    ]:
        for _ in range(n):
            repos.append({"publication_year": year, "coding_languages": [lang]})
    rows = language_distribution(repos, min_repos_per_language=5, min_repos_per_year=5)
    langs = {r["language"] for r in rows}
    assert "julia" not in langs  # strict > 5
    assert all(r["year"] == 2023 for r in rows)


def test_language_distribution_brute_force():
    rng = random.Random(53)
    langs = ["python", "r", "sql", "shell"]
    repos = [
        {
            "publication_year": rng.choice([2021, 2022, 2023]),
            "coding_languages": rng.sample(langs, rng.randint(1, 3)),
        }
        for _ in range(150)
    ]
    rows = language_distribution(repos, 0, 0)
    for row in rows:
        expected = sum(
            1
            for r in repos
            if r["publication_year"] == row["year"]
            and row["language"] in r["coding_languages"]
        )
        assert row["count"] == expected


def test_journal_profiles_single_journal_deviation_zero():
    repos = [
        {**_repo(contains_readme=True, contains_license=i % 2 == 0), "journal": "Solo"}
        for i in range(10)
    ]
    profiles = journal_profiles(repos, min_repos=5)
    assert profiles["journals"][0]["journal"] == "Solo"
    assert profiles["journals"][0]["deviation_from_global"] == 0.0


def test_journal_profiles_engineered_deviation():
    repos = []
    # Journal A: readme in all 10 repos; journal B: readme in none of 10.
    for journal, readme in [("A", True), ("B", False)]:
        for _ in range(10):
            repos.append({**_repo(contains_readme=readme), "journal": journal})
    profiles = journal_profiles(repos, min_repos=5)
    by_name = {p["journal"]: p for p in profiles["journals"]}
    # global readme prevalence 50%; per-feature means differ symmetrically
    assert by_name["A"]["deviation_from_global"] == pytest.approx(
        -by_name["B"]["deviation_from_global"], abs=0.1
    )
    assert by_name["A"]["mean_pct"] > by_name["B"]["mean_pct"]


def test_journal_profiles_brute_force_means():
    rng = random.Random(61)
    repos = []
    for journal in ("A", "B", "C"):
        for _ in range(rng.randint(6, 12)):
            repos.append({
                **_repo(
                    contains_readme=rng.random() < 0.7,
                    contains_license=rng.random() < 0.4,
                    implements_tests=rng.random() < 0.1,
                ),
                "journal": journal,
            })
    profiles = journal_profiles(repos, min_repos=5)
    for profile in profiles["journals"]:
        rows = [r for r in repos if r["journal"] == profile["journal"]]
        pcts = [
            r["pct"] for r in feature_prevalence(rows) if r["denominator"] > 0
        ]
        assert profile["mean_pct"] == pytest.approx(sum(pcts) / len(pcts), abs=0.05)


def test_prisma_flow_balances():
    statuses = {str(i): SHARES if i < 3 else NOCODE for i in range(10)}
    flow = prisma_flow(
        {"total_raw": 20, "duplicates_removed": 4, "unique": 16, "not_retrievable": 3},
        n_out_of_scope=2,
        n_assessment_failed=1,
        statuses=statuses,
    )
    assert flow["balanced"] is True
    assert flow["n_sharing"] == 3
    assert flow["share_pct"] == round_pct(3, 10)


def test_emit_reports_writes_csv_json_manifest(tmp_path):
    tables = {
        "share_by_year": [{"year": 2024, "n_articles": 2, "n_sharing": 1, "share_pct": 50.0}],
        "prisma_flow": {"unique": 2},
    }
    manifest = emit_reports(tmp_path, tables)
    assert (tmp_path / "reports" / "share_by_year.csv").exists()
    assert (tmp_path / "reports" / "share_by_year.json").exists()
    assert (tmp_path / "reports" / "prisma_flow.json").exists()
    assert (tmp_path / "reports" / "plot_manifest.json").exists()
    assert manifest["share_by_year"]["csv"] == "share_by_year.csv"


def test_emit_reports_deterministic(tmp_path):
    tables = {"t": [{"a": 1, "b": 2}, {"a": 3, "b": 4}]}
    emit_reports(tmp_path / "one", tables)
    emit_reports(tmp_path / "two", tables)
    assert (tmp_path / "one/reports/t.csv").read_bytes() == (
        tmp_path / "two/reports/t.csv"
    ).read_bytes()
    assert (tmp_path / "one/reports/t.json").read_bytes() == (
        tmp_path / "two/reports/t.json"
    ).read_bytes()
