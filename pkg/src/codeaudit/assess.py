"""Repository assessment against the 14-feature reproducibility rubric.

Objective features (README, license, requirements, version constraints,
tests, emptiness, language census) are decided by deterministic static
detectors so the audit is reproducible without any model backend.
Subjective features take backend values when a backend is configured and
fall back to declared heuristics otherwise. Every field of a merged
assessment carries provenance: which side decided it, and for detector
decisions, the file/line evidence.
"""

from __future__ import annotations

import fnmatch
import json
import logging
import posixpath
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .backends import AssessorBackend
from .flatten import CompiledRepo, compile_repo
from .prompts import REPO_ASSESSMENT_PROMPT, REPO_ASSESSMENT_SCHEMA
from .repofetch import FileKind, KindTable, RepoSnapshot, default_kind_table

logger = logging.getLogger(__name__)

REPO_FIELDS = (
    "is_empty",
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
    "comments_and_explanations",
    "coding_languages",
)

# The prompt calls this field "hardware_requirements"; the schema name wins.
FIELD_ALIASES = {"hardware_requirements": "lists_hardware_requirements"}

BOOLEAN_FIELDS = frozenset(REPO_FIELDS) - {
    "comments_and_explanations",
    "coding_languages",
}
OPTIONAL_FIELDS = frozenset(
    {
        "readme_purpose_and_outputs",
        "requirements_dependency_versions",
        "fixes_seed_if_stochastic",
        "comments_and_explanations",
        "coding_languages",
    }
)

# Fields forced false/absent on an empty repository. README fields stay:
# a README-only repository is empty by definition yet contains a README.
CONTENT_DEPENDENT_FIELDS = frozenset(
    {
        "contains_requirements",
        "contains_license",
        "sufficient_code_documentation",
        "is_modular_and_structured",
        "implements_tests",
        "lists_hardware_requirements",
        "contains_link_to_paper",
        "contains_citation",
        "includes_data_or_sample",
    }
)

OBJECTIVE_FIELDS = frozenset(
    {
        "is_empty",
        "contains_readme",
        "contains_license",
        "implements_tests",
        "contains_requirements",
        "requirements_dependency_versions",
        "coding_languages",
    }
)


class RepoValidationFailure(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class BackendAssessmentFailedError(Exception):
    def __init__(self, reason: str, raw_outputs: list[str]):
        super().__init__(reason)
        self.raw_outputs = raw_outputs


class MergeError(Exception):
    """Detector/backend contradiction survived merging."""


@dataclass(frozen=True)
class Evidence:
    path: str
    line: int
    pattern: str

    def to_dict(self) -> dict:
        return {"path": self.path, "line": self.line, "pattern": self.pattern}


@dataclass
class FeatureProvenance:
    origins: dict[str, str] = field(default_factory=dict)
    evidence: dict[str, list[Evidence]] = field(default_factory=dict)
    flags: dict[str, Any] = field(default_factory=dict)

    def record(self, fields: Mapping[str, Any], origin: str) -> None:
        for name in fields:
            self.origins[name] = origin

    def to_dict(self) -> dict:
        return {
            "origins": dict(sorted(self.origins.items())),
            "evidence": {
                k: [e.to_dict() for e in v]
                for k, v in sorted(self.evidence.items())
            },
            "flags": self.flags,
        }


def validate_repo_assessment(raw: Mapping[str, Any]) -> dict:
    """Normalize and validate raw rubric output; returns the clean record.

    Raises RepoValidationFailure listing every violated rule. Accepts the
    prompt-side "hardware_requirements" alias on input.
    """
    record: dict[str, Any] = {}
    violations: list[str] = []
    for key, value in raw.items():
        name = FIELD_ALIASES.get(key, key)
        if name not in REPO_FIELDS:
            violations.append(f"unknown_field:{key}")
            continue
        if name in record:
            violations.append(f"duplicate_field:{key}")
        record[name] = value
    for name in REPO_FIELDS:
        record.setdefault(name, None)

    for name in BOOLEAN_FIELDS:
        value = record[name]
        if value is None:
            if name not in OPTIONAL_FIELDS:
                violations.append(f"missing_field:{name}")
        elif not isinstance(value, bool):
            violations.append(f"not_boolean:{name}")
    if record["comments_and_explanations"] is not None and not isinstance(
        record["comments_and_explanations"], str
    ):
        violations.append("not_string:comments_and_explanations")
    langs = record["coding_languages"]
    if langs is not None:
        if not isinstance(langs, (list, tuple)) or not all(
            isinstance(l, str) for l in langs
        ):
            violations.append("not_string_list:coding_languages")
        else:
            record["coding_languages"] = [l.lower() for l in langs]

    # Conditional-presence rules
    if record["contains_readme"] is not True and record["readme_purpose_and_outputs"] is not None:
        violations.append("readme_purpose_without_readme")
    if (
        record["contains_requirements"] is not True
        and record["requirements_dependency_versions"] is not None
    ):
        violations.append("dependency_versions_without_requirements")
    if record["is_empty"] is True:
        if record["coding_languages"] is not None:
            violations.append("languages_on_empty_repo")
        if record["fixes_seed_if_stochastic"] is not None:
            violations.append("seed_field_on_empty_repo")
        for name in sorted(CONTENT_DEPENDENT_FIELDS):
            if record[name] is True:
                violations.append(f"content_field_true_on_empty_repo:{name}")

    if violations:
        raise RepoValidationFailure(violations)
    return record


@dataclass
class DetectorPatterns:
    """Compiled pattern tables (see data/detector_patterns.yaml)."""

    requirements_exact: set[str]
    requirements_globs: list[str]
    lockfiles: set[str]
    version_constraint: re.Pattern
    readme_dependency_headings: list[str]
    readme_install_commands: list[str]
    test_directories: set[str]
    test_file_globs: list[str]
    assertion_re: re.Pattern
    min_assertions: int
    stochastic_re: re.Pattern
    seed_re: re.Pattern
    hardware_re: re.Pattern
    paper_link_re: re.Pattern
    citation_file_prefixes: list[str]
    config_data_denylist: set[str]

    @classmethod
    def load(cls, path: Optional[Path] = None) -> "DetectorPatterns":
        if path is None:
            path = Path(__file__).parent / "data" / "detector_patterns.yaml"
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)

        def literal_union(items) -> re.Pattern:
            return re.compile("|".join(re.escape(i) for i in items))

        return cls(
            requirements_exact={n.lower() for n in raw["requirements_files"]["exact"]},
            requirements_globs=[g.lower() for g in raw["requirements_files"]["globs"]],
            lockfiles={n.lower() for n in raw["lockfiles"]},
            version_constraint=re.compile(raw["version_constraint_pattern"]),
            readme_dependency_headings=raw["readme_dependency_headings"],
            readme_install_commands=raw["readme_install_commands"],
            test_directories={d.lower() for d in raw["test_directories"]},
            test_file_globs=[g.lower() for g in raw["test_file_globs"]],
            assertion_re=literal_union(raw["assertion_markers"]),
            min_assertions=int(raw["min_assertions"]),
            stochastic_re=literal_union(raw["stochastic_indicators"]),
            seed_re=literal_union(raw["seed_patterns"]),
            hardware_re=re.compile("|".join(raw["hardware_patterns"]), re.I),
            paper_link_re=re.compile("|".join(raw["paper_link_patterns"]), re.I),
            citation_file_prefixes=raw["citation_file_prefixes"],
            config_data_denylist={n.lower() for n in raw["config_data_denylist"]},
        )

    def is_requirements_file(self, basename: str) -> bool:
        name = basename.lower()
        if name in self.requirements_exact or basename in ("DESCRIPTION", "Pipfile"):
            return True
        return any(fnmatch.fnmatch(name, g) for g in self.requirements_globs)

    def is_lockfile(self, basename: str) -> bool:
        return basename.lower() in self.lockfiles

    def is_test_path(self, path: str) -> bool:
        parts = path.lower().split("/")
        if any(p in self.test_directories for p in parts[:-1]):
            return True
        return any(fnmatch.fnmatch(parts[-1], g) for g in self.test_file_globs)

    def readme_dependency_section(self, readme_text: str) -> bool:
        for line in readme_text.splitlines():
            stripped = line.strip().lstrip("#").strip().lower()
            if line.strip().startswith("#") and any(
                h in stripped for h in self.readme_dependency_headings
            ):
                return True
        lowered = readme_text.lower()
        return any(cmd in lowered for cmd in self.readme_install_commands)


_DEFAULT_PATTERNS: Optional[DetectorPatterns] = None


def load_detector_patterns(path: Optional[Path] = None) -> DetectorPatterns:
    global _DEFAULT_PATTERNS
    if path is not None:
        return DetectorPatterns.load(path)
    if _DEFAULT_PATTERNS is None:
        _DEFAULT_PATTERNS = DetectorPatterns.load()
    return _DEFAULT_PATTERNS


# ---------------------------------------------------------------------------
# Static detection


def _find_lines(text: str, pattern: re.Pattern, path: str, limit: int = 5) -> list[Evidence]:
    out = []
    for i, line in enumerate(text.splitlines(), start=1):
        m = pattern.search(line)
        if m:
            out.append(Evidence(path, i, m.group(0)[:60]))
            if len(out) >= limit:
                break
    return out


def _read_capped(root: Path, rel: str, cap: int = 512 * 1024) -> str:
    try:
        return (root / rel).read_bytes()[:cap].decode("utf-8", errors="replace")
    except OSError:
        return ""


def detect_static_features(
    snapshot: RepoSnapshot,
    compiled: Optional[CompiledRepo] = None,
    patterns: Optional[DetectorPatterns] = None,
    kind_table: Optional[KindTable] = None,
) -> tuple[dict, FeatureProvenance]:
    """Fill every rubric field from the snapshot alone.

    Returns (partial assessment dict, provenance). Absent evidence means
    false (or absent, for conditional fields); detection is a pure
    function of the snapshot file set and contents.
    """
    if snapshot.root is None:
        raise ValueError("static detection requires an extracted snapshot")
    patterns = patterns or load_detector_patterns()
    table = kind_table or default_kind_table()
    prov = FeatureProvenance()
    root = snapshot.root

    readme_entries = [f for f in snapshot.files if f.kind == FileKind.README]
    source_entries = [f for f in snapshot.files if f.kind == FileKind.SOURCE]
    readme_text = "\n".join(_read_capped(root, f.path) for f in readme_entries)
    sources = {f.path: _read_capped(root, f.path) for f in source_entries}
    source_text = "\n".join(sources.values())

    values: dict[str, Any] = {}

    # Emptiness: no files, only empty files, or only a README.
    substantive = [
        f for f in snapshot.files if f.size_bytes > 0 and f.kind != FileKind.README
    ]
    values["is_empty"] = len(substantive) == 0
    values["contains_readme"] = any(f.size_bytes > 0 for f in readme_entries)
    if values["contains_readme"]:
        prov.evidence["contains_readme"] = [
            Evidence(f.path, 0, "readme file") for f in readme_entries
        ]

    manifest_entries = [
        f
        for f in snapshot.files
        if patterns.is_requirements_file(posixpath.basename(f.path))
        and f.size_bytes > 0
    ]
    readme_deps = patterns.readme_dependency_section(readme_text)
    values["contains_requirements"] = bool(manifest_entries) or readme_deps
    prov.evidence["contains_requirements"] = [
        Evidence(f.path, 0, "dependency manifest") for f in manifest_entries
    ]
    if readme_deps and readme_entries:
        prov.evidence["contains_requirements"].append(
            Evidence(readme_entries[0].path, 0, "dependency section in README")
        )

    if values["contains_requirements"]:
        versioned_evidence: list[Evidence] = []
        versioned = False
        for entry in manifest_entries:
            if patterns.is_lockfile(posixpath.basename(entry.path)):
                versioned = True
                versioned_evidence.append(Evidence(entry.path, 0, "lockfile"))
                continue
            text = _read_capped(root, entry.path)
            hits = _find_lines(text, patterns.version_constraint, entry.path)
            if hits:
                versioned = True
                versioned_evidence.extend(hits)
        if not manifest_entries and readme_deps:
            hits = _find_lines(
                readme_text,
                patterns.version_constraint,
                readme_entries[0].path if readme_entries else "README",
            )
            versioned = bool(hits)
            versioned_evidence.extend(hits)
        values["requirements_dependency_versions"] = versioned
        prov.evidence["requirements_dependency_versions"] = versioned_evidence
    else:
        values["requirements_dependency_versions"] = None

    license_entries = [
        f
        for f in snapshot.files
        if posixpath.basename(f.path).split(".")[0].lower()
        in ("license", "licence", "copying")
        and f.size_bytes > 0
    ]
    values["contains_license"] = bool(license_entries)
    prov.evidence["contains_license"] = [
        Evidence(f.path, 0, "license file") for f in license_entries
    ]

    test_paths = [f.path for f in snapshot.files if patterns.is_test_path(f.path)]
    assertion_hits: list[Evidence] = []
    if not test_paths:
        for path, text in sources.items():
            hits = _find_lines(text, patterns.assertion_re, path, limit=patterns.min_assertions)
            if len(hits) >= patterns.min_assertions:
                assertion_hits = hits
                break
    values["implements_tests"] = bool(test_paths) or bool(assertion_hits)
    prov.evidence["implements_tests"] = [
        Evidence(p, 0, "test path") for p in test_paths
    ] + assertion_hits

    stochastic_hits: list[Evidence] = []
    seed_hits: list[Evidence] = []
    for path, text in sources.items():
        if not stochastic_hits:
            stochastic_hits = _find_lines(text, patterns.stochastic_re, path, limit=3)
        seed_hits.extend(_find_lines(text, patterns.seed_re, path, limit=3))
    if stochastic_hits:
        values["fixes_seed_if_stochastic"] = bool(seed_hits)
        prov.evidence["fixes_seed_if_stochastic"] = stochastic_hits + seed_hits
    else:
        values["fixes_seed_if_stochastic"] = None

    hardware_hits = _find_lines(
        readme_text, patterns.hardware_re, readme_entries[0].path if readme_entries else "README"
    )
    values["lists_hardware_requirements"] = bool(hardware_hits)
    prov.evidence["lists_hardware_requirements"] = hardware_hits

    link_hits = _find_lines(
        readme_text, patterns.paper_link_re, readme_entries[0].path if readme_entries else "README"
    )
    values["contains_link_to_paper"] = bool(link_hits)
    prov.evidence["contains_link_to_paper"] = link_hits

    citation_entries = [
        f
        for f in snapshot.files
        if any(
            posixpath.basename(f.path).upper().startswith(p)
            for p in patterns.citation_file_prefixes
        )
        and f.size_bytes > 0
    ]
    bibtex_hits = _find_lines(
        readme_text,
        re.compile(r"@(article|misc|software|inproceedings)\{"),
        readme_entries[0].path if readme_entries else "README",
    )
    cite_heading = re.search(r"^#+.*\bcit(e|ation)", readme_text, re.I | re.M)
    values["contains_citation"] = bool(citation_entries) or bool(bibtex_hits) or bool(cite_heading)
    prov.evidence["contains_citation"] = [
        Evidence(f.path, 0, "citation file") for f in citation_entries
    ] + bibtex_hits

    data_entries = [
        f
        for f in snapshot.files
        if f.kind == FileKind.DATA
        and posixpath.basename(f.path).lower() not in patterns.config_data_denylist
        and f.size_bytes > 0
    ]
    values["includes_data_or_sample"] = bool(data_entries)
    prov.evidence["includes_data_or_sample"] = [
        Evidence(f.path, 0, "data file") for f in data_entries
    ]

    lang_counts: dict[str, int] = {}
    for f in snapshot.files:
        if f.size_bytes == 0:
            continue
        base = posixpath.basename(f.path).lower()
        ext = base.rsplit(".", 1)[-1] if "." in base else ""
        lang = table.language_by_extension.get(ext)
        if lang:
            lang_counts[lang] = lang_counts.get(lang, 0) + 1
    values["coding_languages"] = (
        sorted(lang_counts, key=lambda l: (-lang_counts[l], l)) if lang_counts else None
    )

    # Declared heuristics for the subjective trio (backend overrides these).
    values["readme_purpose_and_outputs"] = (
        bool(
            re.search(
                r"(purpose|overview|this (repo|repository|project|pipeline|code))",
                readme_text,
                re.I,
            )
            and re.search(r"(output|produce|generate|result)", readme_text, re.I)
        )
        if values["contains_readme"]
        else None
    )
    def_count = len(
        re.findall(r"^\s*(def |class |function\s|\w+\s*<-\s*function)", source_text, re.M)
    )
    values["is_modular_and_structured"] = len(sources) >= 2 or def_count >= 4
    comment_lines = len(re.findall(r"^\s*(#|//|/\*|%|\"\"\"|')", source_text, re.M))
    code_lines = max(1, len([l for l in source_text.splitlines() if l.strip()]))
    values["sufficient_code_documentation"] = comment_lines / code_lines >= 0.08
    values["comments_and_explanations"] = None

    if values["is_empty"]:
        for name in CONTENT_DEPENDENT_FIELDS:
            values[name] = False
        values["requirements_dependency_versions"] = None
        values["fixes_seed_if_stochastic"] = None
        values["coding_languages"] = None

    prov.record(values, "static_detector")
    prov.evidence = {k: v for k, v in prov.evidence.items() if v}
    return values, prov


# ---------------------------------------------------------------------------
# Backend assessment and merging


def assess_with_backend(
    compiled: CompiledRepo,
    backend: AssessorBackend,
    max_reasks: int = 2,
) -> tuple[dict, list[str]]:
    """Send the rubric prompt plus compiled text; shape-validate the reply.

    Invalid output is re-asked at most max_reasks times with the violation
    list appended; persistent failure raises BackendAssessmentFailedError.
    Returns (validated record, all raw outputs) for archiving.
    """
    raw_outputs: list[str] = []
    prompt = REPO_ASSESSMENT_PROMPT
    document = compiled.document()
    last_failure: Optional[RepoValidationFailure] = None
    for _ in range(max_reasks + 1):
        raw = backend.invoke(prompt, document, REPO_ASSESSMENT_SCHEMA)
        raw_outputs.append(raw)
        try:
            parsed = json.loads(raw)
            if not isinstance(parsed, dict):
                raise RepoValidationFailure(["output_not_object"])
            return validate_repo_assessment(parsed), raw_outputs
        except json.JSONDecodeError as exc:
            last_failure = RepoValidationFailure([f"unparseable_json:{exc.msg}"])
        except RepoValidationFailure as exc:
            last_failure = exc
        prompt = (
            REPO_ASSESSMENT_PROMPT
            + "\nThe previous response violated these rules: "
            + "; ".join(last_failure.violations)
            + ". Return a corrected response."
        )
    raise BackendAssessmentFailedError(
        f"backend_assessment_failed: {last_failure}", raw_outputs
    )


def merge_assessments(
    static: Mapping[str, Any],
    backend: Optional[Mapping[str, Any]],
    static_prov: FeatureProvenance,
) -> tuple[dict, FeatureProvenance]:
    """Combine static and backend verdicts under the objectivity split.

    Objective fields keep the static value (backend recorded as
    corroboration); subjective fields take the backend when present.
    Conditional fields are re-gated on the merged parents; a contradiction
    drops the child field and is logged in provenance flags.
    """
    prov = FeatureProvenance(
        origins=dict(static_prov.origins),
        evidence=dict(static_prov.evidence),
        flags=dict(static_prov.flags),
    )
    merged = dict(static)
    if backend is not None:
        contradictions = []
        for name in REPO_FIELDS:
            if name in OBJECTIVE_FIELDS:
                if backend.get(name) != merged.get(name):
                    contradictions.append(name)
                prov.origins[name] = (
                    "merged" if backend.get(name) == merged.get(name) else "static_detector"
                )
            else:
                if backend.get(name) is not None or name in (
                    "fixes_seed_if_stochastic",
                    "readme_purpose_and_outputs",
                    "comments_and_explanations",
                    "coding_languages",
                ):
                    merged[name] = backend.get(name)
                    prov.origins[name] = "backend"
        if contradictions:
            prov.flags["objective_contradictions"] = sorted(contradictions)
            logger.info("backend contradicted static detectors on %s", contradictions)

    # Re-gate conditional fields on the merged parents.
    if merged.get("contains_readme") is not True and merged.get(
        "readme_purpose_and_outputs"
    ) is not None:
        prov.flags["dropped_readme_purpose_and_outputs"] = True
        merged["readme_purpose_and_outputs"] = None
    if merged.get("contains_requirements") is not True and merged.get(
        "requirements_dependency_versions"
    ) is not None:
        prov.flags["dropped_requirements_dependency_versions"] = True
        merged["requirements_dependency_versions"] = None
    if merged.get("is_empty") is True:
        for name in CONTENT_DEPENDENT_FIELDS:
            if merged.get(name) is True:
                prov.flags[f"dropped_{name}"] = True
                merged[name] = False
        merged["fixes_seed_if_stochastic"] = None
        merged["coding_languages"] = None

    try:
        merged = validate_repo_assessment(merged)
    except RepoValidationFailure as exc:
        raise MergeError(
            f"merged assessment violates invariants: {exc.violations}; provenance={prov.to_dict()}"
        ) from exc
    for name in REPO_FIELDS:
        prov.origins.setdefault(name, "static_detector")
    return merged, prov


def needs_recompile(compiled: CompiledRepo, backend: AssessorBackend) -> bool:
    budget = getattr(backend, "context_budget_tokens", None)
    return budget is not None and compiled.total_tokens > budget


def compile_for_backend(
    snapshot: RepoSnapshot,
    backend: AssessorBackend,
    compiled: CompiledRepo,
    prov: FeatureProvenance,
) -> CompiledRepo:
    """Context-overflow fallback: recompile with a per-source-file cap."""
    if not needs_recompile(compiled, backend):
        return compiled
    prov.flags["overflow_recompiled"] = True
    return compile_repo(snapshot, source_token_cap=3000)
