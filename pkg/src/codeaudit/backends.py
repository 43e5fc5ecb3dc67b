"""Assessor backends behind a pluggable interface.

The production pipeline plugs a hosted LLM in here; the shipped backends
are a deterministic rule-scripted stub (offline tests, desk runs) and a
canned-response backend for exercising the re-ask path. A backend takes
the prompt text, the document text and a schema descriptor, and returns
raw structured output as a JSON string.
"""

from __future__ import annotations

import json
import re
from typing import Any, Mapping, Optional, Protocol, Sequence, runtime_checkable


class BackendError(Exception):
    """Transient backend failure; the caller may retry the whole call."""


@runtime_checkable
class AssessorBackend(Protocol):
    identity: str
    context_budget_tokens: Optional[int]

    def invoke(self, prompt: str, document: str, schema: Mapping[str, Any]) -> str:
        """Return raw structured output for the document, as JSON text."""
        ...


class CannedBackend:
    """Replays a fixed sequence of responses; raises items that are exceptions."""

    identity = "canned/1"
    context_budget_tokens: Optional[int] = None

    def __init__(self, responses: Sequence[Any]):
        self._responses = list(responses)
        self.calls: list[tuple[str, str]] = []

    def invoke(self, prompt: str, document: str, schema: Mapping[str, Any]) -> str:
        self.calls.append((prompt, document))
        if not self._responses:
            raise BackendError("canned backend exhausted")
        item = self._responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item if isinstance(item, str) else json.dumps(item)


# ---------------------------------------------------------------------------
# Deterministic rule-scripted stub

_URL_RE = re.compile(r"https?://[^\s<>\)\]\"']+")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")

_MATCH_PATTERNS = [
    re.compile(r"(prediction|prognostic|diagnostic|risk)\s+(model|score)", re.I),
    re.compile(r"(develop|validat|updat)\w*\b[^.]{0,120}\bnomogram", re.I),
    re.compile(r"(logistic regression|cox\s+(proportional hazards\s+)?regression)[^.]{0,80}(predict|model)", re.I),
]
_EXCLUDE_PATTERNS = [
    re.compile(r"\bprotocol\b[^.]{0,120}\b(future study|will be (run|developed|conducted|performed))", re.I),
    re.compile(r"this (study )?protocol (details|describes|outlines)", re.I),
]
_CODE_WORD_RE = re.compile(r"\b(code|scripts?|implementation|source)\b", re.I)
_APPENDIX_CLAIM_RE = re.compile(
    r"(\bcode\b[^.]{0,120}\b(supplementar\w+|appendix)\b|\b(supplementar\w+|appendix)\b[^.]{0,120}\bcode\b)",
    re.I,
)
_AVAILABLE_RE = re.compile(r"\b(available|provided|included|found|deposited|hosted)\b", re.I)

_LOCATION_RULES = [
    ("code availability", "code_availability_section"),
    ("data availability", "data_availability_section"),
    ("availability", "data_availability_section"),
    ("supplement", "supplementary_material"),
    ("abstract", "abstract"),
    ("introduction", "introduction"),
    ("background", "introduction"),
    ("method", "methods"),
    ("result", "results"),
    ("discussion", "discussion"),
]


def _heading_location(heading: str) -> str:
    lowered = heading.lower()
    for needle, location in _LOCATION_RULES:
        if needle in lowered:
            return location
    return "other"


class RuleBackend:
    """Keyword/regex-scripted assessor; deterministic and offline.

    Screens article text using the section markers emitted by
    preprocessing, and scores compiled repositories from their section
    headers. Good enough to drive fixtures end to end; not a model.
    """

    identity = "rule-stub/1"
    context_budget_tokens: Optional[int] = None

    def invoke(self, prompt: str, document: str, schema: Mapping[str, Any]) -> str:
        if schema.get("name") == "paper_assessment":
            return json.dumps(self._screen_paper(document))
        if schema.get("name") == "repo_assessment":
            return json.dumps(self._assess_repo(document))
        raise BackendError(f"unknown schema {schema.get('name')!r}")

    # -- article screening ---------------------------------------------------

    def _screen_paper(self, text: str) -> dict:
        is_match = any(p.search(text) for p in _MATCH_PATTERNS) and not any(
            p.search(text) for p in _EXCLUDE_PATTERNS
        )
        country = self._country(text)
        result: dict = {
            "is_match": is_match,
            "reason": (
                "The study itself develops, updates or validates a multivariable prediction model."
                if is_match
                else "No multivariable prediction model is developed, updated or validated in the study itself."
            ),
            "country_first_author_institution": country,
            "repo_url": None,
            "code_statement_locations": None,
            "code_statement_sentence": None,
        }
        if not is_match:
            return result

        statements = self._code_statements(text)
        if statements:
            url, sentence, locations = statements
            result["repo_url"] = url
            result["code_statement_locations"] = locations or ["other"]
            result["code_statement_sentence"] = sentence
        return result

    def _country(self, text: str) -> str:
        m = re.search(r"^Affiliations?:\s*(.+)$", text, re.M)
        if not m:
            return "not reported"
        first_aff = m.group(1).split(";")[0]
        tail = first_aff.split(",")[-1].strip().rstrip(".")
        return tail if tail else "not reported"

    def _code_statements(self, text: str):
        """First repository URL (or Appendix claim) plus its locations."""
        url: Optional[str] = None
        sentence: Optional[str] = None
        locations: list[str] = []
        heading = ""
        for block in text.split("\n\n"):
            block = block.strip()
            if block.startswith("#"):
                heading = block.lstrip("# ").strip()
                continue
            for sent in _SENTENCE_SPLIT_RE.split(block):
                if not _CODE_WORD_RE.search(sent):
                    continue
                m = _URL_RE.search(sent)
                if m:
                    location = _heading_location(heading)
                    if location not in locations:
                        locations.append(location)
                    if url is None:
                        url = m.group(0).rstrip(".,;")
                        sentence = _URL_RE.sub("", sent)
                        sentence = re.sub(r"\s+", " ", sentence).strip()
                elif (
                    url is None
                    and _APPENDIX_CLAIM_RE.search(sent)
                    and _AVAILABLE_RE.search(sent)
                ):
                    url = "Appendix"
                    sentence = re.sub(r"\s+", " ", sent).strip()
                    location = _heading_location(heading)
                    if location not in locations:
                        locations.append(location)
        if url is None:
            return None
        return url, sentence, locations

    # -- repository assessment ------------------------------------------------

    def _assess_repo(self, document: str) -> dict:
        from .assess import load_detector_patterns
        from .repofetch import default_kind_table

        patterns = load_detector_patterns()
        table = default_kind_table()
        sections = _split_compiled(document)
        paths = list(sections)

        def ext(p: str) -> str:
            base = p.rsplit("/", 1)[-1]
            return base.rsplit(".", 1)[-1].lower() if "." in base else ""

        readme_paths = [
            p for p in paths if p.rsplit("/", 1)[-1].lower() in table.readme_basenames
        ]
        readme_text = "\n".join(sections[p] for p in readme_paths)
        source_paths = [p for p in paths if ext(p) in table.source_extensions]
        source_text = "\n".join(sections[p] for p in source_paths)
        nonblank = {p for p in paths if sections[p].strip()}

        is_empty = not (nonblank - set(readme_paths))
        contains_readme = any(p in nonblank for p in readme_paths)
        manifest_paths = [
            p for p in paths if patterns.is_requirements_file(p.rsplit("/", 1)[-1])
        ]
        readme_deps = bool(patterns.readme_dependency_section(readme_text))
        contains_requirements = bool(manifest_paths) or readme_deps
        versioned = None
        if contains_requirements:
            manifest_text = "\n".join(sections[p] for p in manifest_paths)
            if not manifest_text and readme_deps:
                manifest_text = readme_text
            versioned = bool(patterns.version_constraint.search(manifest_text)) or any(
                patterns.is_lockfile(p.rsplit("/", 1)[-1]) for p in manifest_paths
            )
        contains_license = any(
            p.rsplit("/", 1)[-1].split(".")[0].lower() in ("license", "licence", "copying")
            for p in paths
        )
        implements_tests = any(patterns.is_test_path(p) for p in paths) or (
            len(patterns.assertion_re.findall(source_text)) >= patterns.min_assertions
        )
        stochastic = bool(patterns.stochastic_re.search(source_text))
        fixes_seed = (
            bool(patterns.seed_re.search(source_text)) if stochastic else None
        )
        languages = sorted(
            {
                table.language_by_extension[ext(p)]
                for p in nonblank
                if ext(p) in table.language_by_extension
            }
        )

        modular = len(source_paths) >= 2 or len(
            re.findall(r"^\s*(def |class |function\s|\w+\s*<-\s*function)", source_text, re.M)
        ) >= 4
        comment_lines = len(re.findall(r"^\s*(#|//|/\*|%|\"\"\"|')", source_text, re.M))
        code_lines = max(1, len([l for l in source_text.splitlines() if l.strip()]))
        documented = comment_lines / code_lines >= 0.08

        result = {
            "is_empty": is_empty,
            "contains_readme": contains_readme,
            "readme_purpose_and_outputs": (
                bool(
                    re.search(r"(purpose|overview|this (repo|repository|project|pipeline|code))", readme_text, re.I)
                    and re.search(r"(output|produce|generate|result)", readme_text, re.I)
                )
                if contains_readme
                else None
            ),
            "contains_requirements": contains_requirements and not is_empty,
            "requirements_dependency_versions": versioned if not is_empty else None,
            "contains_license": contains_license and not is_empty,
            "sufficient_code_documentation": documented and not is_empty,
            "is_modular_and_structured": modular and not is_empty,
            "implements_tests": implements_tests and not is_empty,
            "fixes_seed_if_stochastic": fixes_seed if not is_empty else None,
            "lists_hardware_requirements": bool(patterns.hardware_re.search(readme_text))
            and not is_empty,
            "contains_link_to_paper": bool(patterns.paper_link_re.search(readme_text))
            and not is_empty,
            "contains_citation": (
                any(
                    p.rsplit("/", 1)[-1].upper().startswith("CITATION")
                    for p in paths
                )
                or bool(re.search(r"@(article|misc|software|inproceedings)\{", readme_text))
            )
            and not is_empty,
            "includes_data_or_sample": any(
                ext(p) in table.data_extensions
                and p.rsplit("/", 1)[-1].lower() not in patterns.config_data_denylist
                for p in paths
            )
            and not is_empty,
            "comments_and_explanations": "Deterministic lexical assessment from compiled repository text.",
            "coding_languages": languages if languages and not is_empty else None,
        }
        if is_empty:
            result["contains_requirements"] = False
            result["requirements_dependency_versions"] = None
            result["fixes_seed_if_stochastic"] = None
        elif not contains_requirements:
            result["requirements_dependency_versions"] = None
        return result


_SECTION_HEADER_RE = re.compile(r"^===== (.+?) =====$", re.M)


def _split_compiled(document: str) -> dict[str, str]:
    """Section path -> body text, from a compiled repository document."""
    sections: dict[str, str] = {}
    matches = list(_SECTION_HEADER_RE.finditer(document))
    for i, m in enumerate(matches):
        start = m.end()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(document)
        body = document[start:end].strip("\n")
        if body.startswith("[excluded:"):
            body = ""
        sections[m.group(1)] = body
    return sections


def make_backend(name: str) -> Optional[AssessorBackend]:
    """Backend factory keyed by config value."""
    if name in ("none", "", None):
        return None
    if name == "rule":
        return RuleBackend()
    raise ValueError(f"unknown backend {name!r}")
