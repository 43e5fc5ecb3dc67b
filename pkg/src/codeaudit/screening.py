"""Article screening: validated structured verdicts and sharing status.

The screening verdict schema is a strict wire contract: exact field
names, enum-checked statement locations, and conditional-presence rules
(no repository fields on non-matching papers, statement fields only when
a repository is reported). Validation enumerates every violated rule so
a backend can be re-asked with the failure list appended.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping, Optional, Sequence

from .backends import AssessorBackend
from .countries import normalize_country
from .links import Resolution
from .prompts import (
    CODE_STATEMENT_LOCATIONS,
    PAPER_ASSESSMENT_SCHEMA,
    PAPER_SCREENING_PROMPT,
)
from .repofetch import FetchStatus

logger = logging.getLogger(__name__)

APPENDIX_SENTINEL = "Appendix"

PAPER_FIELDS = (
    "is_match",
    "reason",
    "country_first_author_institution",
    "repo_url",
    "code_statement_locations",
    "code_statement_sentence",
)


@dataclass(frozen=True)
class PaperAssessment:
    is_match: bool
    reason: str
    country_first_author_institution: str
    repo_url: Optional[str] = None
    code_statement_locations: Optional[tuple[str, ...]] = None
    code_statement_sentence: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "is_match": self.is_match,
            "reason": self.reason,
            "country_first_author_institution": self.country_first_author_institution,
            "repo_url": self.repo_url,
            "code_statement_locations": (
                list(self.code_statement_locations)
                if self.code_statement_locations is not None
                else None
            ),
            "code_statement_sentence": self.code_statement_sentence,
        }


class ValidationFailure(ValueError):
    """Raw output violated the schema; violations lists every broken rule."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class ScreeningFailedError(Exception):
    """Backend never produced a valid assessment within the re-ask budget."""

    def __init__(self, reason: str, raw_outputs: list[str]):
        super().__init__(reason)
        self.raw_outputs = raw_outputs


def _dedup_keep_order(values: Sequence[str]) -> tuple[str, ...]:
    seen = set()
    out = []
    for v in values:
        if v not in seen:
            seen.add(v)
            out.append(v)
    return tuple(out)


def validate_assessment(raw: Mapping[str, Any]) -> PaperAssessment:
    """Validate a parsed key-value structure against the screening schema.

    Raises ValidationFailure enumerating every violated rule. The country
    value is intentionally not validated here (unrecognized names are
    flagged downstream, not rejected).
    """
    violations: list[str] = []
    for key in raw:
        if key not in PAPER_FIELDS:
            violations.append(f"unknown_field:{key}")

    is_match = raw.get("is_match")
    if not isinstance(is_match, bool):
        violations.append("is_match_not_boolean")
    reason = raw.get("reason")
    if not isinstance(reason, str):
        violations.append("reason_not_string")
    country = raw.get("country_first_author_institution")
    if not isinstance(country, str):
        violations.append("country_not_string")

    repo_url = raw.get("repo_url")
    if repo_url is not None and not isinstance(repo_url, str):
        violations.append("repo_url_not_string")
        repo_url = None

    locations = raw.get("code_statement_locations")
    if locations is not None:
        if not isinstance(locations, (list, tuple)):
            violations.append("locations_not_list")
            locations = None
        else:
            for value in locations:
                if value not in CODE_STATEMENT_LOCATIONS:
                    violations.append(f"unknown_location:{value}")

    sentence = raw.get("code_statement_sentence")
    if sentence is not None and not isinstance(sentence, str):
        violations.append("sentence_not_string")
        sentence = None

    # Conditional-presence rules
    if is_match is False:
        if repo_url is not None:
            violations.append("repo_url_with_nonmatch")
        if locations is not None:
            violations.append("locations_with_nonmatch")
        if sentence is not None:
            violations.append("sentence_with_nonmatch")
    if repo_url is None:
        if locations is not None:
            violations.append("locations_without_repo_url")
        if sentence is not None:
            violations.append("sentence_without_repo_url")
    if (
        isinstance(repo_url, str)
        and repo_url != APPENDIX_SENTINEL
        and isinstance(sentence, str)
        and repo_url in sentence
    ):
        violations.append("sentence_contains_url")

    if violations:
        raise ValidationFailure(violations)
    return PaperAssessment(
        is_match=is_match,
        reason=reason,
        country_first_author_institution=country,
        repo_url=repo_url,
        code_statement_locations=(
            _dedup_keep_order(locations) if locations is not None else None
        ),
        code_statement_sentence=sentence,
    )


@dataclass
class ScreenResult:
    assessment: PaperAssessment
    raw_outputs: list[str]
    country_recognized: bool
    attempts: int


def screen_article(
    text: str,
    backend: AssessorBackend,
    max_reasks: int = 2,
) -> ScreenResult:
    """Produce a validated screening verdict for one article.

    The screening prompt is sent verbatim; invalid structured output is
    re-asked at most max_reasks times with the violation list appended,
    then the article fails screening. Every raw output is returned for
    archiving.
    """
    if not text or not text.strip():
        raise ValueError("screening requires non-empty article text")
    raw_outputs: list[str] = []
    prompt = PAPER_SCREENING_PROMPT
    last_failure: Optional[ValidationFailure] = None
    for attempt in range(max_reasks + 1):
        raw = backend.invoke(prompt, text, PAPER_ASSESSMENT_SCHEMA)
        raw_outputs.append(raw)
        try:
            parsed = json.loads(raw)
            if not isinstance(parsed, dict):
                raise ValidationFailure(["output_not_object"])
            assessment = validate_assessment(parsed)
        except json.JSONDecodeError as exc:
            last_failure = ValidationFailure([f"unparseable_json:{exc.msg}"])
        except ValidationFailure as exc:
            last_failure = exc
        else:
            country, recognized = normalize_country(
                assessment.country_first_author_institution
            )
            if not recognized:
                logger.warning("unrecognized country name: %r", country)
            assessment = PaperAssessment(
                is_match=assessment.is_match,
                reason=assessment.reason,
                country_first_author_institution=country,
                repo_url=assessment.repo_url,
                code_statement_locations=assessment.code_statement_locations,
                code_statement_sentence=assessment.code_statement_sentence,
            )
            return ScreenResult(assessment, raw_outputs, recognized, attempt + 1)
        prompt = (
            PAPER_SCREENING_PROMPT
            + "\nThe previous response violated these rules: "
            + "; ".join(last_failure.violations)
            + ". Return a corrected response."
        )
    raise ScreeningFailedError(
        f"assessment_failed after {max_reasks} re-asks: {last_failure}",
        raw_outputs,
    )


class SharingStatus(str, Enum):
    SHARES_APPENDIX = "shares_appendix"
    SHARES_UNSUPPORTED_PROVIDER = "shares_unsupported_provider"
    SHARES_REPOSITORY = "shares_repository"
    LINK_UNRESOLVED = "link_unresolved"
    REPO_EMPTY = "repo_empty"
    NO_CODE = "no_code"


SHARING = frozenset(
    {
        SharingStatus.SHARES_APPENDIX,
        SharingStatus.SHARES_UNSUPPORTED_PROVIDER,
        SharingStatus.SHARES_REPOSITORY,
    }
)


@dataclass(frozen=True)
class LinkOutcome:
    """What happened to a screened repository URL downstream."""

    resolution: Resolution
    fetch_status: Optional[FetchStatus] = None
    has_source: Optional[bool] = None


def determine_sharing_status(
    assessment: PaperAssessment, link_outcome: Optional[LinkOutcome] = None
) -> SharingStatus:
    """Six-way code-sharing classification for one assessed article.

    Requires a link outcome whenever the screening verdict carries a URL
    (anything except the "Appendix" sentinel).
    """
    repo_url = assessment.repo_url
    if repo_url is None:
        return SharingStatus.NO_CODE
    if repo_url == APPENDIX_SENTINEL:
        return SharingStatus.SHARES_APPENDIX
    if link_outcome is None:
        raise ValueError("URL repo_url requires a link outcome")
    if link_outcome.resolution == Resolution.UNSUPPORTED_PROVIDER:
        return SharingStatus.SHARES_UNSUPPORTED_PROVIDER
    if link_outcome.resolution != Resolution.OK:
        return SharingStatus.LINK_UNRESOLVED
    if link_outcome.fetch_status != FetchStatus.OK:
        return SharingStatus.LINK_UNRESOLVED
    if link_outcome.has_source:
        return SharingStatus.SHARES_REPOSITORY
    return SharingStatus.REPO_EMPTY
