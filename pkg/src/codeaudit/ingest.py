"""Cohort ingestion: citation aggregation, full-text retrieval, preprocessing.

Citation lists (one article id per line, one file per guideline entry)
are unioned into a deduplicated cohort. Full texts come from a
configurable open-access endpoint, cached on disk so reruns never refetch.
Preprocessing strips figures, tables and appendix/supplementary sections
from the article markup while keeping section headings as location
markers.
"""

from __future__ import annotations

import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .httpio import HttpClient, HttpStatusError
from .store import atomic_write_bytes

logger = logging.getLogger(__name__)

_ID_RE = re.compile(r"^\d+$")
YEAR_MIN = 1900


class OaStatus(str, Enum):
    RETRIEVED = "retrieved"
    NOT_RETRIEVABLE = "not_retrievable"
    PENDING = "pending"


class PreprocessError(Exception):
    """Article markup could not be parsed; carries the byte offset."""

    def __init__(self, message: str, offset: Optional[int] = None):
        super().__init__(message)
        self.offset = offset


class EmptyTextError(Exception):
    """Document has no body text left after exclusions."""


@dataclass
class ArticleRecord:
    article_id: str
    source_entries: tuple[str, ...] = ()
    title: Optional[str] = None
    journal: Optional[str] = None
    publication_year: Optional[int] = None
    oa_status: OaStatus = OaStatus.PENDING
    screening_text: Optional[str] = None

    def __post_init__(self):
        if self.publication_year is not None:
            ceiling = datetime.now(timezone.utc).year + 1
            if not (YEAR_MIN <= self.publication_year <= ceiling):
                logger.warning(
                    "article %s: implausible year %s dropped",
                    self.article_id,
                    self.publication_year,
                )
                self.publication_year = None
        if (self.screening_text is not None) != (self.oa_status == OaStatus.RETRIEVED):
            raise ValueError(
                "screening_text must be present exactly when oa_status is retrieved"
            )

    def to_dict(self) -> dict:
        return {
            "article_id": self.article_id,
            "source_entries": sorted(self.source_entries),
            "title": self.title,
            "journal": self.journal,
            "publication_year": self.publication_year,
            "oa_status": self.oa_status.value,
        }

    @classmethod
    def from_dict(cls, payload: dict, screening_text: Optional[str] = None) -> "ArticleRecord":
        """Rehydrate from a manifest row.

        The preprocessed text itself is stored in separate per-article
        files; retrieved rows rehydrate with an empty placeholder unless
        the text is supplied.
        """
        status = OaStatus(payload.get("oa_status", "pending"))
        if screening_text is None and status == OaStatus.RETRIEVED:
            screening_text = ""
        return cls(
            article_id=str(payload["article_id"]),
            source_entries=tuple(payload.get("source_entries", ())),
            title=payload.get("title"),
            journal=payload.get("journal"),
            publication_year=payload.get("publication_year"),
            oa_status=status,
            screening_text=screening_text,
        )


@dataclass
class CohortCounts:
    total_raw: int = 0
    duplicates_removed: int = 0
    unique: int = 0
    not_retrievable: int = 0

    def to_dict(self) -> dict:
        return {
            "total_raw": self.total_raw,
            "duplicates_removed": self.duplicates_removed,
            "unique": self.unique,
            "not_retrievable": self.not_retrievable,
        }


@dataclass
class CohortManifest:
    records: list[ArticleRecord]
    created_at: str
    counts: CohortCounts = field(default_factory=CohortCounts)


def aggregate_citations(citation_lists: Mapping[str, Iterable[str]]) -> CohortManifest:
    """Union per-entry citation lists into a deduplicated cohort.

    Malformed identifiers are logged and skipped (never fatal) and do not
    count toward the totals. Record order is ascending article id.
    """
    by_id: dict[str, set[str]] = {}
    total_raw = 0
    for entry_id, ids in citation_lists.items():
        for raw in ids:
            candidate = str(raw).strip()
            if not candidate:
                continue
            if not _ID_RE.match(candidate):
                logger.warning(
                    "entry %s: skipping malformed article id %r", entry_id, raw
                )
                continue
            total_raw += 1
            by_id.setdefault(candidate, set()).add(str(entry_id))
    records = [
        ArticleRecord(article_id=aid, source_entries=tuple(sorted(by_id[aid])))
        for aid in sorted(by_id, key=int)
    ]
    counts = CohortCounts(
        total_raw=total_raw,
        duplicates_removed=total_raw - len(records),
        unique=len(records),
    )
    return CohortManifest(
        records=records,
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        counts=counts,
    )


def load_citation_lists(paths: Iterable[Path]) -> dict[str, list[str]]:
    """One identifier per line; the file stem names the guideline entry."""
    lists: dict[str, list[str]] = {}
    for path in sorted(Path(p) for p in paths):
        with path.open("r", encoding="utf-8") as fh:
            lists[path.stem] = [line.strip() for line in fh if line.strip()]
    return lists


class FullTextClient:
    """Retrieves open-access full texts with an on-disk cache.

    endpoint_template must contain {pmid} or {pmcid}; the latter engages
    the id-conversion endpoint (JSON {"pmcid": ...}) first. A cache hit
    short-circuits the network entirely, and permanent unavailability
    (HTTP 404/410, or an <error> body) marks the record not_retrievable.
    """

    def __init__(
        self,
        endpoint_template: str,
        cache_dir: Path,
        client: Optional[HttpClient] = None,
        idconv_template: Optional[str] = None,
        limiter: Optional[str] = "oa",
    ):
        self.endpoint_template = endpoint_template
        self.idconv_template = idconv_template
        self.cache_dir = Path(cache_dir)
        self.client = client or HttpClient()
        self.limiter = limiter

    def cache_path(self, article_id: str) -> Path:
        return self.cache_dir / "fulltext" / f"{article_id}.xml"

    def fetch(self, record: ArticleRecord) -> ArticleRecord:
        """Idempotently retrieve one article's full text."""
        cached = self.cache_path(record.article_id)
        if cached.exists():
            return self._mark_retrieved(record, cached.read_bytes())
        url = self._build_url(record.article_id)
        if url is None:
            return replace(record, oa_status=OaStatus.NOT_RETRIEVABLE)
        try:
            resp = self.client.get(url, limiter=self.limiter)
        except HttpStatusError as exc:
            if exc.status_code in (404, 410):
                return replace(record, oa_status=OaStatus.NOT_RETRIEVABLE)
            raise
        body = resp.content
        if _is_oa_error_body(body):
            return replace(record, oa_status=OaStatus.NOT_RETRIEVABLE)
        atomic_write_bytes(cached, body)
        return self._mark_retrieved(record, body)

    def _build_url(self, article_id: str) -> Optional[str]:
        if "{pmcid}" in self.endpoint_template:
            pmcid = self._convert_id(article_id)
            if pmcid is None:
                return None
            return self.endpoint_template.format(pmcid=pmcid)
        return self.endpoint_template.format(pmid=article_id)

    def _convert_id(self, article_id: str) -> Optional[str]:
        if not self.idconv_template:
            raise ValueError("endpoint uses {pmcid} but no idconv endpoint configured")
        url = self.idconv_template.format(pmid=article_id)
        try:
            payload = self.client.get(url, limiter=self.limiter).json()
        except HttpStatusError:
            return None
        return payload.get("pmcid")

    def _mark_retrieved(self, record: ArticleRecord, body: bytes) -> ArticleRecord:
        meta = {}
        try:
            meta = parse_front_metadata(body)
        except PreprocessError as exc:
            logger.warning("article %s: metadata parse failed: %s", record.article_id, exc)
        return replace(
            record,
            oa_status=OaStatus.RETRIEVED,
            title=meta.get("title") or record.title,
            journal=meta.get("journal") or record.journal,
            publication_year=meta.get("year") or record.publication_year,
            screening_text=record.screening_text or "",
        )


def _is_oa_error_body(body: bytes) -> bool:
    head = body[:512].lstrip()
    return head.startswith(b"<error") or b"<error " in head or b"<error>" in head


# ---------------------------------------------------------------------------
# Article markup preprocessing (JATS-style XML)

_EXCLUDED_TAGS = {
    "fig", "fig-group", "table-wrap", "table-wrap-group", "table",
    "supplementary-material", "app", "app-group", "graphic", "media",
    "ref-list", "inline-graphic",
}
_APPENDIX_TITLE_RE = re.compile(r"appendix|supplement", re.IGNORECASE)


def _parse_xml(raw: bytes | str) -> ET.Element:
    data = raw.encode("utf-8") if isinstance(raw, str) else raw
    try:
        return ET.fromstring(data)
    except ET.ParseError as exc:
        line, col = exc.position
        offset = _line_col_to_offset(data, line, col)
        raise PreprocessError(f"unparseable markup: {exc}", offset=offset) from exc


def _line_col_to_offset(data: bytes, line: int, col: int) -> int:
    lines = data.split(b"\n")
    return sum(len(l) + 1 for l in lines[: line - 1]) + col


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1] if "}" in tag else tag


def _text_of(elem: Optional[ET.Element]) -> str:
    if elem is None:
        return ""
    return re.sub(r"\s+", " ", " ".join(elem.itertext())).strip()


def parse_front_metadata(raw: bytes | str) -> dict:
    """Title, journal, year and affiliations from the article front matter."""
    root = _parse_xml(raw)
    out: dict = {}
    title = root.find(".//front//article-title")
    journal = root.find(".//front//journal-title")
    out["title"] = _text_of(title) or None
    out["journal"] = _text_of(journal) or None
    year = None
    for pub_date in root.findall(".//front//pub-date"):
        y = _text_of(pub_date.find("year"))
        if y.isdigit():
            year = int(y)
            break
    out["year"] = year
    out["affiliations"] = [
        _text_of(aff) for aff in root.findall(".//front//aff") if _text_of(aff)
    ]
    return out


def _is_appendix_sec(elem: ET.Element) -> bool:
    sec_type = (elem.get("sec-type") or "").lower()
    if "appendix" in sec_type or "supplement" in sec_type:
        return True
    title = elem.find("title")
    return title is not None and bool(_APPENDIX_TITLE_RE.search(_text_of(title)))


def _render_sec(elem: ET.Element, depth: int, lines: list[str]) -> None:
    tag = _local(elem.tag)
    if tag in _EXCLUDED_TAGS:
        return
    if tag == "sec" and _is_appendix_sec(elem):
        return
    title = elem.find("title") if tag == "sec" else None
    if title is not None:
        heading = _text_of(title)
        if heading:
            lines.append("#" * min(depth + 2, 6) + " " + heading)
    for child in elem:
        ctag = _local(child.tag)
        if ctag in _EXCLUDED_TAGS:
            continue
        if ctag == "sec":
            _render_sec(child, depth + 1, lines)
        elif ctag == "p":
            text = _paragraph_text(child)
            if text:
                lines.append(text)
        elif ctag == "title":
            continue
        else:
            _render_sec(child, depth, lines)


def _paragraph_text(elem: ET.Element) -> str:
    clone = _strip_excluded(elem)
    return _text_of(clone)


def _strip_excluded(elem: ET.Element) -> ET.Element:
    clone = ET.Element(elem.tag, elem.attrib)
    clone.text = elem.text
    clone.tail = elem.tail
    for child in elem:
        if _local(child.tag) in _EXCLUDED_TAGS:
            # keep the tail so surrounding prose is not lost
            if child.tail:
                last = clone[-1] if len(clone) else None
                if last is not None:
                    last.tail = (last.tail or "") + child.tail
                else:
                    clone.text = (clone.text or "") + child.tail
            continue
        clone.append(_strip_excluded(child))
    return clone


def preprocess_fulltext(raw: bytes | str) -> str:
    """Body text with figures, tables and appendices removed.

    Section headings are kept as '#'-prefixed marker lines so statement
    locations remain classifiable downstream. Output is deterministic for
    a given input. Raises EmptyTextError when nothing remains.
    """
    root = _parse_xml(raw)
    lines: list[str] = []

    front = parse_front_metadata(raw)
    if front.get("title"):
        lines.append("# " + front["title"])
    if front.get("affiliations"):
        lines.append("Affiliations: " + "; ".join(front["affiliations"]))

    abstract = root.find(".//front//abstract")
    if abstract is not None:
        lines.append("## Abstract")
        _render_sec(abstract, 1, lines)

    body = root.find(".//body")
    if body is not None:
        _render_sec(body, 0, lines)

    back = root.find(".//back")
    if back is not None:
        for child in back:
            if _local(child.tag) == "sec":
                _render_sec(child, 0, lines)

    if body is None and abstract is None:
        raise EmptyTextError("document has no body")
    prose = [
        l for l in lines if not l.startswith("#") and not l.startswith("Affiliations:")
    ]
    if not prose:
        raise EmptyTextError("no body text after exclusions")
    return "\n\n".join(lines) + "\n"
