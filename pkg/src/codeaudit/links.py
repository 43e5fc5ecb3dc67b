"""Repository link classification, canonicalization, and DOI resolution.

Supported hosting providers are GitHub, GitLab, Gitee (forges) and Zenodo,
Figshare, OSF (deposit archives). DOIs are followed to their landing page
first and the landing host is then classified like any direct link.

Canonical roots:
  forges    https://<host>/<owner>/<name>      (two path segments, no .git)
  zenodo    https://zenodo.org/records/<id>
  figshare  https://<host>/<path up to the numeric article id>
  osf       https://osf.io/<id>                (id lowercased)
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional
from urllib.parse import urljoin, urlsplit

from .httpio import HttpClient, HttpStatusError, TransientHttpError

logger = logging.getLogger(__name__)


class Provider(str, Enum):
    GITHUB = "github"
    GITLAB = "gitlab"
    GITEE = "gitee"
    ZENODO = "zenodo"
    FIGSHARE = "figshare"
    OSF = "osf"
    UNSUPPORTED = "unsupported"


class Resolution(str, Enum):
    OK = "ok"
    UNSUPPORTED_PROVIDER = "unsupported_provider"
    MALFORMED = "malformed"
    PROFILE_ONLY = "profile_only"
    DOI_UNRESOLVABLE = "doi_unresolvable"


FORGE_PROVIDERS = frozenset({Provider.GITHUB, Provider.GITLAB, Provider.GITEE})
DEPOSIT_PROVIDERS = frozenset({Provider.ZENODO, Provider.FIGSHARE, Provider.OSF})

_HOST_TABLE = {
    "github.com": Provider.GITHUB,
    "gitlab.com": Provider.GITLAB,
    "gitee.com": Provider.GITEE,
    "zenodo.org": Provider.ZENODO,
    "figshare.com": Provider.FIGSHARE,
    "osf.io": Provider.OSF,
}

_DOI_HOSTS = {"doi.org", "dx.doi.org"}

_BARE_DOI_RE = re.compile(r"^10\.\d{4,9}/\S+$")
_HOST_RE = re.compile(
    r"^([a-z0-9]([a-z0-9.-]*[a-z0-9])?\.[a-z]{2,}|localhost|\d{1,3}(\.\d{1,3}){3})(:\d+)?$"
)

# Canonical public host per forge; aliases (e.g. test stubs) map back here.
_FORGE_CANONICAL_HOST = {
    Provider.GITHUB: "github.com",
    Provider.GITLAB: "gitlab.com",
    Provider.GITEE: "gitee.com",
}

# OSF path segments that are site sections, not project ids.
_OSF_RESERVED = {
    "search", "support", "login", "register", "dashboard", "goodbye",
    "preprints", "registries", "meetings", "institutions", "settings",
}
_OSF_ID_RE = re.compile(r"^[a-zA-Z0-9]{4,8}$")


class MalformedUrlError(ValueError):
    """Input is neither a parseable URL nor a DOI."""


class ProfileOnlyError(ValueError):
    """Forge link points at a user or group profile, not a repository."""


@dataclass(frozen=True)
class ResolvedRepoLink:
    """A classified, canonicalized repository reference.

    provider is None when the input was malformed or a dead DOI, i.e. the
    hosting provider cannot be determined; it is UNSUPPORTED exactly when
    resolution is UNSUPPORTED_PROVIDER.
    """

    original_url: str
    provider: Optional[Provider]
    canonical_root: Optional[str]
    resolution: Resolution
    via_doi: bool = False

    def to_dict(self) -> dict:
        return {
            "original_url": self.original_url,
            "provider": self.provider.value if self.provider else None,
            "canonical_root": self.canonical_root,
            "resolution": self.resolution.value,
            "via_doi": self.via_doi,
        }


def extract_doi(text: str) -> Optional[str]:
    """Return the DOI embedded in *text*, if any.

    Accepts https://doi.org/10.x/..., dx.doi.org forms, "doi:10.x/..."
    prefixes, and bare "10.x/..." strings.
    """
    s = text.strip()
    if s.lower().startswith("doi:"):
        s = s[4:].strip()
    if _BARE_DOI_RE.match(s):
        return s
    if "://" in s:
        parts = urlsplit(s)
        host = parts.netloc.lower().split(":")[0]
        if host.startswith("www."):
            host = host[4:]
        if host in _DOI_HOSTS:
            doi = parts.path.lstrip("/")
            if _BARE_DOI_RE.match(doi):
                return doi
    return None


def _split_url(url: str) -> tuple[str, list[str]]:
    """Parse into (lowercased host sans www, path segments) or raise."""
    s = url.strip()
    if not s:
        raise MalformedUrlError("empty URL")
    if "://" not in s:
        s = "https://" + s
    try:
        parts = urlsplit(s)
    except ValueError as exc:
        raise MalformedUrlError(f"not a URL: {url!r}") from exc
    host = parts.netloc.lower().rstrip(".")
    if host.startswith("www."):
        host = host[4:]
    if not _HOST_RE.match(host):
        raise MalformedUrlError(f"not a URL: {url!r}")
    host = host.split(":")[0]
    segments = [seg for seg in parts.path.split("/") if seg]
    return host, segments


def _provider_for_host(host: str, extra_hosts: Optional[dict] = None) -> Provider:
    if extra_hosts and host in extra_hosts:
        return Provider(extra_hosts[host])
    if host in _HOST_TABLE:
        return _HOST_TABLE[host]
    if host.endswith(".figshare.com"):
        return Provider.FIGSHARE
    return Provider.UNSUPPORTED


def classify_provider(
    url: str,
    doi_resolver: Optional["DoiResolver"] = None,
    extra_hosts: Optional[dict] = None,
) -> Provider:
    """Classify a link by hosting provider.

    DOI inputs are resolved to their landing page first, which requires a
    resolver; without one, DOI inputs raise ValueError. extra_hosts maps
    additional hostnames onto provider names (used to point the pipeline
    at mirrors or test stubs). Raises MalformedUrlError for strings that
    are neither URLs nor DOIs.
    """
    doi = extract_doi(url)
    if doi is not None:
        if doi_resolver is None:
            raise ValueError("DOI links require a resolver to classify")
        target = doi_resolver.resolve(doi)
        if target is None:
            raise ValueError(f"DOI did not resolve: {doi}")
        return classify_provider(target, extra_hosts=extra_hosts)
    host, _ = _split_url(url)
    return _provider_for_host(host, extra_hosts)


def normalize_to_root(url: str, provider: Provider) -> str:
    """Reduce a provider link to its canonical repository root.

    Strips branch/tree/blob/release/subfolder suffixes, query strings,
    fragments, trailing slashes and ".git"; lowercases the host. Raises
    ProfileOnlyError for single-segment forge paths and MalformedUrlError
    when no repository can be identified.
    """
    if provider == Provider.UNSUPPORTED:
        raise ValueError("cannot canonicalize an unsupported provider link")
    host, segs = _split_url(url)
    if provider in FORGE_PROVIDERS:
        if not segs:
            raise MalformedUrlError(f"no repository path in {url!r}")
        if len(segs) == 1:
            raise ProfileOnlyError(f"profile link, no repository: {url!r}")
        owner, name = segs[0], segs[1]
        if name.endswith(".git") and len(name) > 4:
            name = name[:-4]
        return f"https://{_FORGE_CANONICAL_HOST[provider]}/{owner}/{name}"
    if provider == Provider.ZENODO:
        return _normalize_zenodo(url, segs)
    if provider == Provider.FIGSHARE:
        return _normalize_figshare(url, host, segs)
    if provider == Provider.OSF:
        return _normalize_osf(url, segs)
    raise ValueError(f"unhandled provider {provider}")


def _normalize_zenodo(url: str, segs: list[str]) -> str:
    # /record/<id>, /records/<id>, /api/records/<id>, /doi/10.5281/zenodo.<id>
    for i, seg in enumerate(segs):
        if seg in ("record", "records") and i + 1 < len(segs):
            candidate = segs[i + 1]
            if candidate.isdigit():
                return f"https://zenodo.org/records/{candidate}"
    if segs and segs[0] == "doi":
        m = re.search(r"zenodo\.(\d+)$", segs[-1])
        if m:
            return f"https://zenodo.org/records/{m.group(1)}"
    raise MalformedUrlError(f"no record id in zenodo link {url!r}")


def _normalize_figshare(url: str, host: str, segs: list[str]) -> str:
    if not segs:
        raise MalformedUrlError(f"no article path in figshare link {url!r}")
    if segs[0] == "s" and len(segs) >= 2:
        return f"https://{host}/s/{segs[1]}"
    if segs[0] in ("articles", "collections", "projects"):
        for i, seg in enumerate(segs):
            if seg.isdigit():
                return f"https://{host}/" + "/".join(segs[: i + 1])
        raise MalformedUrlError(f"no numeric id in figshare link {url!r}")
    raise MalformedUrlError(f"unrecognized figshare path {url!r}")


def _normalize_osf(url: str, segs: list[str]) -> str:
    if not segs:
        raise MalformedUrlError(f"no project id in OSF link {url!r}")
    candidate = segs[0]
    if candidate.lower() in _OSF_RESERVED or not _OSF_ID_RE.match(candidate):
        raise MalformedUrlError(f"not an OSF project id: {url!r}")
    return f"https://osf.io/{candidate.lower()}"


class DoiResolver:
    """Follow DOI redirects to a landing URL, with bounded depth and a cache.

    The redirect chain is walked manually so loops and excessive depth are
    detected; any terminal non-2xx response marks the DOI unresolvable.
    Given a fixed resolver response table (as in tests) resolution is
    deterministic.
    """

    def __init__(
        self,
        client: Optional[HttpClient] = None,
        base_url: str = "https://doi.org",
        max_hops: int = 10,
        limiter: Optional[str] = "doi",
    ):
        self.client = client or HttpClient()
        self.base_url = base_url.rstrip("/")
        self.max_hops = max_hops
        self.limiter = limiter
        self._cache: dict[str, Optional[str]] = {}

    def resolve(self, doi: str) -> Optional[str]:
        """Return the final landing URL, or None if unresolvable."""
        if not _BARE_DOI_RE.match(doi):
            raise ValueError(f"not a DOI: {doi!r}")
        if doi in self._cache:
            return self._cache[doi]
        result = self._follow(f"{self.base_url}/{doi}")
        self._cache[doi] = result
        return result

    def _follow(self, start: str) -> Optional[str]:
        url = start
        seen = {url}
        for _ in range(self.max_hops):
            try:
                resp = self.client.get(
                    url, limiter=self.limiter, allow_redirects=False,
                    ok_statuses=(200,),
                )
            except (HttpStatusError, TransientHttpError) as exc:
                logger.info("DOI hop failed at %s: %s", url, exc)
                return None
            if 300 <= resp.status_code < 400:
                location = resp.headers.get("Location")
                if not location:
                    return None
                url = urljoin(url, location)
                if url in seen:
                    logger.info("DOI redirect loop at %s", url)
                    return None
                seen.add(url)
                continue
            if 200 <= resp.status_code < 300:
                return url
            return None
        logger.info("DOI redirect depth exceeded from %s", start)
        return None


ResolverLike = Callable[[str], Optional[str]]


def resolve_link(
    url: str,
    doi_resolver: Optional[DoiResolver] = None,
    extra_hosts: Optional[dict] = None,
) -> ResolvedRepoLink:
    """Classify and canonicalize a repository link end to end.

    Never raises for data-level failures; the failure mode is encoded in
    the returned resolution field.
    """
    target = url
    via_doi = False
    doi = extract_doi(url)
    if doi is not None:
        via_doi = True
        resolved = doi_resolver.resolve(doi) if doi_resolver is not None else None
        if resolved is None:
            return ResolvedRepoLink(url, None, None, Resolution.DOI_UNRESOLVABLE, True)
        target = resolved
    try:
        host, _ = _split_url(target)
    except MalformedUrlError:
        return ResolvedRepoLink(url, None, None, Resolution.MALFORMED, via_doi)
    provider = _provider_for_host(host, extra_hosts)
    if provider == Provider.UNSUPPORTED:
        return ResolvedRepoLink(
            url, Provider.UNSUPPORTED, None, Resolution.UNSUPPORTED_PROVIDER, via_doi
        )
    try:
        root = normalize_to_root(target, provider)
    except ProfileOnlyError:
        return ResolvedRepoLink(url, provider, None, Resolution.PROFILE_ONLY, via_doi)
    except MalformedUrlError:
        return ResolvedRepoLink(url, provider, None, Resolution.MALFORMED, via_doi)
    return ResolvedRepoLink(url, provider, root, Resolution.OK, via_doi)
