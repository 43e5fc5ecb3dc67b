"""Download repository snapshots into a local cache.

Forges (GitHub, GitLab, Gitee) are fetched as default-branch archives,
with the branch discovered from the provider metadata endpoint. Deposit
providers (Zenodo, Figshare, OSF) have no branches; the newest version's
file set is downloaded instead and recorded as the ref label.

All endpoint URLs are configurable templates so the whole module can run
against local stub servers.
"""

from __future__ import annotations

import io
import logging
import posixpath
import re
import tarfile
import zipfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Optional

import yaml

from .httpio import HttpClient, HttpStatusError, TransientHttpError
from .links import DEPOSIT_PROVIDERS, Provider, ResolvedRepoLink, Resolution
from .store import atomic_write_bytes, atomic_write_json, read_json

logger = logging.getLogger(__name__)

MAX_EXTRACTED_BYTES = 2 * 1024**3
MAX_EXTRACTED_FILES = 50_000


class FileKind(str, Enum):
    README = "readme"
    SOURCE = "source"
    DATA = "data"
    BINARY = "binary"
    OTHER = "other"


class FetchStatus(str, Enum):
    OK = "ok"
    PRIVATE_OR_MISSING = "private_or_missing"
    PROVIDER_ERROR = "provider_error"


class ExtractionError(Exception):
    """Corrupt archive, or the zip-bomb guard tripped."""


class ProviderError(Exception):
    """Retryable provider failure: rate limit exhaustion, 5xx, corrupt archive."""


@dataclass(frozen=True)
class FileEntry:
    path: str
    size_bytes: int
    kind: FileKind


@dataclass
class RepoSnapshot:
    canonical_root: str
    provider: Provider
    retrieved_at: str
    ref_label: str
    fetch_status: FetchStatus
    files: list[FileEntry] = field(default_factory=list)
    root: Optional[Path] = None

    def to_dict(self) -> dict:
        return {
            "canonical_root": self.canonical_root,
            "provider": self.provider.value,
            "retrieved_at": self.retrieved_at,
            "ref_label": self.ref_label,
            "fetch_status": self.fetch_status.value,
            "root": str(self.root) if self.root else None,
            "files": [
                {"path": f.path, "size_bytes": f.size_bytes, "kind": f.kind.value}
                for f in self.files
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RepoSnapshot":
        return cls(
            canonical_root=payload["canonical_root"],
            provider=Provider(payload["provider"]),
            retrieved_at=payload["retrieved_at"],
            ref_label=payload["ref_label"],
            fetch_status=FetchStatus(payload["fetch_status"]),
            files=[
                FileEntry(f["path"], f["size_bytes"], FileKind(f["kind"]))
                for f in payload["files"]
            ],
            root=Path(payload["root"]) if payload.get("root") else None,
        )


class KindTable:
    """Extension/basename tables driving file-kind classification."""

    def __init__(self, raw: dict):
        self.readme_basenames = {b.lower() for b in raw["readme_basenames"]}
        self.source_extensions = {e.lower() for e in raw["source_extensions"]}
        self.data_extensions = {e.lower() for e in raw["data_extensions"]}
        self.binary_extensions = {e.lower() for e in raw["binary_extensions"]}
        self.binary_size_threshold = int(raw["binary_size_threshold_bytes"])
        self.language_by_extension = {
            k.lower(): v for k, v in raw["language_by_extension"].items()
        }

    @classmethod
    def load(cls, path: Optional[Path] = None) -> "KindTable":
        if path is None:
            path = Path(__file__).parent / "data" / "file_kinds.yaml"
        with open(path, "r", encoding="utf-8") as fh:
            return cls(yaml.safe_load(fh))


_DEFAULT_TABLE: Optional[KindTable] = None


def default_kind_table() -> KindTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = KindTable.load()
    return _DEFAULT_TABLE


def classify_kind(path: str, size_bytes: int, table: Optional[KindTable] = None) -> FileKind:
    """Pure path/extension/size classification (see data/file_kinds.yaml)."""
    table = table or default_kind_table()
    base = posixpath.basename(path).lower()
    if base in table.readme_basenames:
        return FileKind.README
    ext = base.rsplit(".", 1)[-1] if "." in base else ""
    if ext in table.source_extensions:
        return FileKind.SOURCE
    if size_bytes > table.binary_size_threshold:
        return FileKind.BINARY
    if ext in table.data_extensions:
        return FileKind.DATA
    if ext in table.binary_extensions:
        return FileKind.BINARY
    return FileKind.OTHER


def has_source_code(snapshot: RepoSnapshot) -> bool:
    """True iff the snapshot holds at least one non-empty source file."""
    if snapshot.fetch_status != FetchStatus.OK:
        raise ValueError("has_source_code requires an ok snapshot")
    return any(f.kind == FileKind.SOURCE and f.size_bytes > 0 for f in snapshot.files)


# ---------------------------------------------------------------------------
# Archive extraction with traversal and bomb guards


def _safe_relpath(name: str) -> Optional[str]:
    """Normalize an archive member path; None if unsafe or empty."""
    name = name.replace("\\", "/")
    parts = []
    for part in name.split("/"):
        if part in ("", "."):
            continue
        if part == ".." or part.startswith("/"):
            return None
        parts.append(part)
    if not parts:
        return None
    return "/".join(parts)


def _strip_common_prefix(paths: list[str]) -> dict[str, str]:
    """Forge archives wrap everything in one top directory; unwrap it."""
    tops = {p.split("/", 1)[0] for p in paths}
    if len(tops) == 1 and all("/" in p for p in paths):
        return {p: p.split("/", 1)[1] for p in paths}
    return {p: p for p in paths}


def extract_archive(data: bytes, dest: Path) -> list[str]:
    """Extract a tar.gz/zip archive below dest; returns relative paths.

    Aborts (ExtractionError) beyond 2 GB decompressed or 50,000 files,
    and silently drops members whose paths would escape dest.
    """
    members: list[tuple[str, bytes]] = []
    total = 0
    is_tar = data[:2] == b"\x1f\x8b" or data[257:262] == b"ustar"
    try:
        if is_tar:
            with tarfile.open(fileobj=io.BytesIO(data), mode="r:*") as tf:
                for info in tf:
                    if not info.isfile():
                        continue
                    rel = _safe_relpath(info.name)
                    if rel is None:
                        logger.warning("skipping unsafe archive path %r", info.name)
                        continue
                    total += info.size
                    _check_guards(total, len(members) + 1)
                    fh = tf.extractfile(info)
                    members.append((rel, fh.read() if fh else b""))
        elif data[:4] == b"PK\x03\x04":
            with zipfile.ZipFile(io.BytesIO(data)) as zf:
                for info in zf.infolist():
                    if info.is_dir():
                        continue
                    rel = _safe_relpath(info.filename)
                    if rel is None:
                        logger.warning("skipping unsafe archive path %r", info.filename)
                        continue
                    total += info.file_size
                    _check_guards(total, len(members) + 1)
                    members.append((rel, zf.read(info)))
        else:
            raise ExtractionError("unrecognized archive format")
    except (tarfile.TarError, zipfile.BadZipFile, EOFError, OSError) as exc:
        raise ExtractionError(f"corrupt archive: {exc}") from exc

    mapping = _strip_common_prefix([rel for rel, _ in members])
    written = []
    for rel, blob in members:
        out_rel = mapping[rel]
        atomic_write_bytes(dest / out_rel, blob)
        written.append(out_rel)
    return sorted(written)


def _check_guards(total_bytes: int, n_files: int) -> None:
    if total_bytes > MAX_EXTRACTED_BYTES:
        raise ExtractionError("decompressed size guard exceeded (2 GB)")
    if n_files > MAX_EXTRACTED_FILES:
        raise ExtractionError("file count guard exceeded (50,000)")


def scan_tree(root: Path, table: Optional[KindTable] = None) -> list[FileEntry]:
    """Classify every regular file below root, deterministic order."""
    entries = []
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        size = path.stat().st_size
        entries.append(FileEntry(rel, size, classify_kind(rel, size, table)))
    return entries


# ---------------------------------------------------------------------------
# Provider adapters

# Endpoint templates; every one of these is overridable via config so the
# pipeline can run against mirrors or test stubs.
DEFAULT_PROVIDER_ENDPOINTS: dict[str, dict] = {
    "github": {
        "metadata_url": "https://api.github.com/repos/{owner}/{name}",
        "default_branch_key": "default_branch",
        "archive_url": "https://codeload.github.com/{owner}/{name}/tar.gz/refs/heads/{ref}",
        "token_env": "GITHUB_TOKEN",
        "auth_header": "Authorization: Bearer {token}",
    },
    "gitlab": {
        "metadata_url": "https://gitlab.com/api/v4/projects/{owner}%2F{name}",
        "default_branch_key": "default_branch",
        "archive_url": "https://gitlab.com/{owner}/{name}/-/archive/{ref}/{name}-{ref}.tar.gz",
        "token_env": "GITLAB_TOKEN",
        "auth_header": "PRIVATE-TOKEN: {token}",
    },
    "gitee": {
        "metadata_url": "https://gitee.com/api/v5/repos/{owner}/{name}",
        "default_branch_key": "default_branch",
        "archive_url": "https://gitee.com/{owner}/{name}/repository/archive/{ref}.zip",
        "token_env": "GITEE_TOKEN",
        "auth_header": "Authorization: token {token}",
    },
    "zenodo": {
        "metadata_url": "https://zenodo.org/api/records/{id}",
        "token_env": "ZENODO_TOKEN",
        "auth_header": "Authorization: Bearer {token}",
    },
    "figshare": {
        "metadata_url": "https://api.figshare.com/v2/articles/{id}",
        "token_env": "FIGSHARE_TOKEN",
        "auth_header": "Authorization: token {token}",
    },
    "osf": {
        "metadata_url": "https://api.osf.io/v2/nodes/{id}/files/osfstorage/",
        "token_env": "OSF_TOKEN",
        "auth_header": "Authorization: Bearer {token}",
    },
}


def repo_cache_key(canonical_root: str) -> tuple[str, str]:
    """(group, name) path pair under <cache>/repos/<provider>/."""
    segs = [s for s in canonical_root.split("://", 1)[-1].split("/") if s][1:]
    if len(segs) >= 2:
        group, name = segs[-2], segs[-1]
    elif segs:
        group, name = "node", segs[0]
    else:
        group, name = "repo", "root"
    clean = lambda s: re.sub(r"[^A-Za-z0-9._-]", "_", s)
    return clean(group), clean(name)


def _auth_headers(provider_cfg: dict) -> dict[str, str]:
    import os

    token_env = provider_cfg.get("token_env")
    template = provider_cfg.get("auth_header")
    if not token_env or not template:
        return {}
    token = os.environ.get(token_env, "")
    if not token:
        return {}
    header_name, _, value = template.partition(":")
    return {header_name.strip(): value.strip().format(token=token)}


class RepoFetcher:
    """Fetches and caches snapshots; idempotent on a warm cache."""

    def __init__(
        self,
        cache_dir: Path,
        client: Optional[HttpClient] = None,
        provider_endpoints: Optional[dict] = None,
        kind_table: Optional[KindTable] = None,
        now: Optional[datetime] = None,
    ):
        self.cache_dir = Path(cache_dir)
        self.client = client or HttpClient()
        self.endpoints = {**DEFAULT_PROVIDER_ENDPOINTS}
        for name, overrides in (provider_endpoints or {}).items():
            merged = {**self.endpoints.get(name, {}), **overrides}
            self.endpoints[name] = merged
        self.kind_table = kind_table or default_kind_table()
        self._now = now

    def _timestamp(self) -> str:
        moment = self._now or datetime.now(timezone.utc)
        return moment.strftime("%Y%m%dT%H%M%SZ")

    def snapshot_dir(self, link: ResolvedRepoLink) -> Path:
        group, name = repo_cache_key(link.canonical_root or link.original_url)
        return self.cache_dir / "repos" / link.provider.value / group / name

    def fetch_repository(self, link: ResolvedRepoLink) -> RepoSnapshot:
        """Download (or reuse) the snapshot for a resolved link."""
        if link.resolution != Resolution.OK or not link.canonical_root:
            raise ValueError("fetch_repository requires a resolved (ok) link")
        base = self.snapshot_dir(link)
        manifest_path = base / "snapshot.json"
        if manifest_path.exists():
            snapshot = RepoSnapshot.from_dict(read_json(manifest_path))
            logger.debug("cache hit for %s", link.canonical_root)
            return snapshot

        provider_cfg = self.endpoints[link.provider.value]
        headers = _auth_headers(provider_cfg)
        retrieved_at = self._timestamp()
        try:
            if link.provider in DEPOSIT_PROVIDERS:
                snapshot = self._fetch_deposit(
                    link, provider_cfg, headers, base, retrieved_at
                )
            else:
                snapshot = self._fetch_forge(
                    link, provider_cfg, headers, base, retrieved_at
                )
        except HttpStatusError as exc:
            if exc.status_code in (401, 403, 404, 410):
                snapshot = RepoSnapshot(
                    link.canonical_root, link.provider, retrieved_at, "",
                    FetchStatus.PRIVATE_OR_MISSING,
                )
            else:
                raise ProviderError(str(exc)) from exc
        except TransientHttpError as exc:
            raise ProviderError(str(exc)) from exc
        except ExtractionError as exc:
            raise ProviderError(str(exc)) from exc

        atomic_write_json(manifest_path, snapshot.to_dict())
        return snapshot

    def _fetch_forge(
        self,
        link: ResolvedRepoLink,
        cfg: dict,
        headers: dict,
        base: Path,
        retrieved_at: str,
    ) -> RepoSnapshot:
        owner, name = [s for s in link.canonical_root.split("/") if s][-2:]
        meta_url = cfg["metadata_url"].format(owner=owner, name=name)
        resp = self.client.get(meta_url, limiter=link.provider.value, headers=headers)
        ref = resp.json().get(cfg.get("default_branch_key", "default_branch")) or "main"
        archive_url = cfg["archive_url"].format(owner=owner, name=name, ref=ref)
        archive = self.client.get(
            archive_url, limiter=link.provider.value, headers=headers
        )
        root = base / retrieved_at
        root.mkdir(parents=True, exist_ok=True)
        extract_archive(archive.content, root)
        files = scan_tree(root, self.kind_table)
        if not files:
            # No retrievable content behaves like an inaccessible repo.
            return RepoSnapshot(
                link.canonical_root, link.provider, retrieved_at, ref,
                FetchStatus.PRIVATE_OR_MISSING,
            )
        return RepoSnapshot(
            link.canonical_root, link.provider, retrieved_at, ref,
            FetchStatus.OK, files, root,
        )

    def _fetch_deposit(
        self,
        link: ResolvedRepoLink,
        cfg: dict,
        headers: dict,
        base: Path,
        retrieved_at: str,
    ) -> RepoSnapshot:
        record_id = [s for s in link.canonical_root.split("/") if s][-1]
        meta_url = cfg["metadata_url"].format(id=record_id)
        resp = self.client.get(meta_url, limiter=link.provider.value, headers=headers)
        payload = resp.json()
        root = base / retrieved_at
        if link.provider == Provider.ZENODO:
            ref = str(payload.get("metadata", {}).get("version") or "latest")
            file_list = [
                (f["key"], f["links"]["self"]) for f in payload.get("files", [])
            ]
        elif link.provider == Provider.FIGSHARE:
            ref = f"v{payload.get('version', 1)}"
            file_list = [
                (f["name"], f["download_url"]) for f in payload.get("files", [])
            ]
        else:  # OSF: walk the osfstorage listing, recursing into folders
            ref = "osfstorage"
            file_list = self._walk_osf(payload, headers, prefix="", depth=0)
        for rel_name, url in file_list:
            rel = _safe_relpath(rel_name)
            if rel is None:
                logger.warning("skipping unsafe deposit path %r", rel_name)
                continue
            blob = self.client.get(
                url, limiter=link.provider.value, headers=headers
            ).content
            atomic_write_bytes(root / rel, blob)
        root.mkdir(parents=True, exist_ok=True)
        files = scan_tree(root, self.kind_table)
        if not files:
            return RepoSnapshot(
                link.canonical_root, link.provider, retrieved_at, ref,
                FetchStatus.PRIVATE_OR_MISSING,
            )
        return RepoSnapshot(
            link.canonical_root, link.provider, retrieved_at, ref,
            FetchStatus.OK, files, root,
        )

    def _walk_osf(
        self, payload: dict, headers: dict, prefix: str, depth: int
    ) -> list[tuple[str, str]]:
        if depth > 5:
            return []
        out: list[tuple[str, str]] = []
        for item in payload.get("data", []):
            attrs = item.get("attributes", {})
            name = prefix + attrs.get("name", "file")
            if attrs.get("kind") == "folder":
                href = (
                    item.get("relationships", {})
                    .get("files", {})
                    .get("links", {})
                    .get("related", {})
                    .get("href")
                )
                if href:
                    sub = self.client.get(href, limiter="osf", headers=headers).json()
                    out.extend(self._walk_osf(sub, headers, name + "/", depth + 1))
            else:
                download = item.get("links", {}).get("download")
                if download:
                    out.append((name, download))
        return out
