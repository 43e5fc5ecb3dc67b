"""Shared fixtures: stub HTTP servers, fixture repos, article builders."""

from __future__ import annotations

import io
import json
import re
import tarfile
import threading
import zipfile
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from codeaudit.links import Provider, ResolvedRepoLink, Resolution
from codeaudit.repofetch import FetchStatus, RepoSnapshot, scan_tree

_DOI_RE = re.compile(r"^10\.\d{4,9}/\S+$")


class FakeResolver:
    """In-memory DOI resolution table; deterministic stand-in for the network."""

    def __init__(self, table: dict[str, str | None]):
        self.table = dict(table)
        self.calls: list[str] = []

    def resolve(self, doi: str):
        if not _DOI_RE.match(doi):
            raise ValueError(f"not a DOI: {doi!r}")
        self.calls.append(doi)
        return self.table.get(doi)


DOI_TABLE = {
    "10.5281/zenodo.4077342": "https://zenodo.org/records/4077342",
    "10.6084/m9.figshare.12345": "https://figshare.com/articles/dataset/My_Data/12345",
}


@pytest.fixture
def fake_resolver():
    return FakeResolver(DOI_TABLE)


class _StubHandler(BaseHTTPRequestHandler):
    def do_GET(self):
        self.server.request_log.append(self.path)
        route = self.server.routes.get(self.path)
        if route is None:
            self.send_response(404)
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        if callable(route):
            route = route(self)
        status, headers, body = route
        if isinstance(body, str):
            body = body.encode("utf-8")
        self.send_response(status)
        for key, value in headers.items():
            self.send_header(key, value)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


class StubServer:
    """Route table + request log around a loopback HTTP server."""

    def __init__(self):
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self.server.routes = {}
        self.server.request_log = []
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def routes(self) -> dict:
        return self.server.routes

    @property
    def request_log(self) -> list[str]:
        return self.server.request_log

    def url(self, path: str = "") -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}{path}"

    def add_json(self, path: str, payload, status: int = 200) -> None:
        self.routes[path] = (status, {"Content-Type": "application/json"}, json.dumps(payload))

    def add_bytes(self, path: str, body: bytes, status: int = 200,
                  content_type: str = "application/octet-stream") -> None:
        self.routes[path] = (status, {"Content-Type": content_type}, body)

    def add_redirect(self, path: str, location: str, status: int = 302) -> None:
        self.routes[path] = (status, {"Location": location}, b"")

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_server():
    server = StubServer()
    yield server
    server.close()


def make_targz(files: dict[str, bytes | str], prefix: str = "repo-main") -> bytes:
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w:gz") as tf:
        for path in sorted(files):
            data = files[path]
            if isinstance(data, str):
                data = data.encode("utf-8")
            info = tarfile.TarInfo(name=f"{prefix}/{path}" if prefix else path)
            info.size = len(data)
            tf.addfile(info, io.BytesIO(data))
    return buf.getvalue()


def make_zip(files: dict[str, bytes | str], prefix: str = "repo-main") -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for path in sorted(files):
            data = files[path]
            if isinstance(data, str):
                data = data.encode("utf-8")
            zf.writestr(f"{prefix}/{path}" if prefix else path, data)
    return buf.getvalue()


def write_tree(root: Path, files: dict[str, bytes | str]) -> None:
    for rel, data in files.items():
        target = root / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(data, str):
            target.write_text(data, encoding="utf-8")
        else:
            target.write_bytes(data)


def build_snapshot(
    tmp_path: Path,
    files: dict[str, bytes | str],
    name: str = "demo",
    owner: str = "fixture",
) -> RepoSnapshot:
    """Materialize files on disk and wrap them in an ok snapshot."""
    root = tmp_path / owner / name
    root.mkdir(parents=True, exist_ok=True)
    write_tree(root, files)
    return RepoSnapshot(
        canonical_root=f"https://github.com/{owner}/{name}",
        provider=Provider.GITHUB,
        retrieved_at="20250101T000000Z",
        ref_label="main",
        fetch_status=FetchStatus.OK,
        files=scan_tree(root),
        root=root,
    )


def ok_link(url: str = "https://github.com/fixture/demo") -> ResolvedRepoLink:
    return ResolvedRepoLink(url, Provider.GITHUB, url, Resolution.OK)


def jats_article(
    title: str = "Development and validation of a prediction model",
    journal: str = "J Pred Med",
    year: int = 2024,
    affiliation: str = "Department of X, University of Y, Paris, France",
    abstract: str = "We developed a prediction model for outcome Z.",
    sections: list[tuple[str, list[str]]] | None = None,
    back_sections: list[tuple[str, list[str]]] | None = None,
    with_figure: bool = False,
    with_table: bool = False,
    with_appendix: bool = False,
) -> bytes:
    """Small JATS-style article builder for ingest/screening tests."""
    if sections is None:
        sections = [
            ("Introduction", ["Intro text."]),
            ("Methods", ["We used Cox regression to develop a prediction model."]),
            ("Results", ["Results text."]),
        ]
    if back_sections is None:
        back_sections = []
    parts = ["<article><front><journal-meta><journal-title-group>"]
    parts.append(f"<journal-title>{journal}</journal-title>")
    parts.append("</journal-title-group></journal-meta><article-meta>")
    parts.append(f"<title-group><article-title>{title}</article-title></title-group>")
    parts.append(f"<aff>{affiliation}</aff>")
    parts.append(f"<pub-date><year>{year}</year></pub-date>")
    if abstract:
        parts.append(f"<abstract><p>{abstract}</p></abstract>")
    parts.append("</article-meta></front><body>")
    for i, (heading, paragraphs) in enumerate(sections):
        parts.append(f"<sec><title>{heading}</title>")
        for p in paragraphs:
            parts.append(f"<p>{p}</p>")
        if with_figure and i == 0:
            parts.append("<fig><caption><p>FIGURE CONTENT</p></caption></fig>")
        if with_table and i == 0:
            parts.append("<table-wrap><table><tr><td>TABLE CONTENT</td></tr></table></table-wrap>")
        parts.append("</sec>")
    if with_appendix:
        parts.append("<sec><title>Appendix A</title><p>APPENDIX CONTENT</p></sec>")
    parts.append("</body><back>")
    for heading, paragraphs in back_sections:
        parts.append(f"<sec><title>{heading}</title>")
        for p in paragraphs:
            parts.append(f"<p>{p}</p>")
        parts.append("</sec>")
    parts.append("</back></article>")
    return "".join(parts).encode("utf-8")


def register_forge_repo(
    server: StubServer,
    owner: str,
    name: str,
    files: dict[str, bytes | str],
    default_branch: str = "main",
) -> dict:
    """Serve GitHub-shaped metadata + archive for one repo; returns endpoint overrides."""
    server.add_json(f"/repos/{owner}/{name}", {"default_branch": default_branch})
    archive = make_targz(files, prefix=f"{name}-{default_branch}")
    server.add_bytes(f"/archive/{owner}/{name}/{default_branch}.tar.gz", archive)
    return {
        "github": {
            "metadata_url": server.url("/repos/{owner}/{name}"),
            "archive_url": server.url("/archive/{owner}/{name}/{ref}.tar.gz"),
        }
    }
