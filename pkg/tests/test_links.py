"""Link classification, canonicalization, and DOI resolution."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from codeaudit.httpio import HttpClient
from codeaudit.links import (
    DoiResolver,
    MalformedUrlError,
    ProfileOnlyError,
    Provider,
    Resolution,
    classify_provider,
    extract_doi,
    normalize_to_root,
    resolve_link,
)

GOLDEN = Path(__file__).parent / "data" / "golden_urls.tsv"


def golden_rows():
    rows = []
    for line in GOLDEN.read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        url, provider, expected, via_doi = line.split("\t")
        rows.append((url, provider, expected, bool(int(via_doi))))
    return rows


def test_golden_table_has_40_entries():
    assert len(golden_rows()) == 40


@pytest.mark.parametrize("url,provider,expected,via_doi", golden_rows())
def test_golden_canonicalization(url, provider, expected, via_doi, fake_resolver):
    link = resolve_link(url, doi_resolver=fake_resolver)
    got_provider = link.provider.value if link.provider else "-"
    assert got_provider == provider
    assert link.via_doi == via_doi
    if expected.startswith("!"):
        assert link.resolution.value == expected[1:]
        assert link.canonical_root is None
    else:
        assert link.resolution == Resolution.OK
        assert link.canonical_root == expected


def test_classify_direct_hosts():
    assert classify_provider("https://github.com/user/proj") == Provider.GITHUB
    assert classify_provider("https://bitbucket.org/x/y") == Provider.UNSUPPORTED
    assert classify_provider("https://plos.figshare.com/articles/x/1") == Provider.FIGSHARE


def test_classify_doi_routes_through_resolver(fake_resolver):
    provider = classify_provider(
        "https://doi.org/10.5281/zenodo.4077342", doi_resolver=fake_resolver
    )
    assert provider == Provider.ZENODO
    assert fake_resolver.calls == ["10.5281/zenodo.4077342"]


def test_classify_doi_without_resolver_raises():
    with pytest.raises(ValueError):
        classify_provider("https://doi.org/10.5281/zenodo.4077342")


def test_classify_non_url_is_malformed():
    with pytest.raises(MalformedUrlError):
        classify_provider("see the appendix")


def test_extract_doi_forms():
    assert extract_doi("10.5281/zenodo.1") == "10.5281/zenodo.1"
    assert extract_doi("doi:10.5281/zenodo.1") == "10.5281/zenodo.1"
    assert extract_doi("https://doi.org/10.1000/x") == "10.1000/x"
    assert extract_doi("https://dx.doi.org/10.1000/x") == "10.1000/x"
    assert extract_doi("https://github.com/u/r") is None
    assert extract_doi("10.x/y") is None


def test_normalize_profile_only():
    with pytest.raises(ProfileOnlyError):
        normalize_to_root("https://github.com/solo-user", Provider.GITHUB)


def test_doi_landing_on_unsupported_host(fake_resolver):
    fake_resolver.table["10.1234/journal"] = "https://publisher.example.com/article/1"
    link = resolve_link("https://doi.org/10.1234/journal", doi_resolver=fake_resolver)
    assert link.resolution == Resolution.UNSUPPORTED_PROVIDER
    assert link.provider == Provider.UNSUPPORTED
    assert link.via_doi


def test_extra_hosts_alias_classifies_and_canonicalizes():
    link = resolve_link(
        "http://127.0.0.1:9999/fixture/demo/tree/main",
        extra_hosts={"127.0.0.1": "github"},
    )
    assert link.provider == Provider.GITHUB
    # canonical roots always live on the public provider host
    assert link.canonical_root == "https://github.com/fixture/demo"


# -- invariants ---------------------------------------------------------------


def _fuzz_urls(n: int, seed: int = 7) -> list[str]:
    rng = random.Random(seed)
    hosts = [
        "github.com", "www.github.com", "GitHub.com", "gitlab.com", "GITEE.com",
        "zenodo.org", "figshare.com", "plos.figshare.com", "osf.io",
        "bitbucket.org", "example.org", "doi.org",
    ]
    words = ["user", "proj", "My_Repo", "a-b", "x.y", "tree", "main", "blob",
             "releases", "record", "records", "articles", "dataset", "12345",
             "4077342", "ab12c", "-", "src", "v1.0", "code.git"]
    urls = []
    for _ in range(n):
        scheme = rng.choice(["https://", "http://", ""])
        host = rng.choice(hosts)
        depth = rng.randint(0, 5)
        path = "/".join(rng.choice(words) for _ in range(depth))
        query = rng.choice(["", "?tab=readme", "?a=1&b=2"])
        frag = rng.choice(["", "#install", "#.X2b"])
        urls.append(f"{scheme}{host}/{path}{query}{frag}")
    return urls


def test_normalize_idempotent_and_classify_consistent(fake_resolver):
    for url in _fuzz_urls(2000):
        link = resolve_link(url, doi_resolver=fake_resolver)
        assert (link.provider == Provider.UNSUPPORTED) == (
            link.resolution == Resolution.UNSUPPORTED_PROVIDER
        )
        assert (link.canonical_root is not None) == (link.resolution == Resolution.OK)
        if link.resolution == Resolution.OK:
            again = resolve_link(link.canonical_root, doi_resolver=fake_resolver)
            assert again.resolution == Resolution.OK
            assert again.canonical_root == link.canonical_root
            assert classify_provider(link.canonical_root) == link.provider
            assert normalize_to_root(link.canonical_root, link.provider) == link.canonical_root


# -- DOI resolver over HTTP ----------------------------------------------------


def _resolver(stub_server, max_hops: int = 10) -> DoiResolver:
    client = HttpClient(attempts=1, backoff_base=0.0)
    return DoiResolver(client, base_url=stub_server.url(), max_hops=max_hops, limiter=None)


def test_resolver_follows_redirect_chain(stub_server):
    stub_server.add_redirect("/10.5281/zenodo.1", "/hop1")
    stub_server.add_redirect("/hop1", "/hop2")
    stub_server.add_bytes("/hop2", b"landing", content_type="text/html")
    resolver = _resolver(stub_server)
    assert resolver.resolve("10.5281/zenodo.1") == stub_server.url("/hop2")


def test_resolver_caches(stub_server):
    stub_server.add_bytes("/10.5281/zenodo.2", b"landing")
    resolver = _resolver(stub_server)
    resolver.resolve("10.5281/zenodo.2")
    resolver.resolve("10.5281/zenodo.2")
    assert stub_server.request_log.count("/10.5281/zenodo.2") == 1


def test_resolver_loop_is_unresolvable(stub_server):
    stub_server.add_redirect("/10.5281/zenodo.3", "/loop")
    stub_server.add_redirect("/loop", "/10.5281/zenodo.3")
    assert _resolver(stub_server).resolve("10.5281/zenodo.3") is None


def test_resolver_depth_exceeded(stub_server):
    for i in range(12):
        stub_server.add_redirect(f"/10.5281/zenodo.4{'' if i == 0 else f'/h{i}'}"
                                 if i == 0 else f"/h{i}", f"/h{i + 1}")
    stub_server.add_redirect("/10.5281/zenodo.4", "/h1")
    stub_server.add_bytes("/h13", b"landing")
    assert _resolver(stub_server, max_hops=5).resolve("10.5281/zenodo.4") is None


def test_resolver_terminal_error_is_unresolvable(stub_server):
    stub_server.add_bytes("/10.5281/zenodo.5", b"gone", status=404)
    assert _resolver(stub_server).resolve("10.5281/zenodo.5") is None


def test_resolver_rejects_invalid_doi(stub_server):
    with pytest.raises(ValueError):
        _resolver(stub_server).resolve("abc")
