"""Flatten a repository snapshot into one assessor-ready text document.

Inclusion rules: README and source files in full, binary files excluded,
everything else truncated to a 3,000-token budget. A token is a maximal
non-whitespace run, so counting is reproducible across languages and
toolchains. The rendered directory tree lists every file, including
excluded ones.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

from .repofetch import FileKind, RepoSnapshot

TRUNCATION_TOKEN_CAP = 3000
TRUNCATION_MARKER = "[truncated]"
_TOKEN_RE = re.compile(r"\S+")
# Scan budget for genuinely huge non-binary files: enough bytes to cover
# the token cap even for long tokens, without slurping multi-GB content.
_MAX_READ_BYTES = 8 * 1024 * 1024


class Inclusion(str, Enum):
    FULL = "full"
    TRUNCATED = "truncated"
    EXCLUDED = "excluded"


@dataclass
class Section:
    path: str
    inclusion: Inclusion
    token_count: int
    text: Optional[str] = None
    reason: Optional[str] = None


@dataclass
class CompiledRepo:
    canonical_root: str
    tree_text: str
    sections: list[Section] = field(default_factory=list)

    @property
    def total_tokens(self) -> int:
        return sum(s.token_count for s in self.sections)

    def document(self) -> str:
        """Assemble the full text sent to an assessor."""
        parts = [self.tree_text]
        for section in self.sections:
            parts.append(f"\n===== {section.path} =====\n")
            if section.inclusion == Inclusion.EXCLUDED:
                parts.append(f"[excluded: {section.reason or 'binary'}]\n")
                continue
            parts.append(section.text or "")
            if not (section.text or "").endswith("\n"):
                parts.append("\n")
            if section.inclusion == Inclusion.TRUNCATED:
                parts.append(TRUNCATION_MARKER + "\n")
        return "".join(parts)

    def sidecar(self) -> dict:
        return {
            "canonical_root": self.canonical_root,
            "total_tokens": self.total_tokens,
            "sections": [
                {
                    "path": s.path,
                    "inclusion": s.inclusion.value,
                    "token_count": s.token_count,
                    "reason": s.reason,
                }
                for s in self.sections
            ],
        }


def count_tokens(text: str) -> int:
    """Number of whitespace-delimited tokens."""
    return len(text.split())


def truncate_tokens(text: str, max_tokens: int) -> tuple[str, int]:
    """Cut at a token boundary; the result is a prefix of the input."""
    if max_tokens <= 0:
        return "", 0
    matches = list(itertools.islice(_TOKEN_RE.finditer(text), max_tokens))
    if len(matches) < max_tokens:
        return text, len(matches)
    return text[: matches[-1].end()], max_tokens


def render_tree(snapshot: RepoSnapshot) -> str:
    """Stable indentation-based tree covering every snapshot path.

    Line count is exactly: number of files + number of directories + 1
    (the root marker).
    """
    tree: dict = {}
    for entry in sorted(snapshot.files, key=lambda e: e.path):
        node = tree
        parts = entry.path.split("/")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = None

    lines = ["."]

    def walk(node: dict, depth: int) -> None:
        for name in sorted(node):
            lines.append("    " * depth + name)
            if node[name] is not None:
                walk(node[name], depth + 1)

    walk(tree, 1)
    return "\n".join(lines) + "\n"


def _read_text(root: Path, rel_path: str, max_bytes: Optional[int] = None) -> str:
    """Lossy UTF-8 decode; undecodable bytes become replacement markers.

    max_bytes bounds the read for sections that get truncated anyway;
    README/source files are read in full so their sections stay
    byte-faithful.
    """
    data = (root / rel_path).read_bytes()
    if max_bytes is not None:
        data = data[:max_bytes]
    return data.decode("utf-8", errors="replace")


def compile_repo(
    snapshot: RepoSnapshot,
    source_token_cap: Optional[int] = None,
    truncation_cap: int = TRUNCATION_TOKEN_CAP,
) -> CompiledRepo:
    """Apply the inclusion rules to an ok snapshot.

    Section order: README(s), then source files by path, then the
    remaining included files by path, then excluded files by path. Pass
    source_token_cap to engage the context-overflow fallback, which also
    truncates source files (flagged by callers in provenance).
    """
    if snapshot.root is None:
        raise ValueError("snapshot has no extracted file tree")
    compiled = CompiledRepo(
        canonical_root=snapshot.canonical_root, tree_text=render_tree(snapshot)
    )
    readmes, sources, others, excluded = [], [], [], []
    for entry in sorted(snapshot.files, key=lambda e: e.path):
        if entry.kind == FileKind.README:
            readmes.append(entry)
        elif entry.kind == FileKind.SOURCE:
            sources.append(entry)
        elif entry.kind == FileKind.BINARY:
            excluded.append(entry)
        else:
            others.append(entry)

    for entry in readmes + sources:
        cap = source_token_cap
        try:
            text = _read_text(snapshot.root, entry.path)
        except OSError as exc:
            compiled.sections.append(
                Section(entry.path, Inclusion.EXCLUDED, 0, reason=f"unreadable: {exc}")
            )
            continue
        if cap is not None and count_tokens(text) > cap:
            text, n = truncate_tokens(text, cap)
            compiled.sections.append(Section(entry.path, Inclusion.TRUNCATED, n, text))
        else:
            compiled.sections.append(
                Section(entry.path, Inclusion.FULL, count_tokens(text), text)
            )

    for entry in others:
        try:
            text = _read_text(snapshot.root, entry.path, max_bytes=_MAX_READ_BYTES)
        except OSError as exc:
            compiled.sections.append(
                Section(entry.path, Inclusion.EXCLUDED, 0, reason=f"unreadable: {exc}")
            )
            continue
        if count_tokens(text) > truncation_cap:
            text, n = truncate_tokens(text, truncation_cap)
            compiled.sections.append(Section(entry.path, Inclusion.TRUNCATED, n, text))
        else:
            compiled.sections.append(
                Section(entry.path, Inclusion.FULL, count_tokens(text), text)
            )

    for entry in excluded:
        compiled.sections.append(
            Section(entry.path, Inclusion.EXCLUDED, 0, reason="binary")
        )
    return compiled


def compiled_basename(canonical_root: str) -> str:
    """<owner>__<name> slug for the compiled-output filenames."""
    segs = [s for s in canonical_root.split("://", 1)[-1].split("/") if s][1:]
    slug = "__".join(segs[-2:]) if len(segs) >= 2 else (segs[0] if segs else "repo")
    return re.sub(r"[^A-Za-z0-9._-]", "_", slug)


def write_compiled(compiled: CompiledRepo, compiled_dir: Path) -> Path:
    """Persist the document plus a JSON sidecar with section metadata."""
    from .store import atomic_write_json, atomic_write_text

    compiled_dir.mkdir(parents=True, exist_ok=True)
    base = compiled_basename(compiled.canonical_root)
    doc_path = compiled_dir / f"{base}.txt"
    atomic_write_text(doc_path, compiled.document())
    atomic_write_json(compiled_dir / f"{base}.json", compiled.sidecar())
    return doc_path
