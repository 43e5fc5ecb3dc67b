"""Line-delimited record storage and atomic file writes.

Stage outputs are append-only JSONL files; each line is one unit. Resume
logic loads the set of already-processed unit ids and skips them, so a
killed run can be restarted without reprocessing or duplicating units.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterator


def read_jsonl(path: Path | str) -> Iterator[dict]:
    """Yield one decoded record per non-blank line."""
    path = Path(path)
    if not path.exists():
        return
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def append_jsonl(path: Path | str, record: dict) -> None:
    """Append a single record and flush it to disk."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def write_jsonl(path: Path | str, records: list[dict]) -> None:
    """Replace the file with the given records (atomic)."""
    body = "".join(
        json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records
    )
    atomic_write_text(path, body)


def jsonl_index(path: Path | str, key: str) -> dict[str, dict]:
    """Map key field value -> record; later lines win on duplicates."""
    out: dict[str, dict] = {}
    for rec in read_jsonl(path):
        out[str(rec[key])] = rec
    return out


def processed_ids(path: Path | str, key: str) -> set[str]:
    return {str(rec[key]) for rec in read_jsonl(path)}


def atomic_write_bytes(path: Path | str, data: bytes) -> None:
    """Write via a temp file + rename so readers never see partial content."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path | str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: Path | str, payload: Any) -> None:
    atomic_write_text(
        path, json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n"
    )


def read_json(path: Path | str) -> Any:
    with Path(path).open("r", encoding="utf-8") as fh:
        return json.load(fh)
