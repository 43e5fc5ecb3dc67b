"""Pipeline configuration: strict YAML loading with exhaustive validation.

Unknown keys are rejected, every violation is reported (not just the
first), and a loaded config round-trips losslessly through to_dict().
Provider endpoint templates and detector/kind tables are all overridable
so the whole pipeline can run against mirrors or local test stubs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

STAGES = (
    "ingest",
    "screen",
    "resolve",
    "fetch",
    "compile",
    "assess",
    "evaluate",
    "report",
)

DEFAULT_RATE_LIMITS = {
    "oa": 3.0,
    "doi": 2.0,
    "github": 1.0,
    "gitlab": 1.0,
    "gitee": 1.0,
    "zenodo": 1.0,
    "figshare": 1.0,
    "osf": 1.0,
}


class ConfigError(ValueError):
    """Invalid configuration; errors lists every violated field."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class PipelineConfig:
    cache_dir: str = "cache"
    out_dir: str = "out"
    citation_lists: Optional[str] = None
    entry_groups: dict = field(default_factory=dict)
    oa_endpoint: str = (
        "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/efetch.fcgi"
        "?db=pmc&id={pmcid}&rettype=xml"
    )
    idconv_endpoint: Optional[str] = (
        "https://www.ncbi.nlm.nih.gov/pmc/utils/idconv/v1.0/?ids={pmid}&format=json"
    )
    doi_resolver: str = "https://doi.org"
    backend: str = "rule"
    backend_token_env: Optional[str] = None
    rate_limits: dict = field(default_factory=lambda: dict(DEFAULT_RATE_LIMITS))
    max_workers: int = 4
    retry_attempts: int = 3
    retry_backoff_base: float = 1.0
    min_group_n: int = 10
    min_journal_repos: int = 5
    min_language_repos: int = 5
    min_year_repos: int = 5
    providers: dict = field(default_factory=dict)
    extra_hosts: dict = field(default_factory=dict)
    file_kinds: Optional[str] = None
    detector_patterns: Optional[str] = None
    enabled_stages: list = field(default_factory=lambda: list(STAGES))
    annotations: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dc_fields(self)}

    @property
    def cache_path(self) -> Path:
        return Path(self.cache_dir)

    @property
    def out_path(self) -> Path:
        return Path(self.out_dir)


_KNOWN_KEYS = {f.name for f in dc_fields(PipelineConfig)}

# Fields where an explicit null is a meaningful value (feature disabled).
_NULLABLE_KEYS = {
    "citation_lists",
    "idconv_endpoint",
    "backend_token_env",
    "file_kinds",
    "detector_patterns",
}


def validate_config(raw: Mapping[str, Any]) -> PipelineConfig:
    """Typed config or an exhaustive error list (strict: unknown keys rejected)."""
    errors: list[str] = []
    for key in raw:
        if key not in _KNOWN_KEYS:
            errors.append(f"unknown_key:{key}")
    merged = {k: v for k, v in raw.items() if k in _KNOWN_KEYS}

    def expect(key: str, types: tuple, predicate=None, message: str = "") -> None:
        if key not in merged:
            return
        value = merged[key]
        if value is None:
            if key not in _NULLABLE_KEYS:
                errors.append(f"wrong_type:{key}")
            return
        if not isinstance(value, types) or isinstance(value, bool):
            errors.append(f"wrong_type:{key}")
            return
        if predicate is not None and not predicate(value):
            errors.append(message or f"invalid_value:{key}")

    expect("cache_dir", (str,))
    expect("out_dir", (str,))
    expect("citation_lists", (str,))
    expect("entry_groups", (dict,))
    expect("oa_endpoint", (str,), lambda v: "{pmid}" in v or "{pmcid}" in v,
           "oa_endpoint_missing_placeholder")
    expect("idconv_endpoint", (str,))
    expect("doi_resolver", (str,))
    expect("backend", (str,), lambda v: v in ("rule", "none"), "unknown_backend")
    expect("backend_token_env", (str,))
    expect("max_workers", (int,), lambda v: v >= 1, "max_workers_not_positive")
    expect("retry_attempts", (int,), lambda v: v >= 1, "retry_attempts_not_positive")
    expect("retry_backoff_base", (int, float), lambda v: v >= 0,
           "retry_backoff_negative")
    for key in ("min_group_n", "min_journal_repos", "min_language_repos",
                "min_year_repos"):
        expect(key, (int,), lambda v: v >= 0, f"negative_threshold:{key}")
    expect("providers", (dict,))
    expect("extra_hosts", (dict,))
    expect("file_kinds", (str,))
    expect("detector_patterns", (str,))
    expect("annotations", (dict,))

    limits = merged.get("rate_limits")
    if limits is not None:
        if not isinstance(limits, dict):
            errors.append("wrong_type:rate_limits")
        else:
            for name, value in limits.items():
                if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
                    errors.append(f"rate_limit_not_positive:{name}")

    stages = merged.get("enabled_stages")
    if stages is not None:
        if not isinstance(stages, list):
            errors.append("wrong_type:enabled_stages")
        else:
            for stage in stages:
                if stage not in STAGES:
                    errors.append(f"unknown_stage:{stage}")

    if errors:
        raise ConfigError(sorted(errors))

    config = PipelineConfig(**merged)
    # Fill partial rate-limit tables with defaults.
    config.rate_limits = {**DEFAULT_RATE_LIMITS, **config.rate_limits}
    return config


def load_config(path: Path | str) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, Mapping):
        raise ConfigError(["config_root_not_mapping"])
    return validate_config(raw)


def dump_config(config: PipelineConfig, path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True)
