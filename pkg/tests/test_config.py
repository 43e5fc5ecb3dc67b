"""Strict config validation and round-tripping."""

from __future__ import annotations

import random

import pytest
import yaml

from codeaudit.config import (
    STAGES,
    ConfigError,
    PipelineConfig,
    dump_config,
    load_config,
    validate_config,
)


def test_minimal_config_gets_defaults(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("cache_dir: /tmp/c\n")
    cfg = load_config(path)
    assert cfg.cache_dir == "/tmp/c"
    assert cfg.out_dir == "out"
    assert cfg.rate_limits["github"] == 1.0
    assert list(cfg.enabled_stages) == list(STAGES)


def test_round_trip_stable(tmp_path):
    cfg = validate_config({"cache_dir": "c", "max_workers": 2,
                           "rate_limits": {"github": 0.5}})
    path = tmp_path / "c.yaml"
    dump_config(cfg, path)
    again = load_config(path)
    assert again.to_dict() == cfg.to_dict()


def test_negative_rate_limit_named():
    with pytest.raises(ConfigError) as err:
        validate_config({"rate_limits": {"github": -1}})
    assert "rate_limit_not_positive:github" in err.value.errors


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as err:
        validate_config({"cache_dirs": "typo"})
    assert "unknown_key:cache_dirs" in err.value.errors


def test_multiple_errors_enumerated():
    with pytest.raises(ConfigError) as err:
        validate_config(
            {"max_workers": 0, "backend": "gpt", "enabled_stages": ["screen", "nope"]}
        )
    errors = set(err.value.errors)
    assert {"max_workers_not_positive", "unknown_backend", "unknown_stage:nope"} <= errors


def test_oa_endpoint_requires_placeholder():
    with pytest.raises(ConfigError) as err:
        validate_config({"oa_endpoint": "https://example.org/static"})
    assert "oa_endpoint_missing_placeholder" in err.value.errors


def test_partial_rate_limits_merged_with_defaults():
    cfg = validate_config({"rate_limits": {"github": 9.0}})
    assert cfg.rate_limits["github"] == 9.0
    assert cfg.rate_limits["doi"] == 2.0


def _independent_check(raw: dict) -> bool:
    """Rule-by-rule reimplementation of the accept/reject decision."""
    known = set(PipelineConfig().to_dict())
    if any(k not in known for k in raw):
        return False
    if "max_workers" in raw and (
        not isinstance(raw["max_workers"], int) or raw["max_workers"] < 1
    ):
        return False
    if "backend" in raw and raw["backend"] not in ("rule", "none"):
        return False
    if "rate_limits" in raw:
        if not isinstance(raw["rate_limits"], dict):
            return False
        for v in raw["rate_limits"].values():
            if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
                return False
    if "enabled_stages" in raw:
        if not isinstance(raw["enabled_stages"], list):
            return False
        if any(s not in STAGES for s in raw["enabled_stages"]):
            return False
    if "oa_endpoint" in raw and not (
        isinstance(raw["oa_endpoint"], str)
        and ("{pmid}" in raw["oa_endpoint"] or "{pmcid}" in raw["oa_endpoint"])
    ):
        return False
    for key in ("min_group_n", "min_journal_repos"):
        if key in raw and (not isinstance(raw[key], int) or raw[key] < 0):
            return False
    return True


def test_fuzzed_configs_match_independent_checker():
    rng = random.Random(71)
    fragments = [
        {}, {"cache_dir": "c"}, {"bogus_key": 1}, {"max_workers": 0},
        {"max_workers": 3}, {"backend": "rule"}, {"backend": "gpt"},
        {"rate_limits": {"github": 2.0}}, {"rate_limits": {"github": 0}},
        {"rate_limits": {"oa": -3}}, {"enabled_stages": ["screen"]},
        {"enabled_stages": ["warp"]}, {"min_group_n": -1}, {"min_group_n": 5},
        {"oa_endpoint": "https://x/{pmid}"}, {"oa_endpoint": "https://x/static"},
    ]
    for _ in range(300):
        raw: dict = {}
        for frag in rng.sample(fragments, rng.randint(1, 4)):
            raw.update(frag)
        expected = _independent_check(raw)
        try:
            validate_config(dict(raw))
            accepted = True
        except ConfigError:
            accepted = False
        assert accepted == expected, raw


def test_yaml_file_round_trip_lossless(tmp_path):
    raw = {
        "cache_dir": "cache",
        "entry_groups": {"tripod_1": "TRIPOD"},
        "providers": {"github": {"metadata_url": "http://localhost/r/{owner}/{name}"}},
    }
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(raw))
    cfg = load_config(path)
    dump_config(cfg, tmp_path / "again.yaml")
    assert load_config(tmp_path / "again.yaml").to_dict() == cfg.to_dict()
