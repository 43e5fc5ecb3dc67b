"""Command-line entry point: one subcommand per stage, plus `audit` and `run`.

Exit code 0 only when every processed unit succeeded; flags override the
config file. `--json` prints the machine-readable stage summary.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from .config import STAGES, ConfigError, PipelineConfig, load_config
from .pipeline import MissingInputError, run_audit, run_stage


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codeaudit",
        description=(
            "Audit code sharing in prediction-model articles: screen full "
            "texts, resolve and fetch cited repositories, assess them "
            "against a reproducibility rubric, and aggregate cohort stats."
        ),
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", "-c", default="codeaudit.yaml", help="config file")
        p.add_argument("--cache-dir", help="override cache directory")
        p.add_argument("--out-dir", help="override output directory")
        p.add_argument("--backend", help="override assessor backend (rule, none)")
        p.add_argument("--max-workers", type=int, help="override worker bound")
        p.add_argument(
            "--json", action="store_true", help="print machine-readable summary"
        )

    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        add_common(p)

    p = sub.add_parser("run", help="run every enabled stage in order")
    add_common(p)

    p = sub.add_parser("audit", help="resolve, fetch, compile and assess one URL")
    p.add_argument("url", help="repository URL or DOI")
    add_common(p)
    return parser


def _load(args: argparse.Namespace) -> PipelineConfig:
    from pathlib import Path

    if Path(args.config).exists():
        cfg = load_config(args.config)
    else:
        cfg = PipelineConfig()
    if args.cache_dir:
        cfg.cache_dir = args.cache_dir
    if args.out_dir:
        cfg.out_dir = args.out_dir
    if args.backend:
        cfg.backend = args.backend
    if args.max_workers:
        cfg.max_workers = args.max_workers
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "audit":
            result = run_audit(args.url, cfg)
            print(json.dumps(result, indent=2, sort_keys=True))
            return 0 if result.get("outcome") == "assessed" else 1
        if args.command == "run":
            summaries = []
            hard_failures = 0
            for stage in cfg.enabled_stages:
                if stage == "evaluate" and not cfg.annotations:
                    # evaluation needs external annotation files; nothing to do
                    continue
                summary = run_stage(stage, cfg)
                summaries.append(summary.to_dict())
                hard_failures += summary.failed
            if args.json:
                print(json.dumps(summaries, indent=2, sort_keys=True))
            else:
                for s in summaries:
                    print(
                        f"{s['stage']}: processed={s['processed']} "
                        f"skipped={s['skipped']} failed={s['failed']}"
                    )
            return 0 if hard_failures == 0 else 1
        summary = run_stage(args.command, cfg)
    except MissingInputError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2

    if args.json:
        print(json.dumps(summary.to_dict(), indent=2, sort_keys=True))
    else:
        print(
            f"{summary.stage}: processed={summary.processed} "
            f"skipped={summary.skipped} failed={summary.failed} "
            f"details={summary.details}"
        )
    return 0 if summary.failed == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
