"""Command-line entry point.

Subcommands: run (all stages), filter, route, caption, judge, gate (single
stages), stats, cost, eval-quality, eval-reasoning. Exit codes: 0 success,
1 fatal config/IO error, 2 completed with item-level errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Sequence

from .agents import load_registry
from .client import ChatClient, HttpBackend, MockBackend
from .config import ConfigError, build_profiles, build_run_config, load_config_file
from .evalharness import load_qa_instances, quality_eval, reasoning_eval
from .media import ManifestError, MediaItem
from .pipeline import read_jsonl, report_cost, run, stats

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_ITEM_ERRORS = 2

STAGE_COMMANDS = ("filter", "route", "caption", "judge", "gate")


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="TOML config file")
    parser.add_argument("--manifest", type=Path, help="manifest JSONL (overrides config)")
    parser.add_argument("--run-dir", type=Path, help="run directory (overrides config)")
    parser.add_argument("--workers", type=int, help="global worker bound")
    parser.add_argument("--mock", type=Path, metavar="FIXTURE", help="mock backend fixture file")
    parser.add_argument(
        "--policy",
        choices=["strict", "best-effort"],
        help="agent-failure policy for captioning",
    )
    parser.add_argument("--resume", action="store_true", help="continue an existing run dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capsynth",
        description="Domain-routed multi-agent captioning with a judge-gated output set.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("run", "run all stages: filter, route, caption, judge, gate"),
        ("filter", "apply the resolution/aspect filter to the manifest"),
        ("route", "assign a visual domain to each filtered item"),
        ("caption", "run the per-domain agent workflows"),
        ("judge", "score captions with the quality rubric"),
        ("gate", "partition judged captions into kept/dropped"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_run_flags(p)

    p = sub.add_parser("stats", help="per-domain statistics over the kept captions")
    p.add_argument("--run-dir", type=Path, help="run directory holding kept.jsonl")
    p.add_argument("--kept", type=Path, help="explicit kept.jsonl path")

    p = sub.add_parser("cost", help="exact cost report for a run")
    p.add_argument("--run-dir", type=Path, required=True)

    p = sub.add_parser("eval-quality", help="rubric-score a caption file")
    p.add_argument("--captions", type=Path, required=True, help="JSONL rows with item + caption")
    p.add_argument("--config", type=Path)
    p.add_argument("--mock", type=Path, metavar="FIXTURE")
    p.add_argument("--json", action="store_true", help="emit the report as JSON")

    p = sub.add_parser("eval-reasoning", help="answer visual questions from captions alone")
    p.add_argument("--qa", type=Path, required=True, help="QA instance JSONL")
    p.add_argument("--captions", type=Path, required=True, help="JSONL rows with item + caption")
    p.add_argument("--reasoner", default="text", help="profile name for the reasoning model")
    p.add_argument("--config", type=Path)
    p.add_argument("--mock", type=Path, metavar="FIXTURE")
    p.add_argument("--json", action="store_true", help="emit the report as JSON")

    return parser


def _load_caption_rows(path: Path) -> list[tuple[MediaItem, str]]:
    pairs = []
    for row in read_jsonl(path):
        item = MediaItem.from_dict(row["item"] if "item" in row else row)
        pairs.append((item, row["caption"]))
    return pairs


def _eval_client(args: argparse.Namespace) -> ChatClient:
    config = load_config_file(args.config) if args.config else {}
    profiles = build_profiles(config.get("profiles"))
    if args.mock:
        return ChatClient(MockBackend.from_fixture(args.mock), profiles, sleep=None)
    return ChatClient(HttpBackend(), profiles, sleep=time.sleep)


def _cmd_pipeline(args: argparse.Namespace, stages: Sequence[str] | None) -> int:
    config_doc = load_config_file(args.config) if args.config else {}
    config = build_run_config(
        config_doc,
        manifest=args.manifest,
        run_dir=args.run_dir,
        workers=args.workers,
        policy=args.policy,
        mock=args.mock,
        resume=args.resume or None,
    )
    ledger = run(config, stages=stages)
    for line in ledger.summary_lines():
        print(line)
    return EXIT_ITEM_ERRORS if ledger.item_errors else EXIT_OK


def _cmd_stats(args: argparse.Namespace) -> int:
    if args.kept is None and args.run_dir is None:
        raise ConfigError("stats needs --kept or --run-dir")
    kept = args.kept if args.kept is not None else args.run_dir / "kept.jsonl"
    report = stats(kept)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_cost(args: argparse.Namespace) -> int:
    print(json.dumps(report_cost(args.run_dir), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_eval_quality(args: argparse.Namespace) -> int:
    samples = _load_caption_rows(args.captions)
    report = quality_eval(samples, load_registry(), _eval_client(args))
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    else:
        print(report.as_table())
    return EXIT_ITEM_ERRORS if report.failed else EXIT_OK


def _cmd_eval_reasoning(args: argparse.Namespace) -> int:
    instances = load_qa_instances(args.qa)
    captions = {item.id: caption for item, caption in _load_caption_rows(args.captions)}
    client = _eval_client(args)
    report = reasoning_eval(instances, captions, client, client.profile_for(args.reasoner))
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    else:
        print(report.as_table())
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_pipeline(args, stages=None)
        if args.command in STAGE_COMMANDS:
            return _cmd_pipeline(args, stages=(args.command,))
        if args.command == "stats":
            return _cmd_stats(args)
        if args.command == "cost":
            return _cmd_cost(args)
        if args.command == "eval-quality":
            return _cmd_eval_quality(args)
        if args.command == "eval-reasoning":
            return _cmd_eval_reasoning(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ManifestError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
