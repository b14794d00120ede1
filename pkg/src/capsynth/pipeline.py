"""Run orchestration: staged execution, append-only checkpoints, resume, stats.

Each stage owns one line-delimited checkpoint file under the run directory
and appends exactly one row per input item, in manifest order, as items
complete. A crash leaves a clean prefix; resume skips checkpointed ids, so
completed items never trigger repeat model calls. A `<stage>._done` marker
closes each stage.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .agents import AgentRegistry, load_registry
from .client import (
    AgentOutput,
    ChatClient,
    HttpBackend,
    MockBackend,
    fmt_cost,
)
from .config import ConfigError, RunConfig
from .domains import VisualDomain, WorkflowSpec, build_workflow_table, validate_workflows
from .engine import CaptionRecord, RecordStatus, run_workflow
from .gate import GateStats, JudgeError, QualityScore, filter_dataset, judge
from .media import MediaItem, filter_media, load_manifest
from .router import RoutingDecision, UnroutableError, route

logger = logging.getLogger(__name__)

STAGES: tuple[str, ...] = ("filter", "route", "caption", "judge", "gate")

CHECKPOINT_FILES = {
    "filtered": "filtered.jsonl",
    "rejects": "rejects.jsonl",
    "routing": "routing.jsonl",
    "captions": "captions.jsonl",
    "scores": "scores.jsonl",
    "quarantine": "quarantine.jsonl",
    "kept": "kept.jsonl",
    "dropped": "dropped.jsonl",
}

ProgressFn = Callable[[str, str], None]


def _dump(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def append_jsonl(path: Path, row: Mapping[str, Any]) -> None:
    """Append one row and push it to disk before returning."""
    with path.open("a", encoding="utf-8") as fh:
        fh.write(_dump(row) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        return []
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def write_json(path: Path, payload: Mapping[str, Any]) -> None:
    """Atomic whole-file write (tmp + rename)."""
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(_dump(payload) + "\n", encoding="utf-8")
    tmp.replace(path)


@dataclass
class RunLedger:
    """Summary of one run; the durable state lives in the checkpoint files."""

    run_dir: Path
    stage_counts: dict[str, int] = field(default_factory=dict)
    kept: int = 0
    dropped: int = 0
    quarantined: int = 0
    judged: int = 0
    yield_ratio: float | None = None
    total_cost: Decimal = Decimal("0")
    mean_cost_per_kept: Decimal | None = None
    item_errors: int = 0
    wall_clock: dict[str, float] = field(default_factory=dict)

    def summary_lines(self) -> list[str]:
        lines = [f"run dir: {self.run_dir}"]
        for stage in STAGES:
            if stage in self.stage_counts:
                lines.append(f"{stage:<8} {self.stage_counts[stage]:>6} items")
        lines.append(f"kept {self.kept} / dropped {self.dropped} / quarantined {self.quarantined}")
        shown_yield = "n/a" if self.yield_ratio is None else f"{self.yield_ratio:.3f}"
        lines.append(f"yield {shown_yield}")
        lines.append(f"total cost {format(self.total_cost, 'f')}")
        if self.mean_cost_per_kept is not None:
            lines.append(f"mean cost per kept caption {format(self.mean_cost_per_kept, 'f')}")
        if self.item_errors:
            lines.append(f"item-level errors: {self.item_errors}")
        return lines


class _RunContext:
    """Shared state for one invocation of run()."""

    def __init__(self, config: RunConfig, backend: Any | None = None):
        self.config = config
        self.run_dir = config.run_dir
        self.registry: AgentRegistry = load_registry(config.agent_overrides)
        self.workflows: dict[VisualDomain, WorkflowSpec] = build_workflow_table(
            config.workflow_overrides
        )
        validate_workflows(self.workflows, self.registry)
        if backend is not None:
            self.backend = backend
            sleep = None if isinstance(backend, MockBackend) else time.sleep
        elif config.mock_fixture is not None:
            self.backend = MockBackend.from_fixture(config.mock_fixture)
            sleep = None
        else:
            self.backend = HttpBackend()
            sleep = time.sleep
        self.client = ChatClient(self.backend, config.profiles, sleep=sleep)

    def path(self, key: str) -> Path:
        return self.run_dir / CHECKPOINT_FILES[key]

    def marker(self, stage: str) -> Path:
        return self.run_dir / f"{stage}._done"

    def stage_done(self, stage: str) -> bool:
        return self.marker(stage).exists()

    def mark_done(self, stage: str) -> None:
        self.marker(stage).touch()


def _checkpointed_ids(ctx: _RunContext, key: str) -> set[str]:
    return {row["item_id"] for row in read_jsonl(ctx.path(key)) if "item_id" in row}


def _reject_ids(ctx: _RunContext, stage: str) -> set[str]:
    return {
        row["item_id"]
        for row in read_jsonl(ctx.path("rejects"))
        if row.get("stage") == stage
    }


def _ordered_map(
    workers: int,
    tasks: Sequence[tuple[MediaItem, Callable[[], Any]]],
    write: Callable[[MediaItem, Any], None],
    progress: ProgressFn | None,
    stage: str,
) -> None:
    """Run tasks concurrently but checkpoint strictly in input order."""
    if not tasks:
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures: list[tuple[MediaItem, Future]] = [
            (item, pool.submit(fn)) for item, fn in tasks
        ]
        try:
            for item, future in futures:
                write(item, future.result())
                if progress is not None:
                    progress(stage, item.id)
        except BaseException:
            pool.shutdown(wait=False, cancel_futures=True)
            raise


def _load_filtered_items(ctx: _RunContext) -> list[MediaItem]:
    return [MediaItem.from_dict(row) for row in read_jsonl(ctx.path("filtered"))]


def _stage_filter(ctx: _RunContext, progress: ProgressFn | None) -> int:
    if ctx.stage_done("filter"):
        return len(read_jsonl(ctx.path("filtered")))
    items = load_manifest(ctx.config.manifest)
    done = {i.id for i in _load_filtered_items(ctx)} | _reject_ids(ctx, "filter")
    for item in items:
        if item.id in done:
            continue
        verdict = filter_media(item, ctx.config.filter_policy)
        if verdict.accepted:
            append_jsonl(ctx.path("filtered"), item.to_dict())
        else:
            append_jsonl(
                ctx.path("rejects"),
                {"item_id": item.id, "stage": "filter", "reason": verdict.reason.value},
            )
        if progress is not None:
            progress("filter", item.id)
    ctx.mark_done("filter")
    return len(read_jsonl(ctx.path("filtered")))


def _stage_route(ctx: _RunContext, progress: ProgressFn | None) -> int:
    if ctx.stage_done("route"):
        return len(read_jsonl(ctx.path("routing")))
    items = _load_filtered_items(ctx)
    done = _checkpointed_ids(ctx, "routing") | _reject_ids(ctx, "route")
    pending = [item for item in items if item.id not in done]

    def route_one(item: MediaItem):
        calls: list[AgentOutput] = []
        try:
            decision = route(item, ctx.registry, ctx.client, call_log=calls)
            return decision, calls, None
        except UnroutableError as exc:
            return None, calls, exc

    def write(item: MediaItem, result) -> None:
        decision, calls, error = result
        if decision is not None:
            row = decision.to_dict()
            row["outputs"] = [o.to_dict() for o in calls]
            append_jsonl(ctx.path("routing"), row)
        else:
            append_jsonl(
                ctx.path("rejects"),
                {
                    "item_id": item.id,
                    "stage": "route",
                    "reason": "unroutable",
                    "attempts": error.attempts,
                    "last_response": error.last_response,
                    "outputs": [o.to_dict() for o in calls],
                },
            )

    _ordered_map(
        ctx.config.workers,
        [(item, (lambda it=item: route_one(it))) for item in pending],
        write,
        progress,
        "route",
    )
    ctx.mark_done("route")
    return len(read_jsonl(ctx.path("routing")))


def _stage_caption(ctx: _RunContext, progress: ProgressFn | None) -> int:
    if ctx.stage_done("caption"):
        return len(read_jsonl(ctx.path("captions")))
    items = {item.id: item for item in _load_filtered_items(ctx)}
    decisions = [RoutingDecision.from_dict(row) for row in read_jsonl(ctx.path("routing"))]
    done = _checkpointed_ids(ctx, "captions")
    pending = [d for d in decisions if d.item_id not in done]

    def caption_one(decision: RoutingDecision) -> CaptionRecord:
        return run_workflow(
            items[decision.item_id],
            decision,
            ctx.registry,
            ctx.client,
            policy=ctx.config.policy,
            workflows=ctx.workflows,
            video_frames=ctx.config.video_frames,
        )

    def write(item: MediaItem, record: CaptionRecord) -> None:
        append_jsonl(ctx.path("captions"), record.to_dict())

    _ordered_map(
        ctx.config.workers,
        [(items[d.item_id], (lambda dd=d: caption_one(dd))) for d in pending],
        write,
        progress,
        "caption",
    )
    ctx.mark_done("caption")
    return len(read_jsonl(ctx.path("captions")))


def _stage_judge(ctx: _RunContext, progress: ProgressFn | None) -> int:
    if ctx.stage_done("judge"):
        return len(read_jsonl(ctx.path("scores")))
    items = {item.id: item for item in _load_filtered_items(ctx)}
    records = [CaptionRecord.from_dict(row) for row in read_jsonl(ctx.path("captions"))]
    complete = [r for r in records if r.status is RecordStatus.COMPLETE]
    done = _checkpointed_ids(ctx, "scores") | _checkpointed_ids(ctx, "quarantine")
    pending = [r for r in complete if r.item_id not in done]

    def judge_one(record: CaptionRecord):
        calls: list[AgentOutput] = []
        try:
            score = judge(
                record,
                items[record.item_id],
                ctx.registry,
                ctx.client,
                call_log=calls,
                video_frames=ctx.config.video_frames,
            )
            return score, calls, None
        except JudgeError as exc:
            return None, calls, exc

    def write(item: MediaItem, result) -> None:
        score, calls, error = result
        if score is not None:
            row = score.to_dict()
            row["judge_outputs"] = [o.to_dict() for o in calls]
            append_jsonl(ctx.path("scores"), row)
        else:
            append_jsonl(
                ctx.path("quarantine"),
                {
                    "item_id": item.id,
                    "error": str(error),
                    "judge_outputs": [o.to_dict() for o in calls],
                },
            )

    _ordered_map(
        ctx.config.workers,
        [(items[r.item_id], (lambda rr=r: judge_one(rr))) for r in pending],
        write,
        progress,
        "judge",
    )
    ctx.mark_done("judge")
    return len(read_jsonl(ctx.path("scores")))


def _stage_gate(ctx: _RunContext, progress: ProgressFn | None) -> GateStats:
    items = {row["id"]: row for row in read_jsonl(ctx.path("filtered"))}
    records = [CaptionRecord.from_dict(row) for row in read_jsonl(ctx.path("captions"))]
    complete = [r for r in records if r.status is RecordStatus.COMPLETE]
    scores = {
        row["item_id"]: QualityScore.from_dict(row) for row in read_jsonl(ctx.path("scores"))
    }
    quarantined = _checkpointed_ids(ctx, "quarantine")
    result = filter_dataset(complete, scores, quarantined)

    if not ctx.stage_done("gate"):
        done = _checkpointed_ids(ctx, "kept") | _checkpointed_ids(ctx, "dropped")
        verdict_of = {r.item_id: "kept" for r in result.kept}
        verdict_of.update({r.item_id: "dropped" for r in result.dropped})
        for record in complete:
            key = verdict_of.get(record.item_id)
            if key is None or record.item_id in done:
                continue
            append_jsonl(
                ctx.path(key),
                {
                    "item_id": record.item_id,
                    "item": items[record.item_id],
                    "domain": record.domain.value,
                    "caption": record.caption,
                    "score": scores[record.item_id].to_dict(),
                    "total_cost": fmt_cost(record.total_cost),
                },
            )
            if progress is not None:
                progress("gate", record.item_id)
        write_json(ctx.run_dir / "gate_stats.json", result.stats.to_dict())
        ctx.mark_done("gate")
    return result.stats


def total_run_cost(run_dir: Path) -> Decimal:
    """Exact sum of every model call's cost recorded in the checkpoints."""
    report = report_cost(run_dir)
    return Decimal(report["total"])


def _iter_cost_rows(run_dir: Path) -> Iterable[tuple[str, str, AgentOutput]]:
    """Yield (stage, item_id, output) for every model call in the run."""
    for row in read_jsonl(run_dir / CHECKPOINT_FILES["routing"]):
        for out in row.get("outputs", ()):
            yield "route", row["item_id"], AgentOutput.from_dict(out)
    for row in read_jsonl(run_dir / CHECKPOINT_FILES["rejects"]):
        for out in row.get("outputs", ()):
            yield row.get("stage", "route"), row["item_id"], AgentOutput.from_dict(out)
    for row in read_jsonl(run_dir / CHECKPOINT_FILES["captions"]):
        record = CaptionRecord.from_dict(row)
        for out in record.agent_outputs:
            yield "caption", record.item_id, out
        if record.summary_output is not None:
            yield "caption", record.item_id, record.summary_output
    for row in read_jsonl(run_dir / CHECKPOINT_FILES["scores"]):
        for out in row.get("judge_outputs", ()):
            yield "judge", row["item_id"], AgentOutput.from_dict(out)
    for row in read_jsonl(run_dir / CHECKPOINT_FILES["quarantine"]):
        for out in row.get("judge_outputs", ()):
            yield "judge", row["item_id"], AgentOutput.from_dict(out)


def report_cost(run_dir: str | Path) -> dict[str, Any]:
    """Exact-decimal cost breakdown: total, per stage, per agent, per-item mean.

    The per-item mean averages over items that incurred any cost and is
    rounded to 7 fractional digits for presentation; everything else is an
    exact sum.
    """
    run_dir = Path(run_dir)
    total = Decimal("0")
    per_stage: dict[str, Decimal] = {}
    per_agent: dict[str, Decimal] = {}
    per_item: dict[str, Decimal] = {}
    for stage, item_id, output in _iter_cost_rows(run_dir):
        total += output.cost
        per_stage[stage] = per_stage.get(stage, Decimal("0")) + output.cost
        per_agent[output.agent] = per_agent.get(output.agent, Decimal("0")) + output.cost
        per_item[item_id] = per_item.get(item_id, Decimal("0")) + output.cost
    items_with_cost = sum(1 for cost in per_item.values() if cost > 0)
    mean = (
        fmt_cost((total / items_with_cost).quantize(Decimal("1e-7")))
        if items_with_cost
        else None
    )
    return {
        "total": fmt_cost(total),
        "per_stage": {k: fmt_cost(v) for k, v in sorted(per_stage.items())},
        "per_agent": {k: fmt_cost(v) for k, v in sorted(per_agent.items())},
        "items_with_cost": items_with_cost,
        "per_item_mean": mean,
    }


def _percentile(sorted_values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile over a non-empty pre-sorted sequence."""
    rank = max(1, math.ceil(q / 100.0 * len(sorted_values)))
    return float(sorted_values[rank - 1])


def _length_stats(captions: Sequence[str]) -> dict[str, Any]:
    measures = {
        "words": [len(c.split()) for c in captions],
        "characters": [len(c) for c in captions],
        "est_tokens": [math.ceil(len(c) / 4) for c in captions],
    }
    out: dict[str, Any] = {}
    for unit, values in measures.items():
        ordered = sorted(values)
        out[unit] = {
            "mean": sum(values) / len(values),
            "p50": _percentile(ordered, 50),
            "p90": _percentile(ordered, 90),
        }
    return out


def stats(kept: str | Path | Sequence[Mapping[str, Any]]) -> dict[str, Any]:
    """Per-domain dataset statistics over the kept captions.

    Caption length is reported in words, characters, and estimated tokens
    (ceil(characters/4)) because the natural unit is ambiguous; each block is
    labeled with its unit. Shares sum to 1 within rounding.
    """
    rows = read_jsonl(Path(kept)) if isinstance(kept, (str, Path)) else list(kept)
    if not rows:
        return {"empty": True, "n": 0, "domains": {}}
    by_domain: dict[str, list[str]] = {}
    for row in rows:
        by_domain.setdefault(row["domain"], []).append(row["caption"])
    total = len(rows)
    domains = {
        domain: {
            "count": len(captions),
            "share": len(captions) / total,
            "caption_length": _length_stats(captions),
        }
        for domain, captions in sorted(by_domain.items())
    }
    return {
        "empty": False,
        "n": total,
        "domains": domains,
        "overall": {"caption_length": _length_stats([row["caption"] for row in rows])},
    }


def _stage_prerequisite(stage: str) -> str | None:
    index = STAGES.index(stage)
    return STAGES[index - 1] if index else None


def run(
    config: RunConfig,
    stages: Sequence[str] | None = None,
    progress: ProgressFn | None = None,
    backend: Any | None = None,
) -> RunLedger:
    """Execute the selected stages (default: all) against the run directory.

    Completed stages (per their `_done` markers) are skipped wholesale;
    partially completed stages resume after their last checkpointed item.
    progress(stage, item_id) fires after each item's checkpoint append.
    backend, when given, replaces the fixture/HTTP backend (test seam).
    """
    selected = tuple(stages) if stages is not None else STAGES
    for stage in selected:
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}")

    run_dir = config.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    has_state = any((run_dir / name).exists() for name in CHECKPOINT_FILES.values())
    if stages is None and has_state and not config.resume:
        raise ConfigError(
            f"run directory {run_dir} already holds checkpoints; pass resume to continue"
        )

    ctx = _RunContext(config, backend=backend)
    ledger = RunLedger(run_dir=run_dir)

    for stage in selected:
        prerequisite = _stage_prerequisite(stage)
        if prerequisite is not None and prerequisite not in selected and not ctx.stage_done(prerequisite):
            raise ConfigError(f"stage {stage!r} requires completed stage {prerequisite!r}")
        started = time.monotonic()
        if stage == "filter":
            ledger.stage_counts["filter"] = _stage_filter(ctx, progress)
        elif stage == "route":
            ledger.stage_counts["route"] = _stage_route(ctx, progress)
        elif stage == "caption":
            ledger.stage_counts["caption"] = _stage_caption(ctx, progress)
        elif stage == "judge":
            ledger.stage_counts["judge"] = _stage_judge(ctx, progress)
        elif stage == "gate":
            gate_stats = _stage_gate(ctx, progress)
            ledger.kept = gate_stats.kept
            ledger.dropped = gate_stats.dropped
            ledger.quarantined = gate_stats.quarantined
            ledger.judged = gate_stats.judged
            ledger.yield_ratio = gate_stats.yield_ratio
            ledger.stage_counts["gate"] = gate_stats.kept + gate_stats.dropped
        ledger.wall_clock[stage] = time.monotonic() - started
        logger.info("stage %s finished in %.3fs", stage, ledger.wall_clock[stage])

    # Backfill counts for stages completed in earlier invocations so the
    # summary always reflects the durable run state, not just this call.
    durable_counts = {
        "filter": lambda: len(read_jsonl(ctx.path("filtered"))),
        "route": lambda: len(read_jsonl(ctx.path("routing"))),
        "caption": lambda: len(read_jsonl(ctx.path("captions"))),
        "judge": lambda: len(read_jsonl(ctx.path("scores"))),
        "gate": lambda: len(read_jsonl(ctx.path("kept"))) + len(read_jsonl(ctx.path("dropped"))),
    }
    for stage in STAGES:
        if stage not in ledger.stage_counts and ctx.stage_done(stage):
            ledger.stage_counts[stage] = durable_counts[stage]()

    cost = report_cost(run_dir)
    ledger.total_cost = Decimal(cost["total"])
    if ledger.kept:
        ledger.mean_cost_per_kept = (ledger.total_cost / ledger.kept).quantize(Decimal("1e-7"))
    ledger.item_errors = (
        len(_reject_ids(ctx, "route"))
        + sum(
            1
            for row in read_jsonl(ctx.path("captions"))
            if row.get("status") != RecordStatus.COMPLETE.value
        )
        + len(_checkpointed_ids(ctx, "quarantine"))
    )

    if "gate" in selected:
        write_json(
            run_dir / "run_summary.json",
            {
                "stage_counts": ledger.stage_counts,
                "kept": ledger.kept,
                "dropped": ledger.dropped,
                "quarantined": ledger.quarantined,
                "judged": ledger.judged,
                "yield_ratio": ledger.yield_ratio,
                "total_cost": fmt_cost(ledger.total_cost),
                "mean_cost_per_kept": (
                    fmt_cost(ledger.mean_cost_per_kept)
                    if ledger.mean_cost_per_kept is not None
                    else None
                ),
                "item_errors": ledger.item_errors,
            },
        )
    return ledger
