"""Hierarchical workflow execution: fan out to functional agents, then summarize."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from typing import Any, Mapping

from .agents import AgentCategory, AgentRegistry, frame_refs, render
from .client import AgentOutput, CallStatus, ChatClient, fmt_cost
from .domains import VisualDomain, WorkflowSpec, workflow_for
from .media import MediaItem, MediaKind, sample_video_frames
from .router import RoutingDecision

DEFAULT_VIDEO_FRAMES = 8


class RunPolicy(str, Enum):
    STRICT = "strict"
    BEST_EFFORT = "best_effort"


class RecordStatus(str, Enum):
    COMPLETE = "complete"
    PARTIAL_FAILED = "partial_failed"
    FAILED = "failed"


@dataclass(frozen=True)
class CaptionRecord:
    """The aggregated caption for one item, with full per-agent provenance."""

    item_id: str
    domain: VisualDomain
    caption: str
    agent_outputs: tuple[AgentOutput, ...]
    summary_output: AgentOutput | None
    total_cost: Decimal
    total_latency: float
    status: RecordStatus
    failed_agents: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "item_id": self.item_id,
            "domain": self.domain.value,
            "caption": self.caption,
            "agent_outputs": [o.to_dict() for o in self.agent_outputs],
            "summary_output": self.summary_output.to_dict() if self.summary_output else None,
            "total_cost": fmt_cost(self.total_cost),
            "total_latency": self.total_latency,
            "status": self.status.value,
            "failed_agents": list(self.failed_agents),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CaptionRecord":
        summary = d.get("summary_output")
        return cls(
            item_id=d["item_id"],
            domain=VisualDomain(d["domain"]),
            caption=d["caption"],
            agent_outputs=tuple(AgentOutput.from_dict(o) for o in d["agent_outputs"]),
            summary_output=AgentOutput.from_dict(summary) if summary else None,
            total_cost=Decimal(d["total_cost"]),
            total_latency=float(d["total_latency"]),
            status=RecordStatus(d["status"]),
            failed_agents=tuple(d.get("failed_agents", ())),
        )


def format_agent_outputs(
    outputs: list[AgentOutput],
    registry: AgentRegistry,
) -> str:
    """Labeled blocks the summarizer consumes, in workflow order.

    Each successful output appears exactly once under its agent name.
    Reasoning-category outputs are tagged Part B (interpretative inference),
    everything else Part A (description).
    """
    blocks = []
    for output in outputs:
        category = registry.resolve(output.agent).category
        part = "B" if category is AgentCategory.REASONING else "A"
        blocks.append(f"### {output.agent} (Part {part})\n{output.text}")
    return "\n\n".join(blocks)


def _media_context(item: MediaItem, video_frames: int) -> dict[str, Any]:
    if item.kind is MediaKind.VIDEO and (item.duration or 0) > 0:
        timestamps = sample_video_frames(item, video_frames)
        return {"media": frame_refs(item.uri, timestamps)}
    return {}


def _is_descriptive(registry: AgentRegistry, agent: str) -> bool:
    category = registry.resolve(agent).category
    return category not in (AgentCategory.REASONING, AgentCategory.SUMMARY)


def run_workflow(
    item: MediaItem,
    decision: RoutingDecision,
    registry: AgentRegistry,
    client: ChatClient,
    policy: RunPolicy = RunPolicy.STRICT,
    workflows: Mapping[VisualDomain, WorkflowSpec] | None = None,
    video_frames: int = DEFAULT_VIDEO_FRAMES,
) -> CaptionRecord:
    """Execute one item's two-layer workflow and return its caption record.

    Functional agents run concurrently; the summary call strictly follows
    all functional completions. Under Strict any agent failure aborts before
    the summary (no summary tokens spent). Under BestEffort the summary runs
    over the successful outputs as long as at least one descriptive
    (non-reasoning) output survived, yielding PartialFailed.
    """
    if decision.item_id != item.id:
        raise ValueError(f"decision {decision.item_id!r} does not match item {item.id!r}")
    video_domain = decision.domain is VisualDomain.VIDEO_TEMPORAL
    if video_domain != (item.kind is MediaKind.VIDEO):
        raise ValueError(
            f"domain {decision.domain.value} is not legal for {item.kind.value} {item.id!r}"
        )
    workflow = workflow_for(decision.domain, workflows)
    media_ctx = _media_context(item, video_frames)

    with ThreadPoolExecutor(max_workers=len(workflow.functional_agents)) as pool:
        futures = [
            pool.submit(client.chat, render(registry.resolve(name), item, media_ctx))
            for name in workflow.functional_agents
        ]
        outputs = tuple(f.result() for f in futures)

    failed = tuple(o.agent for o in outputs if o.status is not CallStatus.OK)
    succeeded = [o for o in outputs if o.status is CallStatus.OK]
    total_cost = sum((o.cost for o in outputs), Decimal("0"))
    total_latency = sum(o.latency for o in outputs)

    def record(status: RecordStatus, caption: str = "", summary: AgentOutput | None = None):
        return CaptionRecord(
            item_id=item.id,
            domain=decision.domain,
            caption=caption,
            agent_outputs=outputs,
            summary_output=summary,
            total_cost=total_cost + (summary.cost if summary else Decimal("0")),
            total_latency=total_latency + (summary.latency if summary else 0.0),
            status=status,
            failed_agents=failed,
        )

    if failed and policy is RunPolicy.STRICT:
        return record(RecordStatus.FAILED)
    if not succeeded:
        return record(RecordStatus.FAILED)
    if failed and not any(_is_descriptive(registry, o.agent) for o in succeeded):
        return record(RecordStatus.FAILED)

    summary_spec = registry.resolve(workflow.summary_agent)
    summary_ctx = {"agent_outputs": format_agent_outputs(succeeded, registry)}
    summary = client.chat(render(summary_spec, item, summary_ctx))
    if summary.status is not CallStatus.OK:
        return record(RecordStatus.FAILED, summary=summary)
    status = RecordStatus.PARTIAL_FAILED if failed else RecordStatus.COMPLETE
    return record(status, caption=summary.text, summary=summary)
