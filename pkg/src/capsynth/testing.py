"""Deterministic fixture builders for mock-backed runs, demos, and tests."""

from __future__ import annotations

import json
import zlib
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .domains import DEFAULT_WORKFLOWS, VisualDomain
from .gate import dimensions_for
from .media import MediaItem, MediaKind
from .router import ROUTER_AGENT

JUDGE_AGENT_BY_KIND = {MediaKind.IMAGE: "ImageQualityEval", MediaKind.VIDEO: "VideoQualityEval"}


def _stable_hash(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def judge_reply(
    kind: MediaKind,
    ratings: Sequence[int] | Mapping[str, int],
    issues: Iterable[str] = (),
    explanation: str = "ok",
    overall: int | None = None,
) -> str:
    """A well-formed judge reply for the given modality's rubric."""
    dims = dimensions_for(kind)
    if isinstance(ratings, Mapping):
        values = {d: ratings[d] for d in dims}
    else:
        values = dict(zip(dims, ratings))
    payload: dict[str, Any] = dict(values)
    payload["overall_score"] = overall if overall is not None else min(values.values())
    payload["issues"] = list(issues)
    payload["explanation"] = explanation
    return json.dumps(payload)


class FixtureBuilder:
    """Accumulates (agent, item) canned replies into a mock fixture document.

    Token counts default to small values derived stably from the key so that
    costs vary across entries but never across runs.
    """

    def __init__(self) -> None:
        self.entries: list[dict[str, Any]] = []

    def add(
        self,
        agent: str,
        item_id: str,
        text: str,
        input_tokens: int | None = None,
        output_tokens: int | None = None,
        faults: Sequence[Any] = (),
        latency: float = 0.0,
        hold: float = 0.0,
    ) -> "FixtureBuilder":
        seed = _stable_hash(f"{agent}|{item_id}")
        entry: dict[str, Any] = {
            "agent": agent,
            "item_id": item_id,
            "text": text,
            "input_tokens": input_tokens if input_tokens is not None else 100 + seed % 400,
            "output_tokens": output_tokens if output_tokens is not None else 50 + seed % 200,
        }
        if faults:
            entry["faults"] = list(faults)
        if latency:
            entry["latency"] = latency
        if hold:
            entry["hold"] = hold
        self.entries.append(entry)
        return self

    def add_item_workflow(
        self,
        item: MediaItem,
        domain: VisualDomain | None = None,
        router_reply: str | None = None,
        ratings: Sequence[int] | None = None,
        judge_text: str | None = None,
        agent_faults: Mapping[str, Sequence[Any]] | None = None,
    ) -> "FixtureBuilder":
        """Entries for everything one item needs to flow through the pipeline.

        domain defaults to the item's known/bypass domain and controls which
        workflow's agents get canned replies. For classified items a router
        reply is emitted (defaulting to the bare option letter). ratings
        default to all 3s (a kept caption).
        """
        if domain is None:
            if item.known_domain is not None:
                domain = item.known_domain
            elif item.kind is MediaKind.VIDEO:
                domain = VisualDomain.VIDEO_TEMPORAL
            else:
                raise ValueError(f"item {item.id}: domain required for classified images")
        if item.known_domain is None and item.kind is MediaKind.IMAGE:
            letters = "ABCDEFGHI"
            letter = letters[list(VisualDomain).index(domain)]
            self.add(ROUTER_AGENT, item.id, router_reply or letter)

        workflow = DEFAULT_WORKFLOWS[domain]
        faults = dict(agent_faults or {})
        for agent in workflow.functional_agents:
            self.add(
                agent,
                item.id,
                f"{agent} perspective on {item.id} ({domain.value}).",
                faults=faults.get(agent, ()),
            )
        self.add(
            workflow.summary_agent,
            item.id,
            f"Aggregated caption for {item.id} in the {domain.value} domain.",
            faults=faults.get(workflow.summary_agent, ()),
        )
        judge_agent = JUDGE_AGENT_BY_KIND[item.kind]
        reply = judge_text
        if reply is None:
            reply = judge_reply(item.kind, ratings if ratings is not None else [3, 3, 3, 3, 3])
        self.add(judge_agent, item.id, reply, faults=faults.get(judge_agent, ()))
        return self

    def as_dict(self) -> dict[str, Any]:
        return {"entries": list(self.entries)}

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.as_dict(), indent=2) + "\n", encoding="utf-8")
        return path


_DOMAIN_CYCLE: tuple[VisualDomain, ...] = tuple(
    d for d in VisualDomain if d is not VisualDomain.VIDEO_TEMPORAL
)


def demo_items(n: int, video_every: int = 5, known_every: int = 3) -> list[MediaItem]:
    """A mixed-domain item list: every video_every-th item is a video, every
    known_every-th image carries a known domain (routing bypass)."""
    items: list[MediaItem] = []
    for i in range(n):
        item_id = f"item-{i:03d}"
        if video_every and i % video_every == video_every - 1:
            items.append(
                MediaItem(
                    id=item_id,
                    kind=MediaKind.VIDEO,
                    uri=f"media/{item_id}.mp4",
                    width=1280,
                    height=720,
                    duration=8.0 + i,
                    source_tag="demo",
                )
            )
            continue
        domain = _DOMAIN_CYCLE[i % len(_DOMAIN_CYCLE)]
        known = domain if known_every and i % known_every == 0 else None
        items.append(
            MediaItem(
                id=item_id,
                kind=MediaKind.IMAGE,
                uri=f"media/{item_id}.png",
                width=800 + 8 * (i % 32),
                height=640 + 16 * (i % 16),
                known_domain=known,
                source_tag="demo",
                extra={"collection": "demo-set"},
            )
        )
    return items


def intended_domain(item: MediaItem, index: int | None = None) -> VisualDomain:
    """The domain demo fixtures assume for an item (bypass or cycle position)."""
    if item.known_domain is not None:
        return item.known_domain
    if item.kind is MediaKind.VIDEO:
        return VisualDomain.VIDEO_TEMPORAL
    if index is None:
        index = int(item.id.rsplit("-", 1)[-1])
    return _DOMAIN_CYCLE[index % len(_DOMAIN_CYCLE)]


def write_manifest(items: Iterable[MediaItem], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_dict(), ensure_ascii=False) + "\n")
    return path


def build_demo_fixture(
    items: Sequence[MediaItem],
    drop_every: int = 4,
    path: str | Path | None = None,
) -> FixtureBuilder:
    """Fixture covering a whole demo manifest; every drop_every-th item gets a
    sub-top rating so the gate has something to reject."""
    builder = FixtureBuilder()
    for i, item in enumerate(items):
        ratings = [3, 3, 3, 3, 3]
        if drop_every and i % drop_every == drop_every - 1:
            ratings[i % 5] = 2
        builder.add_item_workflow(item, intended_domain(item, i), ratings=ratings)
    if path is not None:
        builder.write(path)
    return builder
