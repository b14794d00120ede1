"""Reject-sampling quality gate: judge captions, parse strict JSON, keep all-3s."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

from .agents import AgentRegistry, frame_refs, render
from .client import AgentOutput, CallStatus, ChatClient
from .engine import DEFAULT_VIDEO_FRAMES, CaptionRecord, RecordStatus
from .media import MediaItem, MediaKind, sample_video_frames

RATING_SCALE = (1, 2, 3)
TOP_RATING = 3

IMAGE_DIMENSIONS: tuple[str, ...] = (
    "factual_accuracy",
    "completeness",
    "reasoning_rigor",
    "core_intent_capture",
    "professionalism_expression",
)

VIDEO_DIMENSIONS: tuple[str, ...] = (
    "temporal_factual_accuracy",
    "event_detail_coverage",
    "temporal_causal_logic",
    "core_narrative_intent",
    "coherence_formatting",
)

IMAGE_ISSUE_TAGS: tuple[str, ...] = (
    "Entity Error",
    "Attribute Error",
    "Quantity Error",
    "Position Relation Error",
    "Hallucinated Existence",
    "OCR Error",
    "Reasoning Fallacy",
    "Factual Error",
    "Structure/Format Violation",
    "Core Intent Missing",
)

VIDEO_ISSUE_TAGS: tuple[str, ...] = (
    "Entity Error",
    "Attribute Error",
    "Temporal Error",
    "Sequence Error",
    "Causality Error",
    "Motion/Action Error",
    "Coverage Omission",
    "Formatting Error",
    "Knowledge Error",
    "Core Intent Missing",
)

JUDGE_AGENTS: dict[MediaKind, str] = {
    MediaKind.IMAGE: "ImageQualityEval",
    MediaKind.VIDEO: "VideoQualityEval",
}

_RE_ASK_REMINDER = "Strictly output a single valid JSON object in the required format."


def dimensions_for(kind: MediaKind) -> tuple[str, ...]:
    return IMAGE_DIMENSIONS if kind is MediaKind.IMAGE else VIDEO_DIMENSIONS


def issue_tags_for(kind: MediaKind) -> tuple[str, ...]:
    return IMAGE_ISSUE_TAGS if kind is MediaKind.IMAGE else VIDEO_ISSUE_TAGS


class Verdict(str, Enum):
    KEEP = "keep"
    DROP = "drop"


class JudgeParseError(ValueError):
    """The judge reply was not the exact expected JSON schema."""


class JudgeError(Exception):
    """Judging failed after the re-ask; the record belongs in quarantine."""


@dataclass
class QualityScore:
    """Parsed five-dimension rating with the derived keep/drop verdict."""

    item_id: str
    modality: MediaKind
    ratings: dict[str, int]
    overall_score: int
    issues: list[str]
    explanation: str
    verdict: Verdict

    @classmethod
    def build(
        cls,
        item_id: str,
        modality: MediaKind,
        ratings: Mapping[str, int],
        overall_score: int,
        issues: Iterable[str] = (),
        explanation: str = "",
    ) -> "QualityScore":
        # Verdict depends only on the five ratings; overall_score is stored
        # as judge-reported but never consulted.
        verdict = (
            Verdict.KEEP
            if all(ratings[d] == TOP_RATING for d in dimensions_for(modality))
            else Verdict.DROP
        )
        return cls(
            item_id=item_id,
            modality=modality,
            ratings={d: ratings[d] for d in dimensions_for(modality)},
            overall_score=overall_score,
            issues=list(issues),
            explanation=explanation,
            verdict=verdict,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "item_id": self.item_id,
            "modality": self.modality.value,
            "ratings": dict(self.ratings),
            "overall_score": self.overall_score,
            "issues": list(self.issues),
            "explanation": self.explanation,
            "verdict": self.verdict.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "QualityScore":
        return cls(
            item_id=d["item_id"],
            modality=MediaKind(d["modality"]),
            ratings={k: int(v) for k, v in d["ratings"].items()},
            overall_score=int(d["overall_score"]),
            issues=list(d.get("issues", ())),
            explanation=d.get("explanation", ""),
            verdict=Verdict(d["verdict"]),
        )


def extract_json_object(text: str) -> str | None:
    """The first balanced {...} object in the text, fences and prose tolerated."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start : i + 1]
        start = text.find("{", start + 1)
    return None


def _require_rating(payload: Mapping[str, Any], key: str) -> int:
    value = payload[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise JudgeParseError(f"field {key!r} must be an integer rating")
    if value not in RATING_SCALE:
        raise JudgeParseError(f"field {key!r} out of the 3-point scale: {value}")
    return value


def parse_judge_reply(text: str, modality: MediaKind) -> dict[str, Any]:
    """Validate a judge reply against the exact per-modality JSON schema.

    Returns {"ratings", "overall_score", "issues", "explanation"}; raises
    JudgeParseError on any deviation (wrong or extra fields, out-of-range
    ratings, non-list issues, unknown issue tags).
    """
    blob = extract_json_object(text)
    if blob is None:
        raise JudgeParseError("no JSON object in reply")
    try:
        payload = json.loads(blob)
    except json.JSONDecodeError as exc:
        raise JudgeParseError(f"invalid JSON: {exc.msg}") from None
    if not isinstance(payload, dict):
        raise JudgeParseError("reply JSON is not an object")

    dims = dimensions_for(modality)
    expected = set(dims) | {"overall_score", "issues", "explanation"}
    actual = set(payload)
    if actual != expected:
        missing = sorted(expected - actual)
        extra = sorted(actual - expected)
        raise JudgeParseError(f"schema mismatch: missing={missing} unexpected={extra}")

    ratings = {d: _require_rating(payload, d) for d in dims}
    overall = _require_rating(payload, "overall_score")
    issues = payload["issues"]
    if not isinstance(issues, list) or not all(isinstance(tag, str) for tag in issues):
        raise JudgeParseError("field 'issues' must be a list of tags")
    allowed = set(issue_tags_for(modality))
    unknown = [tag for tag in issues if tag not in allowed]
    if unknown:
        raise JudgeParseError(f"unknown issue tag(s): {unknown}")
    explanation = payload["explanation"]
    if not isinstance(explanation, str):
        raise JudgeParseError("field 'explanation' must be a string")
    return {
        "ratings": ratings,
        "overall_score": overall,
        "issues": issues,
        "explanation": explanation,
    }


def _caption_block(caption: str) -> str:
    return f"Candidate caption:\n{caption}"


def judge_caption(
    caption: str,
    item: MediaItem,
    registry: AgentRegistry,
    client: ChatClient,
    call_log: list[AgentOutput] | None = None,
    video_frames: int = DEFAULT_VIDEO_FRAMES,
) -> QualityScore:
    """Judge one caption against its media with the modality rubric.

    Video items are presented as sampled frames, like the captioning agents
    see them. One re-ask is allowed on a parse failure; a second failure (or
    a failed model call) raises JudgeError. This single implementation backs
    both the gate and the caption-quality harness.
    """
    spec = registry.resolve(JUDGE_AGENTS[item.kind])
    context: dict = {}
    if item.kind is MediaKind.VIDEO and (item.duration or 0) > 0:
        context["media"] = frame_refs(item.uri, sample_video_frames(item, video_frames))
    last_error = "judge call failed"
    for attempt in (1, 2):
        extra = _caption_block(caption)
        if attempt == 2:
            extra = f"{extra}\n\n{_RE_ASK_REMINDER}"
        output = client.chat(render(spec, item, {**context, "extra": extra}))
        if call_log is not None:
            call_log.append(output)
        if output.status is not CallStatus.OK:
            last_error = f"judge call failed: {output.error}"
            continue
        try:
            parsed = parse_judge_reply(output.text, item.kind)
        except JudgeParseError as exc:
            last_error = f"unparseable judge reply: {exc}"
            continue
        return QualityScore.build(
            item_id=item.id,
            modality=item.kind,
            ratings=parsed["ratings"],
            overall_score=parsed["overall_score"],
            issues=parsed["issues"],
            explanation=parsed["explanation"],
        )
    raise JudgeError(last_error)


def judge(
    record: CaptionRecord,
    item: MediaItem,
    registry: AgentRegistry,
    client: ChatClient,
    call_log: list[AgentOutput] | None = None,
    video_frames: int = DEFAULT_VIDEO_FRAMES,
) -> QualityScore:
    """Judge a completed caption record (pre: status complete)."""
    if record.status is not RecordStatus.COMPLETE:
        raise ValueError(f"record {record.item_id} is not complete; cannot judge")
    if record.item_id != item.id:
        raise ValueError("record/item mismatch")
    return judge_caption(
        record.caption, item, registry, client, call_log=call_log, video_frames=video_frames
    )


@dataclass
class GateStats:
    """Single-pass gate statistics."""

    total: int = 0
    judged: int = 0
    kept: int = 0
    dropped: int = 0
    quarantined: int = 0
    yield_ratio: float | None = None
    rating_histograms: dict[str, dict[int, int]] = field(default_factory=dict)
    issue_counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "judged": self.judged,
            "kept": self.kept,
            "dropped": self.dropped,
            "quarantined": self.quarantined,
            "yield_ratio": self.yield_ratio,
            "rating_histograms": {
                dim: {str(r): c for r, c in sorted(hist.items())}
                for dim, hist in sorted(self.rating_histograms.items())
            },
            "issue_counts": dict(sorted(self.issue_counts.items())),
        }


@dataclass
class GateResult:
    kept: list[CaptionRecord]
    dropped: list[CaptionRecord]
    quarantined: list[CaptionRecord]
    stats: GateStats


def filter_dataset(
    records: Iterable[CaptionRecord],
    scores: Mapping[str, QualityScore],
    quarantined_ids: Iterable[str] = (),
) -> GateResult:
    """Partition judged records into kept/dropped/quarantined, with stats.

    Every input record must appear in scores or in quarantined_ids; the three
    output lists partition the input exactly.
    """
    quarantine_set = set(quarantined_ids)
    result = GateResult([], [], [], GateStats())
    stats = result.stats
    for record in records:
        stats.total += 1
        if record.item_id in quarantine_set:
            stats.quarantined += 1
            result.quarantined.append(record)
            continue
        score = scores.get(record.item_id)
        if score is None:
            raise ValueError(f"record {record.item_id!r} neither judged nor quarantined")
        stats.judged += 1
        for dim, rating in score.ratings.items():
            stats.rating_histograms.setdefault(dim, {}).setdefault(rating, 0)
            stats.rating_histograms[dim][rating] += 1
        for tag in score.issues:
            stats.issue_counts[tag] = stats.issue_counts.get(tag, 0) + 1
        if score.verdict is Verdict.KEEP:
            stats.kept += 1
            result.kept.append(record)
        else:
            stats.dropped += 1
            result.dropped.append(record)
    stats.yield_ratio = (stats.kept / stats.judged) if stats.judged else None
    return result
