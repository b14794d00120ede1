"""Media manifest loading, resolution/aspect filtering, and frame sampling."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from .domains import VisualDomain, parse_domain


class MediaKind(str, Enum):
    IMAGE = "image"
    VIDEO = "video"


class ManifestError(ValueError):
    """A manifest file is missing or contains a bad record."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class MediaItem:
    """One image or video awaiting captioning."""

    id: str
    kind: MediaKind
    uri: str
    width: int
    height: int
    duration: float | None = None
    known_domain: VisualDomain | None = None
    source_tag: str = ""
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("item id must be non-empty")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"item {self.id}: width and height must be >= 1")
        if self.kind is MediaKind.VIDEO:
            if self.duration is None:
                raise ValueError(f"item {self.id}: video items require a duration")
            if self.duration < 0:
                raise ValueError(f"item {self.id}: duration must be non-negative")
            if self.known_domain not in (None, VisualDomain.VIDEO_TEMPORAL):
                raise ValueError(
                    f"item {self.id}: {self.known_domain.value} is not legal for videos"
                )
        else:
            if self.duration is not None:
                raise ValueError(f"item {self.id}: images must not carry a duration")
            if self.known_domain is VisualDomain.VIDEO_TEMPORAL:
                raise ValueError(f"item {self.id}: video_temporal is not legal for images")

    def to_dict(self) -> dict[str, Any]:
        """Manifest-shaped dict; unknown input fields are echoed back."""
        out: dict[str, Any] = {
            "id": self.id,
            "kind": self.kind.value,
            "uri": self.uri,
            "width": self.width,
            "height": self.height,
        }
        if self.duration is not None:
            out["duration"] = self.duration
        if self.known_domain is not None:
            out["known_domain"] = self.known_domain.value
        if self.source_tag:
            out["source_tag"] = self.source_tag
        out.update(self.extra)
        return out

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> "MediaItem":
        known = {"id", "kind", "uri", "width", "height", "duration", "known_domain", "source_tag"}
        for key in ("id", "kind", "uri", "width", "height"):
            if key not in record:
                raise ValueError(f"missing required field {key!r}")
        try:
            kind = MediaKind(str(record["kind"]).lower())
        except ValueError:
            raise ValueError(f"kind must be 'image' or 'video', got {record['kind']!r}") from None
        width, height = record["width"], record["height"]
        if not isinstance(width, int) or not isinstance(height, int) or isinstance(width, bool):
            raise ValueError("width and height must be integers")
        duration = record.get("duration")
        if duration is not None:
            if not isinstance(duration, (int, float)) or isinstance(duration, bool):
                raise ValueError("duration must be a number")
            duration = float(duration)
        known_domain = record.get("known_domain")
        if known_domain is not None:
            known_domain = parse_domain(known_domain)
        return cls(
            id=str(record["id"]),
            kind=kind,
            uri=str(record["uri"]),
            width=width,
            height=height,
            duration=duration,
            known_domain=known_domain,
            source_tag=str(record.get("source_tag", "")),
            extra={k: v for k, v in record.items() if k not in known},
        )


def load_manifest(path: str | Path) -> list[MediaItem]:
    """Load a line-delimited manifest, one JSON object per line, in file order.

    Raises ManifestError (with the offending line number) on malformed lines
    and on duplicate ids.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    items: list[MediaItem] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON: {exc.msg}", line=line_no) from None
            if not isinstance(record, dict):
                raise ManifestError("record must be a JSON object", line=line_no)
            try:
                item = MediaItem.from_dict(record)
            except ValueError as exc:
                raise ManifestError(str(exc), line=line_no) from None
            if item.id in seen:
                raise ManifestError(f"duplicate id {item.id!r}", line=line_no)
            seen.add(item.id)
            items.append(item)
    return items


@dataclass(frozen=True)
class FilterPolicy:
    """Quality thresholds; all bounds are exclusive (boundary values reject)."""

    min_short_edge: int = 512
    max_aspect_ratio: float = 2.0
    min_video_height: int = 480

    def __post_init__(self) -> None:
        if self.min_short_edge <= 0 or self.max_aspect_ratio <= 0 or self.min_video_height <= 0:
            raise ValueError("filter policy bounds must be strictly positive")


class RejectReason(str, Enum):
    SHORT_EDGE = "short_edge"
    ASPECT_RATIO = "aspect_ratio"
    VIDEO_RESOLUTION = "video_resolution"


@dataclass(frozen=True)
class FilterVerdict:
    accepted: bool
    reason: RejectReason | None = None


def filter_media(item: MediaItem, policy: FilterPolicy | None = None) -> FilterVerdict:
    """Accept or reject an item against the resolution/aspect policy.

    Rules are checked in a fixed order and the first violation is reported:
    short edge (images only), aspect ratio (both kinds), frame height
    (videos only). The short-edge rule does not constrain videos, whose
    width is unconstrained.
    """
    policy = policy or FilterPolicy()
    short, long_ = min(item.width, item.height), max(item.width, item.height)
    if item.kind is MediaKind.IMAGE and short <= policy.min_short_edge:
        return FilterVerdict(False, RejectReason.SHORT_EDGE)
    if long_ / short >= policy.max_aspect_ratio:
        return FilterVerdict(False, RejectReason.ASPECT_RATIO)
    if item.kind is MediaKind.VIDEO and item.height <= policy.min_video_height:
        return FilterVerdict(False, RejectReason.VIDEO_RESOLUTION)
    return FilterVerdict(True)


def sample_video_frames(item: MediaItem, n: int) -> list[float]:
    """Return n interval-midpoint timestamps, strictly increasing in [0, duration).

    t_k = duration * (k + 0.5) / n for k in 0..n-1.
    """
    if item.kind is not MediaKind.VIDEO:
        raise ValueError(f"item {item.id} is not a video")
    if n < 1:
        raise ValueError("frame count must be >= 1")
    duration = item.duration or 0.0
    if duration <= 0:
        raise ValueError(f"item {item.id}: frame sampling requires duration > 0")
    return [duration * (k + 0.5) / n for k in range(n)]
