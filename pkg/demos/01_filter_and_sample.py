"""Manifest ingestion: load items, apply the quality filter, sample frames.

Every capability here is offline and deterministic; run with
`python demos/01_filter_and_sample.py`.
"""

import json
import tempfile
from pathlib import Path

from capsynth import (
    FilterPolicy,
    MediaItem,
    MediaKind,
    filter_media,
    load_manifest,
    sample_video_frames,
)

# ---------------------------------------------------------------------------
# A manifest is a JSONL file: one object per line, unknown fields preserved.
# ---------------------------------------------------------------------------
rows = [
    {"id": "photo", "kind": "image", "uri": "img/photo.png", "width": 1024, "height": 768,
     "source_tag": "demo", "license": "cc-by"},
    {"id": "narrow", "kind": "image", "uri": "img/narrow.png", "width": 512, "height": 1000},
    {"id": "banner", "kind": "image", "uri": "img/banner.png", "width": 600, "height": 1200},
    {"id": "clip", "kind": "video", "uri": "vid/clip.mp4", "width": 854, "height": 480,
     "duration": 12.5},
    {"id": "talk", "kind": "video", "uri": "vid/talk.mp4", "width": 1280, "height": 720,
     "duration": 10.0},
]

with tempfile.TemporaryDirectory() as tmp:
    manifest = Path(tmp) / "manifest.jsonl"
    manifest.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    items = load_manifest(manifest)

print(f"loaded {len(items)} items, unknown fields ride along:")
print(f"  photo.extra = {items[0].extra}")

# ---------------------------------------------------------------------------
# The filter: images need short edge > 512 and aspect ratio < 2; videos need
# aspect ratio < 2 and height > 480. Bounds are exclusive, so 512 / 2.0 / 480
# all reject. The first violated rule is the reported reason.
# ---------------------------------------------------------------------------
policy = FilterPolicy()
print(f"\nfilter policy: {policy}")
for item in items:
    verdict = filter_media(item, policy)
    outcome = "accept" if verdict.accepted else f"reject ({verdict.reason.value})"
    print(f"  {item.id:<8} {item.width}x{item.height} {item.kind.value:<5} -> {outcome}")

# ---------------------------------------------------------------------------
# Videos that survive get interval-midpoint frame timestamps: for duration d
# and n frames, t_k = d * (k + 0.5) / n, all strictly inside [0, d).
# ---------------------------------------------------------------------------
talk = next(i for i in items if i.id == "talk")
for n in (1, 4, 8):
    print(f"\n{n} frame(s) over {talk.duration}s: {sample_video_frames(talk, n)}")

# A decoded-at-ingest item is not required: dimensions come from the manifest,
# so the pipeline never needs image or video codecs.
standalone = MediaItem(id="x", kind=MediaKind.IMAGE, uri="img/x.png", width=640, height=800)
print(f"\nstandalone item accepted: {filter_media(standalone).accepted}")
