"""The reject-sampling gate: strict judge JSON, keep-all-3s rule, quarantine.

Run with `python demos/04_quality_gate.py`.
"""

import json
from decimal import Decimal

from capsynth import (
    CaptionRecord,
    ChatClient,
    JudgeError,
    MediaItem,
    MediaKind,
    MockBackend,
    RecordStatus,
    VisualDomain,
    filter_dataset,
    judge,
    load_registry,
)
from capsynth.client import MockEntry
from capsynth.config import build_profiles
from capsynth.gate import IMAGE_DIMENSIONS, QualityScore, parse_judge_reply
from capsynth.testing import judge_reply

registry = load_registry()
profiles = build_profiles(None)

# ---------------------------------------------------------------------------
# The judge must answer in an exact JSON schema per modality. The parser
# tolerates code fences and surrounding prose, but rejects wrong field names,
# out-of-scale ratings, and unknown issue tags.
# ---------------------------------------------------------------------------
clean = judge_reply(MediaKind.IMAGE, [3, 3, 2, 3, 3], issues=["Reasoning Fallacy"])
print("clean reply parses:", parse_judge_reply(clean, MediaKind.IMAGE)["ratings"])

fenced = f"Here is my assessment.\n```json\n{clean}\n```"
print("fenced reply parses:", parse_judge_reply(fenced, MediaKind.IMAGE)["overall_score"])

for label, bad in [
    ("rating 4", json.dumps(dict(zip(IMAGE_DIMENSIONS, [4, 3, 3, 3, 3]),
                                 overall_score=3, issues=[], explanation="x"))),
    ("video fields on an image", judge_reply(MediaKind.VIDEO, [3, 3, 3, 3, 3])),
    ("prose only", "Looks great, full marks from me!"),
]:
    try:
        parse_judge_reply(bad, MediaKind.IMAGE)
    except Exception as exc:
        print(f"rejected ({label}): {type(exc).__name__}")

# ---------------------------------------------------------------------------
# Keep iff every dimension is rated 3. The judge-reported overall_score and
# issue tags are stored but never decide the verdict.
# ---------------------------------------------------------------------------
perfect = QualityScore.build("a", MediaKind.IMAGE, dict(zip(IMAGE_DIMENSIONS, [3] * 5)), 1)
one_flaw = QualityScore.build("b", MediaKind.IMAGE, dict(zip(IMAGE_DIMENSIONS, [3, 3, 3, 2, 3])), 3)
print(f"\nall 3s (overall_score=1!) -> {perfect.verdict.value}")
print(f"one 2 (overall_score=3!)  -> {one_flaw.verdict.value}")


def record(item_id, caption):
    return CaptionRecord(
        item_id=item_id, domain=VisualDomain.NATURAL, caption=caption, agent_outputs=(),
        summary_output=None, total_cost=Decimal("0"), total_latency=0.0,
        status=RecordStatus.COMPLETE,
    )


# ---------------------------------------------------------------------------
# An unparseable judge (even after the one re-ask) quarantines the record:
# it is neither kept nor dropped, so infrastructure failures never distort
# the yield statistics.
# ---------------------------------------------------------------------------
item = MediaItem(id="ghost", kind=MediaKind.IMAGE, uri="u.png", width=800, height=600)
client = ChatClient(
    MockBackend({("ImageQualityEval", "ghost"): MockEntry(text="* * * * *",
                                                          input_tokens=9, output_tokens=4)}),
    profiles, sleep=None,
)
try:
    judge(record("ghost", "a caption"), item, registry, client)
except JudgeError as exc:
    print(f"\nquarantined: {exc}")

# ---------------------------------------------------------------------------
# filter_dataset partitions records exactly and reports histograms.
# ---------------------------------------------------------------------------
records = [record(f"i{k}", f"caption {k}") for k in range(6)]
scores = {
    f"i{k}": QualityScore.build(
        f"i{k}", MediaKind.IMAGE,
        dict(zip(IMAGE_DIMENSIONS, [3, 3, 3, 3, 3] if k < 4 else [3, 2, 3, 3, 3])), 3,
    )
    for k in range(5)
}
result = filter_dataset(records, scores, quarantined_ids={"i5"})
print(f"\nkept={result.stats.kept} dropped={result.stats.dropped} "
      f"quarantined={result.stats.quarantined} yield={result.stats.yield_ratio:.3f}")
print("completeness histogram:", result.stats.rating_histograms["completeness"])
