"""The two evaluation harnesses: rubric-scored caption quality, and visual
reasoning where the caption replaces the image as LLM input.

Run with `python demos/06_eval_harnesses.py`.
"""

from capsynth import (
    ChatClient,
    MediaItem,
    MediaKind,
    MockBackend,
    QaInstance,
    VisualDomain,
    load_registry,
    quality_eval,
    reasoning_eval,
)
from capsynth.client import MockEntry
from capsynth.config import build_profiles
from capsynth.evalharness import extract_choice
from capsynth.testing import judge_reply

registry = load_registry()
profiles = build_profiles(None)


def img(item_id, domain=None):
    return MediaItem(id=item_id, kind=MediaKind.IMAGE, uri=f"{item_id}.png",
                     width=900, height=700, known_domain=domain)


# ---------------------------------------------------------------------------
# Caption-quality eval reuses the gate's rubric implementation and averages
# each dimension over successfully judged samples. A caption the gate keeps
# necessarily scores 3.0 means here.
# ---------------------------------------------------------------------------
entries = {
    ("ImageQualityEval", "s1"): MockEntry(
        text=judge_reply(MediaKind.IMAGE, [3, 3, 3, 3, 3]), input_tokens=40, output_tokens=30),
    ("ImageQualityEval", "s2"): MockEntry(
        text=judge_reply(MediaKind.IMAGE, [2, 3, 1, 3, 2], issues=["Factual Error"]),
        input_tokens=40, output_tokens=30),
    ("ImageQualityEval", "s3"): MockEntry(
        text=judge_reply(MediaKind.IMAGE, [3, 2, 3, 3, 3]), input_tokens=40, output_tokens=30),
}
samples = [
    (img("s1", VisualDomain.NATURAL), "a thorough caption"),
    (img("s2", VisualDomain.STRUCTURE_MATH), "a sloppy caption"),
    (img("s3", VisualDomain.NATURAL), "a decent caption"),
]
client = ChatClient(MockBackend(entries), profiles, sleep=None)
report = quality_eval(samples, registry, client)
print(report.as_table())
print("\nper domain:", report.per_domain)

# ---------------------------------------------------------------------------
# Answer extraction scans the reply tail for the last standalone option
# letter, optionally parenthesized; the lowercase article "a" never matches
# option A.
# ---------------------------------------------------------------------------
print()
for reply in ["The answer is (B).", "I would pick C, wait, no: D", "It is a cat", "b"]:
    print(f"  extract {reply!r:<34} -> {extract_choice(reply, 'ABCD')}")

# ---------------------------------------------------------------------------
# Reasoning eval: the caption stands in for the image. Unparseable replies
# and failed calls count as parse failures, never as wrong answers, and the
# accuracy denominator only counts parsed replies.
# ---------------------------------------------------------------------------
captions = {}
instances = []
entries = {}
replies = ["(B)", "the answer is B", "definitely A", "no idea, sorry"]
for k, reply in enumerate(replies):
    item = img(f"q{k}")
    captions[item.id] = "two dogs playing fetch in a park"
    instances.append(QaInstance(
        id=f"q{k}", item=item, question="How many dogs?",
        options=(("A", "one"), ("B", "two"), ("C", "three")), gold="B",
    ))
    entries[("Reasoner", item.id)] = MockEntry(text=reply, input_tokens=25, output_tokens=8)

client = ChatClient(MockBackend(entries), profiles, sleep=None)
result = reasoning_eval(instances, captions, client, client.profile_for("text"))
print(f"\n{result.as_table()}")
