"""Evaluation harnesses: rubric-scored caption quality, and visual reasoning
where a caption stands in for the image as LLM input."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .agents import Message, RenderedRequest, Role
from .client import AgentOutput, CallStatus, ChatClient, ModelProfile
from .gate import JudgeError, judge_caption
from .media import MediaItem

REASONER_AGENT = "Reasoner"
_ANSWER_INSTRUCTION = "Answer with the option letter only."
_STRIP_CHARS = "()[]{}<>.,:;!?*_'\"`"


@dataclass(frozen=True)
class QaInstance:
    """One visual question whose image is replaced by a caption at eval time."""

    id: str
    item: MediaItem
    question: str
    options: tuple[tuple[str, str], ...] | None = None
    gold: str = ""

    def __post_init__(self) -> None:
        if self.options is not None:
            letters = [letter for letter, _ in self.options]
            if len(set(letters)) != len(letters):
                raise ValueError(f"instance {self.id}: duplicate option letters")
            if self.gold not in letters:
                raise ValueError(f"instance {self.id}: gold {self.gold!r} not an option letter")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "QaInstance":
        options = d.get("options")
        return cls(
            id=str(d["id"]),
            item=MediaItem.from_dict(d["item"]),
            question=str(d["question"]),
            options=tuple((str(a), str(b)) for a, b in options) if options else None,
            gold=str(d["gold"]),
        )


def load_qa_instances(path: str | Path) -> list[QaInstance]:
    """Load line-delimited QaInstance records."""
    instances = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                instances.append(QaInstance.from_dict(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}: line {line_no}: {exc}") from None
    return instances


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


@dataclass
class QualityEvalReport:
    """Per-dimension mean ratings over successfully judged samples."""

    n: int
    failed: int
    dimension_means: dict[str, float | None]
    overall_mean: float | None
    per_domain: dict[str, dict[str, Any]]
    all_failed: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "failed": self.failed,
            "dimension_means": dict(self.dimension_means),
            "overall_mean": self.overall_mean,
            "per_domain": dict(self.per_domain),
            "all_failed": self.all_failed,
        }

    def as_table(self) -> str:
        lines = [f"{'metric':<28} {'mean':>6}   (n={self.n}, failed={self.failed})"]
        for dim, mean in self.dimension_means.items():
            shown = "-" if mean is None else f"{mean:.3f}"
            lines.append(f"{dim:<28} {shown:>6}")
        overall = "-" if self.overall_mean is None else f"{self.overall_mean:.3f}"
        lines.append(f"{'overall':<28} {overall:>6}")
        return "\n".join(lines)


def quality_eval(
    samples: Iterable[tuple[MediaItem, str]],
    registry,
    client: ChatClient,
    call_log: list[AgentOutput] | None = None,
) -> QualityEvalReport:
    """Judge each (item, caption) pair with the gate rubric and average ratings.

    Means are computed only over successfully judged samples; judge failures
    are counted, and an empty success set is flagged rather than hidden.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("quality_eval needs at least one sample")
    dim_values: dict[str, list[int]] = {}
    domain_scores: dict[str, list[float]] = {}
    n = 0
    failed = 0
    for item, caption in samples:
        try:
            score = judge_caption(caption, item, registry, client, call_log=call_log)
        except JudgeError:
            failed += 1
            continue
        n += 1
        for dim, rating in score.ratings.items():
            dim_values.setdefault(dim, []).append(rating)
        domain = item.known_domain.value if item.known_domain else "unknown"
        domain_scores.setdefault(domain, []).append(
            sum(score.ratings.values()) / len(score.ratings)
        )
    dimension_means = {dim: _mean(vals) for dim, vals in dim_values.items()}
    present = [m for m in dimension_means.values() if m is not None]
    return QualityEvalReport(
        n=n,
        failed=failed,
        dimension_means=dimension_means,
        overall_mean=_mean(present),
        per_domain={
            domain: {"n": len(vals), "mean": _mean(vals)}
            for domain, vals in sorted(domain_scores.items())
        },
        all_failed=(n == 0),
    )


def extract_choice(reply: str, letters: Sequence[str]) -> str | None:
    """Last standalone option letter in the reply, optionally parenthesized.

    Scans whitespace-separated tokens from the end, stripping surrounding
    punctuation; a token must then equal one of the option letters exactly
    (case-sensitive, so a lowercase article never matches option A).
    """
    allowed = set(letters)
    for token in reversed(reply.split()):
        bare = token.strip(_STRIP_CHARS)
        if bare in allowed:
            return bare
    return None


def _normalize_answer(text: str) -> str:
    return " ".join(text.split()).casefold()


def reasoning_request(instance: QaInstance, caption: str, max_output_tokens: int = 1024) -> RenderedRequest:
    """Text-only request presenting the caption as the visual context."""
    lines = [f"Image description:\n{caption}", f"Question: {instance.question}"]
    if instance.options:
        lines.append("Options:\n" + "\n".join(f"{a}) {b}" for a, b in instance.options))
        lines.append(_ANSWER_INSTRUCTION)
    return RenderedRequest(
        agent=REASONER_AGENT,
        item_id=instance.item.id,
        messages=(Message(Role.USER, text="\n\n".join(lines)),),
        model_binding="text",
        max_output_tokens=max_output_tokens,
    )


@dataclass
class ReasoningEvalReport:
    """Accuracy over parsed replies; failures never count as wrong answers."""

    n: int
    parsed: int
    correct: int
    parse_failures: int
    accuracy: float | None
    per_domain: dict[str, dict[str, Any]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "parsed": self.parsed,
            "correct": self.correct,
            "parse_failures": self.parse_failures,
            "accuracy": self.accuracy,
            "per_domain": dict(self.per_domain),
        }

    def as_table(self) -> str:
        accuracy = "-" if self.accuracy is None else f"{self.accuracy:.3f}"
        return (
            f"{'instances':<16} {self.n:>6}\n"
            f"{'parsed':<16} {self.parsed:>6}\n"
            f"{'correct':<16} {self.correct:>6}\n"
            f"{'parse failures':<16} {self.parse_failures:>6}\n"
            f"{'accuracy':<16} {accuracy:>6}"
        )


def reasoning_eval(
    instances: Iterable[QaInstance],
    captions: Mapping[str, str],
    client: ChatClient,
    profile: ModelProfile,
    call_log: list[AgentOutput] | None = None,
) -> ReasoningEvalReport:
    """Answer each question from its caption alone and score the answers.

    Multiple-choice replies are parsed with extract_choice; open-ended
    answers compare exactly after whitespace/case normalization. accuracy is
    correct/parsed, with reasoner failures counted as parse failures and
    excluded from the denominator.
    """
    instances = list(instances)
    n = 0
    correct = 0
    parse_failures = 0
    domain_tallies: dict[str, dict[str, int]] = {}
    for instance in instances:
        if instance.item.id not in captions:
            raise ValueError(f"instance {instance.id}: no caption for item {instance.item.id!r}")
        n += 1
        domain = instance.item.known_domain.value if instance.item.known_domain else "unknown"
        tally = domain_tallies.setdefault(domain, {"n": 0, "correct": 0, "parse_failures": 0})
        tally["n"] += 1
        output = client.chat(reasoning_request(instance, captions[instance.item.id]), profile)
        if call_log is not None:
            call_log.append(output)
        if output.status is not CallStatus.OK:
            parse_failures += 1
            tally["parse_failures"] += 1
            continue
        if instance.options is not None:
            choice = extract_choice(output.text, [a for a, _ in instance.options])
            if choice is None:
                parse_failures += 1
                tally["parse_failures"] += 1
                continue
            hit = choice == instance.gold
        else:
            hit = _normalize_answer(output.text) == _normalize_answer(instance.gold)
        if hit:
            correct += 1
            tally["correct"] += 1
    parsed = n - parse_failures
    return ReasoningEvalReport(
        n=n,
        parsed=parsed,
        correct=correct,
        parse_failures=parse_failures,
        accuracy=(correct / parsed) if parsed else None,
        per_domain=dict(sorted(domain_tallies.items())),
    )
