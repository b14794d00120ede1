"""The closed set of visual domains and the per-domain agent workflow table."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping


class VisualDomain(str, Enum):
    """The nine visual domains an item can be routed into."""

    NATURAL = "natural"
    STRUCTURE_MATH = "structure_math"
    INFOGRAPHIC_DOCUMENT = "infographic_document"
    MEDICAL_BIO_IMAGING = "medical_bio_imaging"
    UI_INTERACTION = "ui_interaction"
    CODE_PROGRAMMING = "code_programming"
    KNOWLEDGE_EDUCATION = "knowledge_education"
    SYNTHETIC = "synthetic"
    VIDEO_TEMPORAL = "video_temporal"

    @property
    def display_name(self) -> str:
        """Human-facing name, as shown in router options."""
        return _DISPLAY_NAMES[self]


_DISPLAY_NAMES: dict[VisualDomain, str] = {
    VisualDomain.NATURAL: "Natural",
    VisualDomain.STRUCTURE_MATH: "Structure & Math",
    VisualDomain.INFOGRAPHIC_DOCUMENT: "Infographic & Document",
    VisualDomain.MEDICAL_BIO_IMAGING: "Medical & Bio-Imaging",
    VisualDomain.UI_INTERACTION: "UI & Interaction",
    VisualDomain.CODE_PROGRAMMING: "Code & Programming",
    VisualDomain.KNOWLEDGE_EDUCATION: "Knowledge & Education",
    VisualDomain.SYNTHETIC: "Synthetic",
    VisualDomain.VIDEO_TEMPORAL: "Video & Temporal",
}

#: Domains legal for still images (everything but the video row).
IMAGE_DOMAINS: tuple[VisualDomain, ...] = tuple(
    d for d in VisualDomain if d is not VisualDomain.VIDEO_TEMPORAL
)


def _normalize(text: str) -> str:
    return " ".join(text.split()).casefold()


_DOMAIN_LOOKUP: dict[str, VisualDomain] = {}
for _d in VisualDomain:
    _DOMAIN_LOOKUP[_normalize(_d.value)] = _d
    _DOMAIN_LOOKUP[_normalize(_d.name)] = _d
    _DOMAIN_LOOKUP[_normalize(_d.display_name)] = _d
    _DOMAIN_LOOKUP[_normalize(_d.display_name.replace("&", "and"))] = _d


def parse_domain(text: str) -> VisualDomain:
    """Parse a domain from its value, member name, or display name.

    Matching is case-insensitive and whitespace-normalized. Raises ValueError
    for anything outside the closed set.
    """
    key = _normalize(str(text))
    try:
        return _DOMAIN_LOOKUP[key]
    except KeyError:
        raise ValueError(f"unknown visual domain: {text!r}") from None


@dataclass(frozen=True)
class WorkflowSpec:
    """The ordered functional-agent set plus summary agent for one domain."""

    domain: VisualDomain
    functional_agents: tuple[str, ...]
    summary_agent: str

    def __post_init__(self) -> None:
        if not self.functional_agents:
            raise ValueError(f"workflow for {self.domain.value} has no functional agents")
        if len(set(self.functional_agents)) != len(self.functional_agents):
            raise ValueError(f"workflow for {self.domain.value} lists a duplicate agent")


def _wf(domain: VisualDomain, functional: list[str], summary: str) -> WorkflowSpec:
    return WorkflowSpec(domain, tuple(functional), summary)


#: Built-in domain -> workflow table. Eight image rows share GeneralSummary;
#: the video row uses VideoSummary. UiInteraction is the one image row without
#: VisualGuideline.
DEFAULT_WORKFLOWS: dict[VisualDomain, WorkflowSpec] = {
    VisualDomain.NATURAL: _wf(
        VisualDomain.NATURAL,
        ["NaturalPerception", "GeneralReasoning", "VisualGuideline"],
        "GeneralSummary",
    ),
    VisualDomain.STRUCTURE_MATH: _wf(
        VisualDomain.STRUCTURE_MATH,
        ["StructurePerception", "InfographicPerception", "GeneralReasoning", "VisualGuideline"],
        "GeneralSummary",
    ),
    VisualDomain.INFOGRAPHIC_DOCUMENT: _wf(
        VisualDomain.INFOGRAPHIC_DOCUMENT,
        ["InfographicPerception", "Ocr", "GeneralReasoning", "VisualGuideline"],
        "GeneralSummary",
    ),
    VisualDomain.MEDICAL_BIO_IMAGING: _wf(
        VisualDomain.MEDICAL_BIO_IMAGING,
        ["NaturalPerception", "MedicalReasoning", "VisualGuideline"],
        "GeneralSummary",
    ),
    VisualDomain.UI_INTERACTION: _wf(
        VisualDomain.UI_INTERACTION,
        ["UiPerception", "Ocr", "GeneralReasoning"],
        "GeneralSummary",
    ),
    VisualDomain.CODE_PROGRAMMING: _wf(
        VisualDomain.CODE_PROGRAMMING,
        ["Coder", "GeneralReasoning", "VisualGuideline"],
        "GeneralSummary",
    ),
    VisualDomain.KNOWLEDGE_EDUCATION: _wf(
        VisualDomain.KNOWLEDGE_EDUCATION,
        ["InfographicPerception", "KnowledgeReasoning", "VisualGuideline"],
        "GeneralSummary",
    ),
    VisualDomain.SYNTHETIC: _wf(
        VisualDomain.SYNTHETIC,
        ["TexturePerception", "GeneralReasoning", "VisualGuideline"],
        "GeneralSummary",
    ),
    VisualDomain.VIDEO_TEMPORAL: _wf(
        VisualDomain.VIDEO_TEMPORAL,
        ["VideoPerception", "VideoReasoning", "VideoGuideline"],
        "VideoSummary",
    ),
}


def workflow_for(
    domain: VisualDomain,
    table: Mapping[VisualDomain, WorkflowSpec] | None = None,
) -> WorkflowSpec:
    """Return the workflow row for a domain; total over the enum."""
    return (table or DEFAULT_WORKFLOWS)[domain]


def build_workflow_table(
    overrides: Mapping[str, Mapping[str, Any]] | None = None,
) -> dict[VisualDomain, WorkflowSpec]:
    """Built-in table with optional per-domain overrides applied.

    Override shape per domain: {"functional_agents": [...], "summary_agent": str}.
    Unspecified fields keep their built-in values.
    """
    table = dict(DEFAULT_WORKFLOWS)
    for key, fields in (overrides or {}).items():
        domain = parse_domain(key)
        base = table[domain]
        functional = fields.get("functional_agents", list(base.functional_agents))
        summary = fields.get("summary_agent", base.summary_agent)
        table[domain] = WorkflowSpec(domain, tuple(functional), str(summary))
    return table


def validate_workflows(
    table: Mapping[VisualDomain, WorkflowSpec],
    registry: "Any",
) -> None:
    """Check that every agent named in the table resolves in the registry.

    Called at startup; raises ValueError on the first missing agent.
    """
    for domain in VisualDomain:
        spec = table[domain]
        for name in (*spec.functional_agents, spec.summary_agent):
            if name not in registry:
                raise ValueError(
                    f"workflow for {domain.value} references unknown agent {name!r}"
                )
