"""Prompt-template catalog and per-item request rendering."""

from __future__ import annotations

import string
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .media import MediaItem, MediaKind

#: Placeholders a template may reference (string.Template $name syntax).
TEMPLATE_PLACEHOLDERS = frozenset({"media", "agent_outputs", "domain", "extra"})


class RegistryError(ValueError):
    """Registry construction failed: duplicate/conflicting names or bad templates."""


class RenderError(ValueError):
    """A request could not be rendered: missing context or incompatible media."""


class AgentCategory(str, Enum):
    GUIDELINE = "guideline"
    PERCEPTION = "perception"
    REASONING = "reasoning"
    TOOL = "tool"
    SUMMARY = "summary"


class Modality(str, Enum):
    VISION_TEXT = "vision_text"
    TEXT_ONLY = "text_only"


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"


@dataclass(frozen=True)
class AgentSpec:
    """A prompt-templated model agent.

    media_kind restricts which item kind the agent accepts; None means any.
    """

    name: str
    category: AgentCategory
    modality: Modality
    prompt_template: str
    model_binding: str
    max_output_tokens: int
    media_kind: MediaKind | None = None

    def __post_init__(self) -> None:
        if self.max_output_tokens < 1:
            raise ValueError(f"agent {self.name}: max_output_tokens must be positive")
        if self.category is AgentCategory.SUMMARY and self.modality is not Modality.TEXT_ONLY:
            raise ValueError(f"agent {self.name}: summary agents are text-only")
        if (
            self.category in (AgentCategory.GUIDELINE, AgentCategory.PERCEPTION, AgentCategory.REASONING)
            and self.modality is not Modality.VISION_TEXT
        ):
            raise ValueError(f"agent {self.name}: {self.category.value} agents take vision input")
        unknown = template_placeholders(self.prompt_template) - TEMPLATE_PLACEHOLDERS
        if unknown:
            raise ValueError(
                f"agent {self.name}: unknown template placeholder(s) {sorted(unknown)}"
            )


def template_placeholders(template: str) -> set[str]:
    """Names of $-placeholders used by a template."""
    found: set[str] = set()
    for match in string.Template.pattern.finditer(template):
        name = match.group("named") or match.group("braced")
        if name:
            found.add(name)
    return found


@dataclass(frozen=True)
class MediaRef:
    """A reference to the media payload; timestamp marks a sampled video frame."""

    uri: str
    timestamp: float | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"uri": self.uri}
        if self.timestamp is not None:
            out["timestamp"] = self.timestamp
        return out


@dataclass(frozen=True)
class Message:
    role: Role
    text: str = ""
    media: tuple[MediaRef, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"role": self.role.value, "text": self.text}
        if self.media:
            out["media"] = [m.to_dict() for m in self.media]
        return out


@dataclass(frozen=True)
class RenderedRequest:
    """A ready-to-send chat request for one agent on one item."""

    agent: str
    item_id: str
    messages: tuple[Message, ...]
    model_binding: str
    max_output_tokens: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "agent": self.agent,
            "item_id": self.item_id,
            "messages": [m.to_dict() for m in self.messages],
            "model_binding": self.model_binding,
            "max_output_tokens": self.max_output_tokens,
        }

    @property
    def text_chars(self) -> int:
        """Total characters of text content, used for token estimation."""
        return sum(len(m.text) for m in self.messages)


# Built-in agent metadata: category, modality, media kind, model binding,
# output budget. Templates live in the adjacent templates/ directory, one
# text file per agent, filename = agent name.
_BUILTIN_AGENTS: dict[str, tuple[AgentCategory, Modality, MediaKind | None, str, int]] = {
    "NaturalPerception": (AgentCategory.PERCEPTION, Modality.VISION_TEXT, MediaKind.IMAGE, "vision", 1024),
    "LogicalPerception": (AgentCategory.PERCEPTION, Modality.VISION_TEXT, MediaKind.IMAGE, "vision", 1024),
    "InfographicPerception": (AgentCategory.PERCEPTION, Modality.VISION_TEXT, MediaKind.IMAGE, "vision", 1024),
    "UiPerception": (AgentCategory.PERCEPTION, Modality.VISION_TEXT, MediaKind.IMAGE, "vision", 1024),
    "Ocr": (AgentCategory.TOOL, Modality.VISION_TEXT, MediaKind.IMAGE, "vision", 1024),
    "Coder": (AgentCategory.TOOL, Modality.VISION_TEXT, MediaKind.IMAGE, "vision", 1024),
    "GeneralReasoning": (AgentCategory.REASONING, Modality.VISION_TEXT, MediaKind.IMAGE, "vision", 1024),
    "KnowledgeReasoning": (AgentCategory.REASONING, Modality.VISION_TEXT, MediaKind.IMAGE, "vision", 1024),
    "MedicalReasoning": (AgentCategory.REASONING, Modality.VISION_TEXT, MediaKind.IMAGE, "vision", 1024),
    "VisualGuideline": (AgentCategory.GUIDELINE, Modality.VISION_TEXT, MediaKind.IMAGE, "vision", 1024),
    "VideoPerception": (AgentCategory.PERCEPTION, Modality.VISION_TEXT, MediaKind.VIDEO, "vision", 1024),
    "VideoReasoning": (AgentCategory.REASONING, Modality.VISION_TEXT, MediaKind.VIDEO, "vision", 1024),
    "VideoGuideline": (AgentCategory.GUIDELINE, Modality.VISION_TEXT, MediaKind.VIDEO, "vision", 1024),
    "GeneralSummary": (AgentCategory.SUMMARY, Modality.TEXT_ONLY, None, "text", 2048),
    "VideoSummary": (AgentCategory.SUMMARY, Modality.TEXT_ONLY, None, "text", 2048),
    "DomainRouter": (AgentCategory.TOOL, Modality.VISION_TEXT, None, "vision", 16),
    "ImageQualityEval": (AgentCategory.TOOL, Modality.VISION_TEXT, MediaKind.IMAGE, "judge", 1024),
    "VideoQualityEval": (AgentCategory.TOOL, Modality.VISION_TEXT, MediaKind.VIDEO, "judge", 1024),
}

#: Names that resolve to another agent's definition until overridden.
DEFAULT_ALIASES: dict[str, str] = {
    "StructurePerception": "LogicalPerception",
    "TexturePerception": "NaturalPerception",
}

#: The fifteen catalog agents whose templates are hash-pinned in tests.
CATALOG_AGENTS: tuple[str, ...] = (
    "NaturalPerception",
    "LogicalPerception",
    "GeneralReasoning",
    "InfographicPerception",
    "Ocr",
    "UiPerception",
    "Coder",
    "KnowledgeReasoning",
    "MedicalReasoning",
    "VisualGuideline",
    "VideoPerception",
    "VideoReasoning",
    "VideoGuideline",
    "GeneralSummary",
    "VideoSummary",
)


def builtin_template_path(name: str) -> Path:
    """Filesystem path of a built-in template asset."""
    return Path(str(resources.files(__package__) / "templates" / f"{name}.txt"))


def _load_builtin_template(name: str) -> str:
    text = (resources.files(__package__) / "templates" / f"{name}.txt").read_text("utf-8")
    return text.rstrip("\n")


class AgentRegistry:
    """Immutable-after-load catalog of agent specs plus alias redirects."""

    def __init__(self, agents: Mapping[str, AgentSpec], aliases: Mapping[str, str]):
        self._agents = dict(agents)
        self._aliases = dict(aliases)
        for alias, target in self._aliases.items():
            if alias in self._agents:
                raise RegistryError(f"name {alias!r} is both an agent and an alias")
            if target not in self._agents:
                raise RegistryError(f"alias {alias!r} points at unknown agent {target!r}")

    def __len__(self) -> int:
        return len(self._agents)

    def __contains__(self, name: object) -> bool:
        return name in self._agents or name in self._aliases

    def names(self) -> tuple[str, ...]:
        return tuple(sorted(self._agents))

    def aliases(self) -> dict[str, str]:
        return dict(self._aliases)

    def resolve(self, name: str) -> AgentSpec:
        """Spec for a name; alias lookups return the target spec rebound to the
        requested name so outputs stay labeled by the workflow-facing name."""
        if name in self._agents:
            return self._agents[name]
        if name in self._aliases:
            return replace(self._agents[self._aliases[name]], name=name)
        raise RegistryError(f"unknown agent {name!r}")


def load_registry(overrides: Mapping[str, Mapping[str, Any]] | None = None) -> AgentRegistry:
    """Build the registry from built-in templates plus config overrides.

    An override keyed by an alias name replaces the alias with a real agent
    (inheriting unspecified fields from the alias target). An override keyed
    by an existing agent may retune template, model_binding, or
    max_output_tokens, but changing its category or modality is a conflict.
    New names must specify at least a template and a category.
    """
    agents: dict[str, AgentSpec] = {}
    for name, (category, modality, media_kind, binding, max_tokens) in _BUILTIN_AGENTS.items():
        agents[name] = AgentSpec(
            name=name,
            category=category,
            modality=modality,
            prompt_template=_load_builtin_template(name),
            model_binding=binding,
            max_output_tokens=max_tokens,
            media_kind=media_kind,
        )
    aliases = dict(DEFAULT_ALIASES)

    for name, fields in (overrides or {}).items():
        fields = dict(fields)
        template = fields.pop("template", None)
        template_path = fields.pop("template_path", None)
        if template is not None and template_path is not None:
            raise RegistryError(f"override {name!r}: give template or template_path, not both")
        if template_path is not None:
            template = Path(template_path).read_text("utf-8").rstrip("\n")

        base: AgentSpec | None = None
        if name in agents:
            base = agents[name]
            for locked in ("category", "modality"):
                if locked in fields and str(fields[locked]) != getattr(base, locked).value:
                    raise RegistryError(
                        f"override {name!r}: {locked} conflicts with existing agent"
                    )
        elif name in aliases:
            base = agents[aliases[name]]

        if base is None and (template is None or "category" not in fields):
            raise RegistryError(f"override {name!r}: new agents need a template and a category")

        if "media_kind" in fields:
            raw_kind = fields["media_kind"]
            media_kind = None if raw_kind in (None, "", "any") else MediaKind(raw_kind)
        else:
            media_kind = base.media_kind if base else None
        try:
            spec = AgentSpec(
                name=name,
                category=AgentCategory(fields["category"]) if "category" in fields else base.category,
                modality=(
                    Modality(fields["modality"])
                    if "modality" in fields
                    else (base.modality if base else Modality.VISION_TEXT)
                ),
                prompt_template=template if template is not None else base.prompt_template,
                model_binding=str(fields.get("model_binding", base.model_binding if base else "vision")),
                max_output_tokens=int(fields.get("max_output_tokens", base.max_output_tokens if base else 1024)),
                media_kind=media_kind,
            )
        except ValueError as exc:
            raise RegistryError(f"override {name!r}: {exc}") from None
        agents[name] = spec
        aliases.pop(name, None)

    return AgentRegistry(agents, aliases)


def render(
    agent: AgentSpec,
    item: MediaItem,
    context: Mapping[str, Any] | None = None,
) -> RenderedRequest:
    """Render the deterministic chat request for one agent on one item.

    The (placeholder-substituted) template becomes the system message. For
    vision agents the user message carries the media reference(s) - the
    item's uri, or the frame refs supplied as context["media"] - plus any
    context["extra"] instruction text. Text-only agents get a user message
    built from context["agent_outputs"] and/or context["extra"].
    """
    context = dict(context or {})
    if agent.media_kind is not None and agent.media_kind is not item.kind:
        raise RenderError(
            f"agent {agent.name} takes {agent.media_kind.value} items, "
            f"got {item.kind.value} {item.id!r}"
        )

    values = {
        "media": item.uri,
        "domain": context.get("domain", ""),
        "agent_outputs": context.get("agent_outputs", ""),
        "extra": context.get("extra", ""),
    }
    used = template_placeholders(agent.prompt_template)
    for name in used:
        if name not in context and name not in ("media",):
            raise RenderError(f"agent {agent.name}: template needs context[{name!r}]")
    system_text = string.Template(agent.prompt_template).substitute(values)

    extra = str(context.get("extra", ""))
    if agent.modality is Modality.TEXT_ONLY:
        parts = [str(context[k]) for k in ("agent_outputs", "extra") if context.get(k)]
        if not parts:
            raise RenderError(f"agent {agent.name}: text-only request needs agent_outputs or extra")
        user = Message(Role.USER, text="\n\n".join(parts))
    else:
        media = context.get("media")
        if media is None:
            refs: tuple[MediaRef, ...] = (MediaRef(item.uri),)
        else:
            refs = tuple(media)
            if not refs:
                raise RenderError(f"agent {agent.name}: empty media reference list")
        user = Message(Role.USER, text=extra, media=refs)

    return RenderedRequest(
        agent=agent.name,
        item_id=item.id,
        messages=(Message(Role.SYSTEM, text=system_text), user),
        model_binding=agent.model_binding,
        max_output_tokens=agent.max_output_tokens,
    )


def frame_refs(uri: str, timestamps: list[float]) -> tuple[MediaRef, ...]:
    """Media references for sampled video frames, in timestamp order."""
    return tuple(MediaRef(uri, timestamp=t) for t in timestamps)
