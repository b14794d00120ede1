"""The agent catalog: domains, workflows, templates, and request rendering.

Run with `python demos/02_prompt_catalog.py`.
"""

from capsynth import (
    MediaItem,
    MediaKind,
    VisualDomain,
    load_registry,
    render,
    sample_video_frames,
    workflow_for,
)
from capsynth.agents import frame_refs

registry = load_registry()

# ---------------------------------------------------------------------------
# Nine visual domains, each mapped to an ordered set of functional agents
# plus one summary agent. Note the UI row has no VisualGuideline, and the
# video row has its own summarizer.
# ---------------------------------------------------------------------------
print("domain -> workflow")
for domain in VisualDomain:
    spec = workflow_for(domain)
    agents = ", ".join(spec.functional_agents)
    print(f"  {domain.display_name:<24} [{agents}] -> {spec.summary_agent}")

# ---------------------------------------------------------------------------
# The registry holds one prompt template per agent (plus alias redirects for
# StructurePerception and TexturePerception until a config override replaces
# them with dedicated prompts).
# ---------------------------------------------------------------------------
print(f"\nregistry: {len(registry)} agents, aliases {registry.aliases()}")
ocr = registry.resolve("Ocr")
print(f"\nOcr template starts: {ocr.prompt_template[:72]}...")
print(f"Ocr category={ocr.category.value} modality={ocr.modality.value} "
      f"binding={ocr.model_binding} max_tokens={ocr.max_output_tokens}")

# ---------------------------------------------------------------------------
# Rendering is a pure function: template -> system message, media refs and
# any extra instruction -> user message. Identical inputs give byte-identical
# requests, which is what makes mock runs reproducible.
# ---------------------------------------------------------------------------
image = MediaItem(id="img-9", kind=MediaKind.IMAGE, uri="img/img-9.png", width=900, height=700)
request = render(registry.resolve("InfographicPerception"), image)
print(f"\nrendered request for {request.agent}:")
print(f"  messages: {[m.role.value for m in request.messages]}")
print(f"  media refs: {[m.uri for m in request.messages[1].media]}")

video = MediaItem(id="vid-3", kind=MediaKind.VIDEO, uri="vid/vid-3.mp4",
                  width=1280, height=720, duration=18.0)
frames = frame_refs(video.uri, sample_video_frames(video, 6))
request = render(registry.resolve("VideoPerception"), video, {"media": frames})
print(f"\nVideoPerception carries {len(request.messages[1].media)} frame refs:")
print(f"  timestamps: {[m.timestamp for m in request.messages[1].media]}")

# Summary agents are text-only; they consume the labeled functional outputs.
summary = render(
    registry.resolve("GeneralSummary"),
    image,
    {"agent_outputs": "### Ocr (Part A)\nSIGN: OPEN\n\n### GeneralReasoning (Part B)\nA shop entrance."},
)
print(f"\nGeneralSummary user text:\n{summary.messages[1].text}")
