"""Domain enum and the workflow table."""

from __future__ import annotations

import pytest

from capsynth.agents import load_registry
from capsynth.domains import (
    DEFAULT_WORKFLOWS,
    VisualDomain,
    build_workflow_table,
    parse_domain,
    validate_workflows,
    workflow_for,
)


def test_exactly_nine_domains():
    assert len(VisualDomain) == 9


@pytest.mark.parametrize(
    "text,expected",
    [
        ("natural", VisualDomain.NATURAL),
        ("Structure & Math", VisualDomain.STRUCTURE_MATH),
        ("structure and math", VisualDomain.STRUCTURE_MATH),
        ("UI & Interaction", VisualDomain.UI_INTERACTION),
        ("video_temporal", VisualDomain.VIDEO_TEMPORAL),
        ("MEDICAL_BIO_IMAGING", VisualDomain.MEDICAL_BIO_IMAGING),
    ],
)
def test_parse_domain_forms(text, expected):
    assert parse_domain(text) is expected


def test_parse_domain_rejects_unknown():
    with pytest.raises(ValueError):
        parse_domain("abstract expressionism")


def test_natural_row():
    spec = workflow_for(VisualDomain.NATURAL)
    assert spec.functional_agents == ("NaturalPerception", "GeneralReasoning", "VisualGuideline")
    assert spec.summary_agent == "GeneralSummary"


def test_ui_row_has_no_visual_guideline():
    spec = workflow_for(VisualDomain.UI_INTERACTION)
    assert spec.functional_agents == ("UiPerception", "Ocr", "GeneralReasoning")
    assert "VisualGuideline" not in spec.functional_agents
    assert spec.summary_agent == "GeneralSummary"


def test_video_row_uses_video_summary():
    spec = workflow_for(VisualDomain.VIDEO_TEMPORAL)
    assert spec.functional_agents == ("VideoPerception", "VideoReasoning", "VideoGuideline")
    assert spec.summary_agent == "VideoSummary"


def test_image_rows_share_general_summary():
    for domain in VisualDomain:
        expected = "VideoSummary" if domain is VisualDomain.VIDEO_TEMPORAL else "GeneralSummary"
        assert workflow_for(domain).summary_agent == expected


def test_rows_are_duplicate_free():
    for spec in DEFAULT_WORKFLOWS.values():
        assert len(set(spec.functional_agents)) == len(spec.functional_agents)


def test_every_workflow_agent_resolves():
    validate_workflows(DEFAULT_WORKFLOWS, load_registry())


def test_override_replaces_one_row():
    table = build_workflow_table(
        {"synthetic": {"functional_agents": ["NaturalPerception", "GeneralReasoning"]}}
    )
    assert table[VisualDomain.SYNTHETIC].functional_agents == (
        "NaturalPerception",
        "GeneralReasoning",
    )
    assert table[VisualDomain.SYNTHETIC].summary_agent == "GeneralSummary"
    assert table[VisualDomain.NATURAL] == DEFAULT_WORKFLOWS[VisualDomain.NATURAL]


def test_override_must_still_resolve_in_registry():
    table = build_workflow_table(
        {"natural": {"functional_agents": ["NaturalPerception", "NoSuchAgent"]}}
    )
    with pytest.raises(ValueError, match="NoSuchAgent"):
        validate_workflows(table, load_registry())


def test_override_rejects_empty_agent_list():
    with pytest.raises(ValueError):
        build_workflow_table({"natural": {"functional_agents": []}})
