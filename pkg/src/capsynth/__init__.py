"""capsynth: manifests of images and videos in, quality-gated captions out.

Each item is routed to a visual domain, captioned by that domain's set of
prompt-templated agents plus a summarizer, and kept only if an LLM judge
rates it top marks on every rubric dimension. All model traffic goes through
one chat-completions client that also supports a deterministic mock backend.
"""

from .agents import (
    AgentCategory,
    AgentRegistry,
    AgentSpec,
    MediaRef,
    Message,
    Modality,
    RenderedRequest,
    Role,
    load_registry,
    render,
)
from .client import (
    AgentOutput,
    CallStatus,
    ChatClient,
    HttpBackend,
    MockBackend,
    ModelProfile,
    Usage,
    cost_of,
)
from .config import ConfigError, RunConfig, build_run_config, load_config_file
from .domains import (
    DEFAULT_WORKFLOWS,
    VisualDomain,
    WorkflowSpec,
    build_workflow_table,
    workflow_for,
)
from .engine import CaptionRecord, RecordStatus, RunPolicy, run_workflow
from .evalharness import (
    QaInstance,
    QualityEvalReport,
    ReasoningEvalReport,
    quality_eval,
    reasoning_eval,
)
from .gate import (
    GateStats,
    JudgeError,
    QualityScore,
    Verdict,
    filter_dataset,
    judge,
    judge_caption,
)
from .media import (
    FilterPolicy,
    FilterVerdict,
    ManifestError,
    MediaItem,
    MediaKind,
    RejectReason,
    filter_media,
    load_manifest,
    sample_video_frames,
)
from .pipeline import RunLedger, report_cost, run, stats
from .router import RouteMethod, RoutingDecision, UnroutableError, route

__version__ = "0.1.0"

__all__ = [
    "AgentCategory",
    "AgentOutput",
    "AgentRegistry",
    "AgentSpec",
    "CallStatus",
    "CaptionRecord",
    "ChatClient",
    "ConfigError",
    "DEFAULT_WORKFLOWS",
    "FilterPolicy",
    "FilterVerdict",
    "GateStats",
    "HttpBackend",
    "JudgeError",
    "ManifestError",
    "MediaItem",
    "MediaKind",
    "MediaRef",
    "Message",
    "MockBackend",
    "Modality",
    "ModelProfile",
    "QaInstance",
    "QualityEvalReport",
    "QualityScore",
    "ReasoningEvalReport",
    "RecordStatus",
    "RejectReason",
    "RenderedRequest",
    "Role",
    "RouteMethod",
    "RoutingDecision",
    "RunConfig",
    "RunLedger",
    "RunPolicy",
    "UnroutableError",
    "Usage",
    "Verdict",
    "VisualDomain",
    "WorkflowSpec",
    "build_run_config",
    "build_workflow_table",
    "cost_of",
    "filter_dataset",
    "filter_media",
    "judge",
    "judge_caption",
    "load_config_file",
    "load_manifest",
    "load_registry",
    "quality_eval",
    "reasoning_eval",
    "render",
    "report_cost",
    "route",
    "run",
    "run_workflow",
    "sample_video_frames",
    "stats",
    "workflow_for",
]
