"""Run configuration: TOML file loading, env substitution, profile defaults."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .client import ModelProfile
from .engine import DEFAULT_VIDEO_FRAMES, RunPolicy
from .media import FilterPolicy


class ConfigError(ValueError):
    """Bad or inconsistent run configuration."""


_ENV_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _expand_env(value: Any) -> Any:
    """Expand ${VAR} in strings, recursively; a missing variable is fatal."""
    if isinstance(value, str):

        def sub(match: re.Match) -> str:
            name = match.group(1)
            if name not in os.environ:
                raise ConfigError(f"environment variable {name} is not set")
            return os.environ[name]

        return _ENV_PATTERN.sub(sub, value)
    if isinstance(value, dict):
        return {k: _expand_env(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_expand_env(v) for v in value]
    return value


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Parse a TOML config file and expand ${VAR} references."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return _expand_env(data)


#: Bindings every built-in agent uses; each gets a placeholder profile so a
#: mock-backed run needs no [profiles.*] sections at all.
DEFAULT_BINDINGS = ("vision", "text", "judge")


def _default_profile(name: str) -> ModelProfile:
    return ModelProfile(
        name=name,
        endpoint="http://localhost:8000/v1/chat/completions",
        model_id=f"{name}-model",
    )


def build_profiles(sections: Mapping[str, Mapping[str, Any]] | None) -> dict[str, ModelProfile]:
    """Profiles from [profiles.<name>] sections plus defaults for the three
    built-in bindings."""
    profiles = {name: _default_profile(name) for name in DEFAULT_BINDINGS}
    for name, fields in (sections or {}).items():
        try:
            profiles[name] = ModelProfile(
                name=name,
                endpoint=str(fields.get("endpoint", _default_profile(name).endpoint)),
                model_id=str(fields.get("model_id", f"{name}-model")),
                price_in=fields.get("price_in", 0),
                price_out=fields.get("price_out", 0),
                max_concurrency=int(fields.get("max_concurrency", 4)),
                timeout=float(fields.get("timeout", 120.0)),
                max_retries=int(fields.get("max_retries", 3)),
                api_key=fields.get("api_key"),
            )
        except ValueError as exc:
            raise ConfigError(f"profile {name!r}: {exc}") from None
    return profiles


def build_filter_policy(section: Mapping[str, Any] | None) -> FilterPolicy:
    section = section or {}
    try:
        return FilterPolicy(
            min_short_edge=int(section.get("min_short_edge", 512)),
            max_aspect_ratio=float(section.get("max_aspect_ratio", 2.0)),
            min_video_height=int(section.get("min_video_height", 480)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class RunConfig:
    """Everything one pipeline run needs."""

    manifest: Path
    run_dir: Path
    workers: int = 4
    policy: RunPolicy = RunPolicy.STRICT
    resume: bool = False
    mock_fixture: Path | None = None
    video_frames: int = DEFAULT_VIDEO_FRAMES
    filter_policy: FilterPolicy = field(default_factory=FilterPolicy)
    profiles: dict[str, ModelProfile] = field(default_factory=lambda: build_profiles(None))
    agent_overrides: dict[str, dict[str, Any]] = field(default_factory=dict)
    workflow_overrides: dict[str, dict[str, Any]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.manifest = Path(self.manifest)
        self.run_dir = Path(self.run_dir)
        if self.mock_fixture is not None:
            self.mock_fixture = Path(self.mock_fixture)
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def build_run_config(
    config: Mapping[str, Any] | None = None,
    **overrides: Any,
) -> RunConfig:
    """Merge a parsed config document with explicit (CLI) overrides.

    Recognized sections: [run], [filter], [profiles.<name>], [agents.<name>],
    [workflows.<domain>]. Keyword overrides win over [run] values.
    """
    config = dict(config or {})
    run_section = dict(config.get("run", {}))

    def pick(key: str, default: Any) -> Any:
        if key in overrides and overrides[key] is not None:
            return overrides[key]
        return run_section.get(key, default)

    manifest = pick("manifest", None)
    run_dir = pick("run_dir", None)
    if manifest is None:
        raise ConfigError("a manifest path is required ([run].manifest or --manifest)")
    if run_dir is None:
        raise ConfigError("a run directory is required ([run].run_dir or --run-dir)")
    try:
        policy = RunPolicy(str(pick("policy", RunPolicy.STRICT.value)).replace("-", "_"))
    except ValueError:
        raise ConfigError(f"policy must be strict or best-effort") from None
    return RunConfig(
        manifest=Path(manifest),
        run_dir=Path(run_dir),
        workers=int(pick("workers", 4)),
        policy=policy,
        resume=bool(pick("resume", False)),
        mock_fixture=pick("mock", None),
        video_frames=int(pick("video_frames", DEFAULT_VIDEO_FRAMES)),
        filter_policy=build_filter_policy(config.get("filter")),
        profiles=build_profiles(config.get("profiles")),
        agent_overrides=dict(config.get("agents", {})),
        workflow_overrides=dict(config.get("workflows", {})),
    )
