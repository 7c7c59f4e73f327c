"""Declarative run configuration: one JSON file, environment variables for
secrets, command-line flags overriding file values. Unknown keys are
rejected so typos fail loudly."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .agent_core import RunConfig
from .errors import ConfigError
from .model_client import ModelBackend, RemoteBackend, ScriptedBackend
from .webenv import FetchPolicy


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "scripted"            # "remote" | "scripted"
    endpoint: str = ""
    model_name: str = ""
    api_key_env: str = "WEBTRAVERSE_API_KEY"
    script_path: str = ""

    def build(self) -> ModelBackend:
        if self.kind == "remote":
            if not self.endpoint or not self.model_name:
                raise ConfigError("remote backend needs endpoint and model_name")
            return RemoteBackend(
                endpoint=self.endpoint, model_name=self.model_name,
                api_key=os.environ.get(self.api_key_env),
            )
        if self.kind == "scripted":
            if not self.script_path:
                raise ConfigError("scripted backend needs script_path")
            return ScriptedBackend.from_jsonl(self.script_path)
        raise ConfigError(f"unknown backend kind {self.kind!r}")


@dataclass(frozen=True)
class FetchConfig:
    timeout_s: float = 20.0
    max_redirects: int = 5
    user_agent: str = "webtraverse/0.1"
    respect_robots: bool = True
    scope: str = "same_host"

    def policy(self) -> FetchPolicy:
        return FetchPolicy(
            timeout_s=self.timeout_s, max_redirects=self.max_redirects,
            user_agent=self.user_agent, respect_robots=self.respect_robots,
            scope_mode=self.scope,
        )


@dataclass(frozen=True)
class RetrieverConfig:
    kind: str = "fixture"             # "fixture" | "http"
    path: str = ""
    endpoint: str = ""
    api_key_env: str = "WEBTRAVERSE_SEARCH_KEY"
    k: int = 10

    def build(self):
        from .rag_bridge import FixtureRetriever, HttpRetriever

        if self.kind == "fixture":
            if not self.path:
                raise ConfigError("fixture retriever needs path")
            return FixtureRetriever.from_json(self.path)
        if self.kind == "http":
            if not self.endpoint:
                raise ConfigError("http retriever needs endpoint")
            return HttpRetriever(self.endpoint, api_key=os.environ.get(self.api_key_env))
        raise ConfigError(f"unknown retriever kind {self.kind!r}")


@dataclass(frozen=True)
class RunSettings:
    max_steps: int = 15
    policy: str = "webwalker"
    frontier_mode: str = "global_frontier"
    markdown_cap: int = 8000
    button_cap: int = 50
    count_root: bool = False
    explorer_reasks: int = 2
    critic_reasks: int = 1

    def run_config(self, **overrides) -> RunConfig:
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig(**values)


@dataclass(frozen=True)
class Config:
    agent_backend: BackendConfig = field(default_factory=BackendConfig)
    judge_backend: BackendConfig = field(default_factory=BackendConfig)
    generator_backend: BackendConfig = field(default_factory=BackendConfig)
    run: RunSettings = field(default_factory=RunSettings)
    fetch: FetchConfig = field(default_factory=FetchConfig)
    retriever: RetrieverConfig = field(default_factory=RetrieverConfig)
    cache_dir: str | None = None


_SECTIONS = {
    "agent_backend": BackendConfig,
    "judge_backend": BackendConfig,
    "generator_backend": BackendConfig,
    "run": RunSettings,
    "fetch": FetchConfig,
    "retriever": RetrieverConfig,
}


def _build_section(cls, mapping: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    try:
        return cls(**mapping)
    except TypeError as exc:
        raise ConfigError(f"bad {where} section: {exc}") from exc


def load_config(path: str | Path) -> Config:
    file = Path(path)
    if not file.exists():
        raise ConfigError(f"config file not found: {file}")
    try:
        record = json.loads(file.read_text("utf-8"))
    except ValueError as exc:
        raise ConfigError(f"config file {file} is not valid JSON: {exc}") from exc
    if not isinstance(record, dict):
        raise ConfigError(f"config file {file} must hold a JSON object")

    known_top = set(_SECTIONS) | {"cache_dir"}
    unknown = set(record) - known_top
    if unknown:
        raise ConfigError(f"unknown top-level config key(s): {sorted(unknown)}")

    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in record:
            section = record[name]
            if not isinstance(section, dict):
                raise ConfigError(f"config section {name} must be an object")
            kwargs[name] = _build_section(cls, section, name)
    if "cache_dir" in record:
        kwargs["cache_dir"] = record["cache_dir"]
    return Config(**kwargs)
