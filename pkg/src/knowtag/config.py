"""YAML configuration with ``KNOWTAG_`` environment overrides.

Nested keys are addressed with double underscores, so
``KNOWTAG_SANDBOX__TIMEOUT_SECS=5`` overrides ``sandbox.timeout_secs`` and
``KNOWTAG_GATEWAY__PROFILES__PLANNER__TEMPERATURE=0.2`` overrides one
profile field. Override values are parsed as YAML scalars.
"""

from __future__ import annotations

import os
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigError
from .gateway import ModelProfile, RetryPolicy, Role, default_profiles
from .grammar import DEFAULT_SOLUTION_KEYWORDS
from .model import Verdict
from .pipeline import PipelineConfig
from .sandbox import SandboxPolicy, parse_interpreter

ENV_PREFIX = "KNOWTAG_"
CONFIG_ENV = "KNOWTAG_CONFIG"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProfileSection(_Strict):
    model_name: Optional[str] = None
    temperature: Optional[float] = Field(None, ge=0, le=2)
    max_tokens: Optional[int] = Field(None, gt=0)
    endpoint: Optional[str] = None
    credential_ref: Optional[str] = None


class ProfilesSection(_Strict):
    planner: ProfileSection = ProfileSection()
    solver: ProfileSection = ProfileSection()
    semantic_judger: ProfileSection = ProfileSection()
    numerical_judger: ProfileSection = ProfileSection()


class GatewaySection(_Strict):
    profiles: ProfilesSection = ProfilesSection()
    max_attempts: int = Field(3, ge=1)
    initial_backoff_secs: float = Field(1.0, ge=0)
    max_total_backoff_secs: float = Field(30.0, ge=0)
    max_in_flight: int = Field(8, ge=1)
    request_timeout_secs: float = Field(120.0, gt=0)


class SandboxSection(_Strict):
    interpreter: Union[str, list[str], None] = None
    timeout_secs: float = Field(10.0, gt=0)
    max_output_bytes: int = Field(64 * 1024, gt=0)
    max_concurrency: int = Field(4, ge=1)
    network_allowed: bool = False
    program_filename: str = "program"
    isolation_prefix: list[str] = []


class PromptsSection(_Strict):
    templates_dir: Optional[str] = None
    few_shot_pool: Optional[str] = None
    n_shots: int = Field(2, ge=0)
    seed: int = 0


class PipelineSection(_Strict):
    retry_on_numeric_failure: bool = True
    retry_on_parse_failure: bool = True
    failure_verdict: str = Field("No", pattern="^(Yes|No)$")
    parallelism: int = Field(1, ge=1)
    cache_plans: bool = False
    solution_keywords: list[str] = list(DEFAULT_SOLUTION_KEYWORDS)


class MockSection(_Strict):
    script: Optional[str] = None


class Settings(_Strict):
    gateway: GatewaySection = GatewaySection()
    sandbox: SandboxSection = SandboxSection()
    prompts: PromptsSection = PromptsSection()
    pipeline: PipelineSection = PipelineSection()
    mock: MockSection = MockSection()
    base_dir: Optional[str] = None  # directory relative paths resolve against; set by the loader

    def resolve(self, value: str | None) -> Path | None:
        if value is None:
            return None
        path = Path(value).expanduser()
        if not path.is_absolute() and self.base_dir:
            path = Path(self.base_dir) / path
        return path

    def profiles(self) -> dict[Role, ModelProfile]:
        out = {}
        for role, base in default_profiles().items():
            section: ProfileSection = getattr(self.gateway.profiles, role.value)
            overrides = {k: v for k, v in section.model_dump().items() if v is not None}
            fields = base.to_dict()
            fields.update(overrides)
            out[role] = ModelProfile.from_dict(fields)
        return out

    def retry_policy(self) -> RetryPolicy:
        g = self.gateway
        return RetryPolicy(g.max_attempts, g.initial_backoff_secs, g.max_total_backoff_secs)

    def sandbox_policy(self) -> SandboxPolicy:
        s = self.sandbox
        return SandboxPolicy(
            interpreter=parse_interpreter(s.interpreter) if s.interpreter else (),
            wall_timeout=s.timeout_secs,
            max_output_bytes=s.max_output_bytes,
            network_allowed=s.network_allowed,
            program_filename=s.program_filename,
            isolation_prefix=tuple(s.isolation_prefix),
        )

    def pipeline_config(self) -> PipelineConfig:
        p = self.pipeline
        return PipelineConfig(
            retry_on_numeric_failure=p.retry_on_numeric_failure,
            retry_on_parse_failure=p.retry_on_parse_failure,
            failure_verdict=Verdict(p.failure_verdict),
            parallelism=p.parallelism,
            cache_plans=p.cache_plans,
        )


def _set_path(tree: dict[str, Any], path: list[str], value: Any) -> None:
    node = tree
    for part in path[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = node[part] = {}
        node = child
    node[path[-1]] = value


def env_overrides(environ: Mapping[str, str]) -> dict[str, Any]:
    tree: dict[str, Any] = {}
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX) or name == CONFIG_ENV:
            continue
        path = [p.lower() for p in name[len(ENV_PREFIX):].split("__")]
        if len(path) < 2 or not all(path):
            raise ConfigError(f"cannot map environment variable {name} to a config key "
                              "(use KNOWTAG_<SECTION>__<KEY>)")
        try:
            value = yaml.safe_load(raw) if raw.strip() else raw
        except yaml.YAMLError:
            value = raw
        _set_path(tree, path, value)
    return tree


def _merge(base: dict[str, Any], over: Mapping[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_settings(path: str | os.PathLike | None = None, environ: Mapping[str, str] | None = None) -> Settings:
    """Read ``path`` (or ``$KNOWTAG_CONFIG``), apply env overrides, validate.

    With no path at all the defaults are used.
    """
    environ = os.environ if environ is None else environ
    if path is None:
        path = environ.get(CONFIG_ENV) or None
    data: dict[str, Any] = {}
    base_dir = None
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {p}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config file {p}: {exc}") from exc
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {p} is not valid YAML: {exc}") from exc
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError(f"config file {p} must contain a mapping at top level")
        data = loaded or {}
        if "base_dir" in data:
            raise ConfigError(f"config file {p}: unknown key 'base_dir'")
        base_dir = str(p.resolve().parent)
    data = _merge(data, env_overrides(environ))
    try:
        settings = Settings.model_validate(data)
    except ValidationError as exc:
        problems = "; ".join(f"{'.'.join(str(x) for x in e['loc'])}: {e['msg']}" for e in exc.errors())
        raise ConfigError(f"invalid configuration: {problems}") from exc
    settings.base_dir = base_dir
    return settings
