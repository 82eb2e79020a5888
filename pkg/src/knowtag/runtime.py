"""Wire settings and a run mode into a ready pipeline."""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass

from .agents import Agents
from .config import Settings
from .errors import ConfigError
from .gateway import Gateway, HttpBackend, MockBackend, ReplayBackend, TranscriptStore
from .pipeline import Pipeline
from .prompts import load_few_shot_pool, load_templates
from .sandbox import Sandbox


class Mode(enum.Enum):
    LIVE = "live"
    REPLAY = "replay"
    MOCK = "mock"


@dataclass
class Engine:
    gateway: Gateway
    agents: Agents
    sandbox: Sandbox
    pipeline: Pipeline
    store: TranscriptStore | None


def build_engine(settings: Settings, mode: Mode, store_path: str | os.PathLike | None = None,
                 mock_script: str | os.PathLike | None = None) -> Engine:
    """Live and mock runs record into ``store_path`` when given; replay runs read from it."""
    store = TranscriptStore(store_path) if store_path is not None else None
    if mode is Mode.REPLAY:
        if store is None:
            raise ConfigError("replay mode needs a transcript store (--store)")
        backend = ReplayBackend(store)
    elif mode is Mode.MOCK:
        script = mock_script or settings.resolve(settings.mock.script)
        if script is None:
            raise ConfigError("mock mode needs a mock script (--mock-script or mock.script)")
        backend = MockBackend.from_script(script)
    else:
        backend = HttpBackend(settings.retry_policy(), settings.gateway.max_in_flight,
                              timeout=settings.gateway.request_timeout_secs)
    gateway = Gateway(backend, settings.profiles(), store)

    templates_dir = settings.resolve(settings.prompts.templates_dir)
    pool_path = settings.resolve(settings.prompts.few_shot_pool)
    agents = Agents(
        gateway,
        templates=load_templates(templates_dir),
        pool=load_few_shot_pool(pool_path) if pool_path is not None else (),
        n_shots=settings.prompts.n_shots,
        seed=settings.prompts.seed,
        solution_keywords=tuple(settings.pipeline.solution_keywords),
    )
    sandbox = Sandbox(settings.sandbox_policy(), settings.sandbox.max_concurrency)
    pipeline = Pipeline(agents, sandbox, settings.pipeline_config())
    return Engine(gateway, agents, sandbox, pipeline, store)
