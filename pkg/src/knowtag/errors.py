"""Exception hierarchy.

Every error raised by the engine derives from :class:`KnowtagError`. The
intermediate classes group errors by the CLI exit code they map to.
"""

from __future__ import annotations


class KnowtagError(Exception):
    """Base class for all engine errors."""


# -- configuration / input ---------------------------------------------------


class ConfigError(KnowtagError):
    pass


class BatchConfigError(ConfigError):
    pass


class SchemaError(ConfigError):
    """A corpus or pool record is malformed."""


class DuplicatePairError(SchemaError):
    pass


class MissingPlaceholderError(KnowtagError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"missing placeholder binding: {self.name!r}"


class InsufficientExamplesError(KnowtagError):
    pass


# -- gateway -----------------------------------------------------------------


class GatewayError(KnowtagError):
    pass


class TransportError(GatewayError):
    pass


class RateLimitError(GatewayError):
    pass


class ReplayMissError(GatewayError):
    pass


class MockMissError(GatewayError):
    pass


class CorruptArchiveError(KnowtagError):
    pass


# -- parsing of agent output -------------------------------------------------


class AgentParseError(KnowtagError):
    """LLM output did not follow the expected grammar."""


class PlanParseError(AgentParseError):
    pass


class DuplicateIndexError(PlanParseError):
    pass


class EmptyPlanError(AgentParseError):
    pass


class JudgmentParseError(AgentParseError):
    pass


class ArgumentParseError(AgentParseError):
    pass


class EmptyProgramError(AgentParseError):
    pass


class BooleanParseError(AgentParseError):
    pass


# -- sandbox -----------------------------------------------------------------


class SandboxError(KnowtagError):
    pass


class InterpreterMissingError(SandboxError):
    pass


class SandboxSpawnError(SandboxError):
    pass


# -- evaluation --------------------------------------------------------------


class EvaluationError(KnowtagError):
    pass


class EmptyCountsError(EvaluationError):
    pass


class UnmatchedRecordError(EvaluationError):
    pass


class UnsupportedFormatError(EvaluationError):
    pass
