"""Domain types shared across the engine, plus AND aggregation.

All types are frozen dataclasses holding tuples, so they can be shared
freely between threads. ``to_dict``/``from_dict`` give the canonical
record form used by every artifact dump; key order is fixed by the
field order of each dataclass.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import Any

from .errors import EmptyPlanError, SchemaError


class Verdict(enum.Enum):
    YES = "Yes"
    NO = "No"

    @property
    def label(self) -> int:
        return 1 if self is Verdict.YES else 0

    @classmethod
    def from_label(cls, label: int) -> Verdict:
        if label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {label!r}")
        return cls.YES if label == 1 else cls.NO

    @classmethod
    def from_bool(cls, value: bool) -> Verdict:
        return cls.YES if value else cls.NO


class Kind(enum.Enum):
    SEMANTIC = "S"
    NUMERICAL = "N"


@dataclass(frozen=True)
class KnowledgeConcept:
    id: str
    definition: str

    def __post_init__(self):
        if not self.id:
            raise SchemaError("knowledge concept id must be nonempty")
        if not self.definition.strip():
            raise SchemaError(f"knowledge concept {self.id!r} has an empty definition")

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "definition": self.definition}


@dataclass(frozen=True)
class Question:
    id: str
    stem: str

    def __post_init__(self):
        if not self.id:
            raise SchemaError("question id must be nonempty")
        if not self.stem.strip():
            raise SchemaError(f"question {self.id!r} has an empty stem")

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "stem": self.stem}


@dataclass(frozen=True)
class SubConstraint:
    index: int
    kind: Kind
    description: str

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"sub-constraint index must be positive, got {self.index}")
        if not self.description.strip():
            raise ValueError("sub-constraint description must be nonempty")

    @property
    def key(self) -> str:
        """Short key such as ``"N1"`` or ``"S2"``."""
        return f"{self.kind.value}{self.index}"

    def to_dict(self) -> dict[str, Any]:
        return {"key": self.key, "kind": self.kind.name.lower(), "index": self.index,
                "description": self.description}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SubConstraint:
        return cls(index=int(d["index"]), kind=Kind[d["kind"].upper()], description=d["description"])


@dataclass(frozen=True)
class Plan:
    concept_id: str
    sub_constraints: tuple[SubConstraint, ...]
    needs_solution: bool
    raw_text: str

    def __post_init__(self):
        if not self.sub_constraints:
            raise EmptyPlanError("a plan needs at least one sub-constraint")
        keys = [sc.key for sc in self.sub_constraints]
        if len(set(keys)) != len(keys):
            raise ValueError(f"duplicate sub-constraint keys in plan: {keys}")

    def of_kind(self, kind: Kind) -> list[SubConstraint]:
        return [sc for sc in self.sub_constraints if sc.kind is kind]

    @property
    def keys(self) -> list[str]:
        return [sc.key for sc in self.sub_constraints]

    def to_dict(self) -> dict[str, Any]:
        return {
            "concept_id": self.concept_id,
            "sub_constraints": [sc.to_dict() for sc in self.sub_constraints],
            "needs_solution": self.needs_solution,
            "raw_text": self.raw_text,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Plan:
        return cls(
            concept_id=d["concept_id"],
            sub_constraints=tuple(SubConstraint.from_dict(x) for x in d["sub_constraints"]),
            needs_solution=bool(d["needs_solution"]),
            raw_text=d["raw_text"],
        )


@dataclass(frozen=True)
class Solution:
    answer_text: str
    skipped: bool
    transcript_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if self.skipped != (self.answer_text == ""):
            raise ValueError("a solution is skipped exactly when its answer text is empty")

    @classmethod
    def skip(cls) -> Solution:
        return cls(answer_text="", skipped=True)

    def to_dict(self) -> dict[str, Any]:
        return {"answer_text": self.answer_text, "skipped": self.skipped,
                "transcript_ids": list(self.transcript_ids)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Solution:
        return cls(d["answer_text"], bool(d["skipped"]), tuple(d.get("transcript_ids", ())))


@dataclass(frozen=True)
class ArgumentBinding:
    sub_constraint: str
    name: str
    value_text: str

    def __post_init__(self):
        if not self.value_text.strip():
            raise ValueError(f"empty argument value for {self.sub_constraint}.{self.name}")

    def to_dict(self) -> dict[str, Any]:
        return {"sub_constraint": self.sub_constraint, "name": self.name, "value_text": self.value_text}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ArgumentBinding:
        return cls(d["sub_constraint"], d["name"], d["value_text"])


@dataclass(frozen=True)
class GeneratedProgram:
    """Guest program that prints one boolean verdict on standard output."""

    source: str
    target_sub_constraints: tuple[str, ...] = ()
    bindings_used: tuple[ArgumentBinding, ...] = ()

    def __post_init__(self):
        if not self.source.strip():
            raise ValueError("program source must be nonempty")


@dataclass(frozen=True)
class NumericalEvidence:
    """What the numerical judger produced and observed for one pair."""

    bindings: tuple[ArgumentBinding, ...] = ()
    program_source: str = ""
    stdout: str = ""
    stderr: str = ""
    exit_status: int | str | None = None
    attempts: int = 0
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "bindings": [b.to_dict() for b in self.bindings],
            "program_source": self.program_source,
            "stdout": self.stdout,
            "stderr": self.stderr,
            "exit_status": self.exit_status,
            "attempts": self.attempts,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> NumericalEvidence:
        return cls(
            bindings=tuple(ArgumentBinding.from_dict(b) for b in d["bindings"]),
            program_source=d["program_source"],
            stdout=d["stdout"],
            stderr=d["stderr"],
            exit_status=d["exit_status"],
            attempts=d["attempts"],
            error=d["error"],
        )


@dataclass(frozen=True)
class AgentJudgment:
    sub_constraint: str
    verdict: Verdict
    rationale: str
    evidence: NumericalEvidence | None = None
    transcript_ids: tuple[str, ...] = ()

    def __post_init__(self):
        numerical = self.sub_constraint.startswith(Kind.NUMERICAL.value)
        if numerical != (self.evidence is not None):
            raise ValueError(f"{self.sub_constraint}: evidence is required for, and only for, numerical judgments")

    def to_dict(self) -> dict[str, Any]:
        return {
            "sub_constraint": self.sub_constraint,
            "verdict": self.verdict.value,
            "rationale": self.rationale,
            "evidence": None if self.evidence is None else self.evidence.to_dict(),
            "transcript_ids": list(self.transcript_ids),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> AgentJudgment:
        ev = d.get("evidence")
        return cls(
            sub_constraint=d["sub_constraint"],
            verdict=Verdict(d["verdict"]),
            rationale=d["rationale"],
            evidence=None if ev is None else NumericalEvidence.from_dict(ev),
            transcript_ids=tuple(d.get("transcript_ids", ())),
        )


@dataclass(frozen=True)
class FinalJudgment:
    verdict: Verdict
    sub_judgments: tuple[AgentJudgment, ...]
    failure_policy_applied: bool = False
    label: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "label", self.verdict.label)

    @classmethod
    def aggregate(cls, plan: Plan, judgments: Iterable[AgentJudgment],
                  failure_policy_applied: bool = False) -> FinalJudgment:
        by_key = {j.sub_constraint: j for j in judgments}
        if set(by_key) != set(plan.keys):
            raise ValueError(f"judgments {sorted(by_key)} do not cover plan {plan.keys}")
        ordered = tuple(by_key[k] for k in plan.keys)
        return cls(combine_judgments(ordered), ordered, failure_policy_applied)

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "label": self.label,
            "sub_judgments": [j.to_dict() for j in self.sub_judgments],
            "failure_policy_applied": self.failure_policy_applied,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> FinalJudgment:
        return cls(
            verdict=Verdict(d["verdict"]),
            sub_judgments=tuple(AgentJudgment.from_dict(j) for j in d["sub_judgments"]),
            failure_policy_applied=bool(d["failure_policy_applied"]),
        )


def combine_judgments(judgments: Iterable[AgentJudgment]) -> Verdict:
    """AND over sub-constraint verdicts; an empty list means the planner failed."""
    judgments = list(judgments)
    if not judgments:
        raise EmptyPlanError("cannot combine an empty list of judgments")
    if all(j.verdict is Verdict.YES for j in judgments):
        return Verdict.YES
    return Verdict.NO


def verdict_to_label(verdict: Verdict) -> int:
    return verdict.label


def label_to_verdict(label: int) -> Verdict:
    return Verdict.from_label(label)
