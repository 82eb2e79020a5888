"""End-to-end tagging of (knowledge concept, question) pairs.

plan -> optional solve -> one semantic judgment per S-constraint -> one
extract/generate/execute round covering all N-constraints -> AND.

Failure handling:

* an unparseable plan is re-asked once, then recorded as an error;
* an unparseable semantic judgment is re-asked once;
* a failed numerical round (bad arguments, no code, crash, timeout, no
  boolean) is retried once, with the failure text fed back to code
  generation, when ``retry_on_numeric_failure`` is set;
* judging failures that survive their retry resolve to
  ``failure_verdict`` (No by default) and set ``failure_policy_applied``;
* gateway and sandbox setup errors are recorded in ``error_trace``.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any

from .agents import Agents
from .errors import (
    AgentParseError,
    ArgumentParseError,
    BatchConfigError,
    JudgmentParseError,
    KnowtagError,
    PlanParseError,
    SchemaError,
)
from .gateway import Role
from .model import (
    AgentJudgment,
    ArgumentBinding,
    FinalJudgment,
    Kind,
    KnowledgeConcept,
    NumericalEvidence,
    Plan,
    Question,
    Solution,
    SubConstraint,
    Verdict,
)
from .sandbox import Sandbox, parse_boolean_output

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    retry_on_numeric_failure: bool = True
    retry_on_parse_failure: bool = True
    failure_verdict: Verdict = Verdict.NO
    parallelism: int = 1
    cache_plans: bool = False

    def validate(self) -> None:
        if self.parallelism < 1:
            raise BatchConfigError(f"parallelism must be at least 1, got {self.parallelism}")


@dataclass(frozen=True)
class TaggingRecord:
    concept_id: str
    question_id: str
    final: FinalJudgment | None
    plan: Plan | None
    solution: Solution | None
    wall_time: float | None
    error_trace: dict[str, str] | None = None

    @property
    def predicted_label(self) -> int | None:
        return None if self.final is None else self.final.label

    def to_dict(self, timings: bool = True) -> dict[str, Any]:
        return {
            "concept_id": self.concept_id,
            "question_id": self.question_id,
            "final": None if self.final is None else self.final.to_dict(),
            "plan": None if self.plan is None else self.plan.to_dict(),
            "solution": None if self.solution is None else self.solution.to_dict(),
            "wall_time": round(self.wall_time, 6) if timings and self.wall_time is not None else None,
            "error_trace": self.error_trace,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TaggingRecord:
        return cls(
            concept_id=d["concept_id"],
            question_id=d["question_id"],
            final=None if d.get("final") is None else FinalJudgment.from_dict(d["final"]),
            plan=None if d.get("plan") is None else Plan.from_dict(d["plan"]),
            solution=None if d.get("solution") is None else Solution.from_dict(d["solution"]),
            wall_time=d.get("wall_time"),
            error_trace=d.get("error_trace"),
        )


def dump_records(records: Iterable[TaggingRecord], timings: bool = True) -> str:
    return "".join(json.dumps(r.to_dict(timings), ensure_ascii=False) + "\n" for r in records)


def load_records(path: str | os.PathLike) -> list[TaggingRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(TaggingRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise SchemaError(f"{path}:{lineno}: bad tagging record ({exc})") from exc
    return out


def _trace(stage: str, exc: BaseException) -> dict[str, str]:
    return {"stage": stage, "type": type(exc).__name__, "message": str(exc)}


class Pipeline:
    def __init__(self, agents: Agents, sandbox: Sandbox, config: PipelineConfig = PipelineConfig()):
        config.validate()
        self.agents = agents
        self.sandbox = sandbox
        self.config = config
        self._plan_cache: dict[str, Plan] = {}
        self._plan_lock = threading.Lock()

    # -- stages --------------------------------------------------------------

    def _plan(self, concept: KnowledgeConcept, question: Question) -> Plan:
        if self.config.cache_plans:
            with self._plan_lock:
                cached = self._plan_cache.get(concept.id)
            if cached is not None:
                return cached
        attempts = 2 if self.config.retry_on_parse_failure else 1
        for attempt in range(1, attempts + 1):
            try:
                plan = self.agents.plan(concept, question_id=question.id)
                break
            except PlanParseError:
                if attempt == attempts:
                    raise
                log.info("re-asking planner for %s/%s after unparseable plan", concept.id, question.id)
        if self.config.cache_plans:
            with self._plan_lock:
                plan = self._plan_cache.setdefault(concept.id, plan)
        return plan

    def _semantic(self, concept: KnowledgeConcept, question: Question, sc: SubConstraint) -> tuple[AgentJudgment, bool]:
        demos = self.agents.demos(concept.id, question.id, Role.SEMANTIC_JUDGER)
        trace: list[str] = []
        attempts = 2 if self.config.retry_on_parse_failure else 1
        last: JudgmentParseError | None = None
        for _ in range(attempts):
            try:
                judgment = self.agents.judge_semantic(concept, question, sc, demos, trace)
                return AgentJudgment(sc.key, judgment.verdict, judgment.rationale, None, tuple(trace)), False
            except JudgmentParseError as exc:
                last = exc
        rationale = f"semantic judgment unparseable after {attempts} attempt(s): {last}; failure policy applied"
        return AgentJudgment(sc.key, self.config.failure_verdict, rationale, None, tuple(trace)), True

    def _numerical(self, concept: KnowledgeConcept, question: Question, solution: Solution,
                   numeric: Sequence[SubConstraint]) -> tuple[list[AgentJudgment], bool]:
        demos = self.agents.demos(concept.id, question.id, Role.NUMERICAL_JUDGER)
        trace: list[str] = []
        retries_left = 1 if self.config.retry_on_numeric_failure else 0
        bindings: list[ArgumentBinding] = []
        source, stdout, stderr, status = "", "", "", None
        attempts = 0
        error: AgentParseError | None = None
        value: bool | None = None

        while True:
            try:
                bindings = self.agents.extract_arguments(concept, question, solution, numeric, demos, trace)
                break
            except ArgumentParseError as exc:
                error = exc
                if retries_left == 0:
                    break
                retries_left -= 1

        feedback = ""
        while bindings:
            attempts += 1
            try:
                program = self.agents.generate_program(concept, question, solution, bindings, numeric,
                                                       feedback, trace)
                source = program.source
                result = self.sandbox.execute(program)
                stdout, stderr, status = result.stdout, result.stderr, result.exit_status
                value = parse_boolean_output(result)
                error = None
                break
            except AgentParseError as exc:
                error = exc
                if retries_left == 0:
                    break
                retries_left -= 1
                feedback = (
                    "The previous script failed: " + str(exc)
                    + ("\nIts error output was:\n" + stderr.strip() if stderr.strip() else "")
                    + "\nWrite a corrected script."
                )
                stdout, stderr, status = "", "", None

        evidence = NumericalEvidence(
            bindings=tuple(bindings), program_source=source, stdout=stdout, stderr=stderr,
            exit_status=status, attempts=attempts, error=None if error is None else f"{type(error).__name__}: {error}",
        )
        if value is not None:
            verdict = Verdict.from_bool(value)
            rationale = f"The output returned by the program is {value}. Thus, <{verdict.value}>."
            failed = False
        else:
            verdict = self.config.failure_verdict
            rationale = f"numerical judging failed ({evidence.error}); failure policy applied"
            failed = True
        return [AgentJudgment(sc.key, verdict, rationale, evidence, tuple(trace)) for sc in numeric], failed

    # -- public --------------------------------------------------------------

    def tag(self, concept: KnowledgeConcept, question: Question) -> TaggingRecord:
        start = time.perf_counter()
        plan: Plan | None = None
        solution: Solution | None = None
        stage = "plan"
        try:
            plan = self._plan(concept, question)
            stage = "solve"
            solution = self.agents.solve(question, plan)
            judgments: list[AgentJudgment] = []
            failed = False
            stage = "semantic"
            for sc in plan.of_kind(Kind.SEMANTIC):
                judgment, f = self._semantic(concept, question, sc)
                judgments.append(judgment)
                failed |= f
            numeric = plan.of_kind(Kind.NUMERICAL)
            if numeric:
                stage = "numerical"
                js, f = self._numerical(concept, question, solution, numeric)
                judgments.extend(js)
                failed |= f
            final = FinalJudgment.aggregate(plan, judgments, failed)
        except KnowtagError as exc:
            log.warning("%s/%s failed at %s: %s", concept.id, question.id, stage, exc)
            return TaggingRecord(concept.id, question.id, None, plan, solution,
                                 time.perf_counter() - start, _trace(stage, exc))
        except Exception as exc:  # isolate unexpected failures to this pair
            log.exception("%s/%s crashed at %s", concept.id, question.id, stage)
            return TaggingRecord(concept.id, question.id, None, plan, solution,
                                 time.perf_counter() - start, _trace(stage, exc))
        return TaggingRecord(concept.id, question.id, final, plan, solution, time.perf_counter() - start)

    def tag_batch(self, pairs: Sequence[tuple[KnowledgeConcept, Question]]) -> list[TaggingRecord]:
        """Tag all pairs with at most ``parallelism`` in flight; output order follows input order."""
        self.config.validate()
        if self.config.parallelism == 1:
            return [self.tag(c, q) for c, q in pairs]
        with ThreadPoolExecutor(max_workers=self.config.parallelism) as pool:
            return list(pool.map(lambda pair: self.tag(*pair), pairs))
