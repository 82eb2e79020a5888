"""The four LLM-backed agents.

Every agent call renders one template, sends one chat request through the
gateway and parses the reply with a grammar from :mod:`knowtag.grammar`.
Methods accept an optional ``trace`` list; the transcript key of each
request made is appended to it.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

from .gateway import Gateway, Role
from .grammar import (
    DEFAULT_SOLUTION_KEYWORDS,
    extract_program,
    format_argument_lines,
    format_plan,
    needs_solution,
    parse_argument_lines,
    parse_judgment_token,
    parse_plan_text,
)
from .model import (
    AgentJudgment,
    ArgumentBinding,
    GeneratedProgram,
    Kind,
    KnowledgeConcept,
    Plan,
    Question,
    Solution,
    SubConstraint,
)
from .prompts import FewShotExample, TemplateName, format_examples, load_templates, render, sample_few_shot

NO_ANSWER = "(not computed)"


@dataclass
class Agents:
    gateway: Gateway
    templates: dict = field(default_factory=load_templates)
    pool: Sequence[FewShotExample] = ()
    n_shots: int = 2
    seed: int = 0
    solution_keywords: Sequence[str] = DEFAULT_SOLUTION_KEYWORDS

    def _ask(self, name: TemplateName, bindings: dict[str, str], trace: list[str] | None, **context: str) -> str:
        prompt = render(self.templates[name], bindings)
        response, key = self.gateway.ask(name.role, prompt, step=name.value, **context)
        if trace is not None:
            trace.append(key)
        return response.text

    def demos(self, concept_id: str, question_id: str, role: Role) -> str:
        """Few-shot block for a judger prompt; empty when no pool is configured."""
        if not self.pool:
            return ""
        examples = sample_few_shot(self.pool, concept_id, self.n_shots, self.seed, exclude_question_id=question_id)
        return format_examples(examples, role)

    def plan(self, concept: KnowledgeConcept, trace: list[str] | None = None, question_id: str = "") -> Plan:
        raw = self._ask(TemplateName.PLANNER, {"knowledge": concept.definition}, trace,
                        concept_id=concept.id, question_id=question_id)
        scs = parse_plan_text(raw)
        return Plan(concept.id, tuple(scs), needs_solution(scs, self.solution_keywords), raw)

    def solve(self, question: Question, plan: Plan, trace: list[str] | None = None) -> Solution:
        if not plan.needs_solution:
            return Solution.skip()
        local: list[str] = []
        answer = self._ask(TemplateName.SOLVER, {"question": question.stem}, local,
                           concept_id=plan.concept_id, question_id=question.id)
        if trace is not None:
            trace.extend(local)
        return Solution(answer_text=answer.strip() or NO_ANSWER, skipped=False, transcript_ids=tuple(local))

    def judge_semantic(self, concept: KnowledgeConcept, question: Question, sc: SubConstraint,
                       demos: str | None = None, trace: list[str] | None = None) -> AgentJudgment:
        if sc.kind is not Kind.SEMANTIC:
            raise ValueError(f"{sc.key} is not a semantic sub-constraint")
        if demos is None:
            demos = self.demos(concept.id, question.id, Role.SEMANTIC_JUDGER)
        local: list[str] = []
        text = self._ask(
            TemplateName.SEMANTIC_JUDGER,
            {"examples": demos, "knowledge": concept.definition, "sub_constraint": sc.description,
             "question": question.stem},
            local, concept_id=concept.id, question_id=question.id, sub_constraint=sc.key,
        )
        if trace is not None:
            trace.extend(local)
        return AgentJudgment(sc.key, parse_judgment_token(text), text.strip(), None, tuple(local))

    def extract_arguments(self, concept: KnowledgeConcept, question: Question, solution: Solution,
                          numeric_scs: Sequence[SubConstraint], demos: str | None = None,
                          trace: list[str] | None = None) -> list[ArgumentBinding]:
        if not numeric_scs:
            raise ValueError("extract_arguments needs at least one numerical sub-constraint")
        if demos is None:
            demos = self.demos(concept.id, question.id, Role.NUMERICAL_JUDGER)
        text = self._ask(
            TemplateName.NUMERICAL_ARGUMENTS,
            {"examples": demos, "knowledge": concept.definition, "question": question.stem,
             "answer": solution.answer_text or NO_ANSWER, "sub_constraints": format_plan(numeric_scs)},
            trace, concept_id=concept.id, question_id=question.id,
        )
        return parse_argument_lines(text, [sc.key for sc in numeric_scs])

    def generate_program(self, concept: KnowledgeConcept, question: Question, solution: Solution,
                         bindings: Sequence[ArgumentBinding], numeric_scs: Sequence[SubConstraint],
                         feedback: str = "", trace: list[str] | None = None) -> GeneratedProgram:
        keys = {sc.key for sc in numeric_scs}
        uncovered = keys - {b.sub_constraint for b in bindings}
        if uncovered:
            raise ValueError(f"no bindings for {sorted(uncovered)}")
        text = self._ask(
            TemplateName.NUMERICAL_PROGRAM,
            {"knowledge": concept.definition, "question": question.stem,
             "answer": solution.answer_text or NO_ANSWER, "arguments": format_argument_lines(bindings),
             "sub_constraints": format_plan(numeric_scs), "feedback": feedback},
            trace, concept_id=concept.id, question_id=question.id,
        )
        return GeneratedProgram(extract_program(text), tuple(sc.key for sc in numeric_scs), tuple(bindings))
