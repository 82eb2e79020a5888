"""Prompt templates and few-shot demonstrations.

Templates are plain UTF-8 files, one per prompt, with ``{{name}}``
placeholders and nothing else: no nesting, no logic. The shipped set
lives in ``knowtag/templates``; point ``prompts.templates_dir`` at a copy
to adjust the wording for a particular model.
"""

from __future__ import annotations

import enum
import json
import random
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .corpus import iter_jsonl
from .errors import ConfigError, InsufficientExamplesError, MissingPlaceholderError, SchemaError
from .gateway import Role
from .grammar import parse_judgment_token
from .model import Verdict

PLACEHOLDER = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")


class TemplateName(enum.Enum):
    """The five prompts; the numerical judger needs two."""

    PLANNER = "planner"
    SOLVER = "solver"
    SEMANTIC_JUDGER = "semantic_judger"
    NUMERICAL_ARGUMENTS = "numerical_arguments"
    NUMERICAL_PROGRAM = "numerical_program"

    @property
    def role(self) -> Role:
        if self in (TemplateName.NUMERICAL_ARGUMENTS, TemplateName.NUMERICAL_PROGRAM):
            return Role.NUMERICAL_JUDGER
        return Role(self.value)


@dataclass(frozen=True)
class PromptTemplate:
    name: TemplateName
    body: str
    required_placeholders: frozenset[str] = frozenset()

    def __post_init__(self):
        found = placeholders(self.body)
        if not self.required_placeholders:
            object.__setattr__(self, "required_placeholders", frozenset(found))
        elif not self.required_placeholders <= found:
            missing = sorted(self.required_placeholders - found)
            raise ConfigError(f"template {self.name.value} does not use required placeholders {missing}")

    @property
    def role(self) -> Role:
        return self.name.role


def placeholders(body: str) -> set[str]:
    return set(PLACEHOLDER.findall(body))


def render(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    for name in sorted(template.required_placeholders):
        if name not in bindings:
            raise MissingPlaceholderError(name)

    def sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in bindings:
            raise MissingPlaceholderError(name)
        return str(bindings[name])

    return PLACEHOLDER.sub(sub, template.body)


def load_templates(directory: str | Path | None = None) -> dict[TemplateName, PromptTemplate]:
    """Read ``<name>.txt`` for every template, from ``directory`` or the packaged defaults."""
    out = {}
    for name in TemplateName:
        filename = f"{name.value}.txt"
        if directory is None:
            body = resources.files("knowtag").joinpath("templates", filename).read_text(encoding="utf-8")
        else:
            path = Path(directory) / filename
            try:
                body = path.read_text(encoding="utf-8")
            except FileNotFoundError as exc:
                raise ConfigError(f"template file missing: {path}") from exc
        out[name] = PromptTemplate(name, body)
    return out


@dataclass(frozen=True)
class FewShotExample:
    concept_id: str
    question_id: str
    knowledge_text: str
    question_text: str
    label: int
    rationale: str | None = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise SchemaError(f"few-shot example {self.question_id}: label must be 0 or 1")
        if self.rationale is not None:
            tail = self.rationale.rstrip().rstrip(".").rstrip()
            if not re.search(r"<\s*(yes|no)\s*>$", tail, re.IGNORECASE):
                raise SchemaError(f"few-shot example {self.question_id}: rationale must end in <Yes> or <No>")
            if parse_judgment_token(tail).label != self.label:
                raise SchemaError(f"few-shot example {self.question_id}: rationale token disagrees with label")

    @property
    def judgment(self) -> str:
        if self.rationale is None:
            return f"<{Verdict.from_label(self.label).value}>"
        return self.rationale.rstrip().rstrip(".").rstrip()


def load_few_shot_pool(path: str | Path) -> list[FewShotExample]:
    """Read a pool in corpus format (plus optional ``rationale``)."""
    pool = []
    for lineno, rec in iter_jsonl(path):
        try:
            pool.append(FewShotExample(
                concept_id=str(rec["knowledge_id"]),
                question_id=str(rec["question_id"]),
                knowledge_text=rec["knowledge_text"],
                question_text=rec["question_text"],
                label=rec["label"],
                rationale=rec.get("rationale"),
            ))
        except KeyError as exc:
            raise SchemaError(f"{path}:{lineno}: missing field {exc}") from exc
    return pool


def sample_few_shot(pool: Sequence[FewShotExample], concept_id: str, n: int = 2, seed: int = 0,
                    exclude_question_id: str | None = None) -> list[FewShotExample]:
    """Draw ``n`` distinct demonstrations for ``concept_id`` uniformly without replacement.

    The question under evaluation (``exclude_question_id``) is never drawn.
    """
    candidates = [ex for ex in pool
                  if ex.concept_id == concept_id and ex.question_id != exclude_question_id]
    if len(candidates) < n:
        raise InsufficientExamplesError(
            f"concept {concept_id!r} has {len(candidates)} eligible demonstrations, {n} needed")
    return random.Random(seed).sample(candidates, n)


_JUDGER_ROLES = {Role.SEMANTIC_JUDGER, Role.NUMERICAL_JUDGER}


def format_examples(examples: Iterable[FewShotExample], role: Role) -> str:
    blocks = []
    for i, ex in enumerate(examples, 1):
        lines = [f"[Example {i}]", f"Knowledge: {ex.knowledge_text}", f"Question: {ex.question_text}"]
        if role in _JUDGER_ROLES:
            lines.append(f"Judgment: {ex.judgment}")
        blocks.append("\n".join(lines))
    if not blocks:
        return ""
    return "\n" + "\n".join(blocks)


def dump_few_shot_pool(pool: Iterable[FewShotExample]) -> str:
    lines = []
    for ex in pool:
        rec = {"knowledge_id": ex.concept_id, "knowledge_text": ex.knowledge_text,
               "question_id": ex.question_id, "question_text": ex.question_text, "label": ex.label}
        if ex.rationale is not None:
            rec["rationale"] = ex.rationale
        lines.append(json.dumps(rec, ensure_ascii=False))
    return "".join(line + "\n" for line in lines)
