"""Line grammars for the text the agents get back from the LLM.

Plans look like::

    - N1: Verify only two numbers in calculations are between tens less than 100.
    - S1: Verify the question is about comparing the calculation result ...

judgments end in ``<Yes>``/``<No>``, argument lists are ``N1: name = value``
lines, and programs arrive in a fenced code block.
"""

from __future__ import annotations

import re
from collections.abc import Iterable, Sequence

from .errors import (
    ArgumentParseError,
    DuplicateIndexError,
    EmptyProgramError,
    JudgmentParseError,
    PlanParseError,
)
from .model import ArgumentBinding, Kind, SubConstraint, Verdict

# bullet: "-", "*", "+", "•", or an ordinal like "1." / "2)"
_BULLET = r"(?:[-*+•]\s*|\d+[.)]\s+)?"
PLAN_LINE = re.compile(r"^\s*" + _BULLET + r"([NnSs])(\d+)\s*:(.*)$")

DEFAULT_SOLUTION_KEYWORDS = ("result", "answer", "solution", "sum", "difference", "product", "quotient")


def parse_plan_text(raw: str) -> list[SubConstraint]:
    """Pull ``N<k>:``/``S<k>:`` lines out of planner output, in emission order.

    Lines that do not match the grammar (preamble, prose, blank lines) are
    skipped, as are matches with index 0 or an empty description. One
    trailing period is dropped from each description.
    """
    out: list[SubConstraint] = []
    seen: set[tuple[Kind, int]] = set()
    for line in raw.splitlines():
        m = PLAN_LINE.match(line)
        if not m:
            continue
        letter, digits, rest = m.groups()
        index = int(digits)
        description = rest.strip()
        if description.endswith("."):
            description = description[:-1].rstrip()
        if index < 1 or not description:
            continue
        kind = Kind(letter.upper())
        if (kind, index) in seen:
            raise DuplicateIndexError(f"sub-constraint {kind.value}{index} appears more than once")
        seen.add((kind, index))
        out.append(SubConstraint(index=index, kind=kind, description=description))
    if not out:
        raise PlanParseError("no N<k>:/S<k>: sub-constraint lines found in planner output")
    return out


def format_plan(sub_constraints: Iterable[SubConstraint]) -> str:
    return "\n".join(f"{sc.key}: {sc.description}" for sc in sub_constraints)


def needs_solution(sub_constraints: Iterable[SubConstraint],
                   keywords: Sequence[str] = DEFAULT_SOLUTION_KEYWORDS) -> bool:
    """True when a numerical sub-constraint talks about the question's solution.

    Only numerical checks consume the solver's answer, so semantic
    descriptions are not scanned.
    """
    if not keywords:
        return False
    pattern = re.compile(r"\b(?:" + "|".join(re.escape(k) for k in keywords) + r")s?\b", re.IGNORECASE)
    return any(sc.kind is Kind.NUMERICAL and pattern.search(sc.description) for sc in sub_constraints)


_TOKEN = re.compile(r"<\s*(yes|no)\s*>", re.IGNORECASE)


def parse_judgment_token(text: str) -> Verdict:
    """Verdict from the last ``<Yes>``/``<No>`` token in ``text``."""
    matches = _TOKEN.findall(text)
    if not matches:
        raise JudgmentParseError("response contains no <Yes> or <No> judgment token")
    return Verdict.YES if matches[-1].lower() == "yes" else Verdict.NO


_ARG_LINE = re.compile(
    r"^\s*" + _BULLET + r"([Nn]\d+)\s*(?:[.:]\s*([A-Za-z_]\w*)\s*)?=\s*(.+?)\s*$"
)
_QUOTES = "'\"`"


def parse_argument_lines(text: str, numeric_keys: Sequence[str]) -> list[ArgumentBinding]:
    """Parse ``N1: name = value`` lines (``N1.name = value`` and ``N1 = value`` also accepted).

    Lines for keys outside ``numeric_keys`` are dropped. Every key in
    ``numeric_keys`` must end up with at least one binding.
    """
    wanted = {k.upper() for k in numeric_keys}
    bindings: list[ArgumentBinding] = []
    for line in text.splitlines():
        m = _ARG_LINE.match(line)
        if not m:
            continue
        key, name, value = m.groups()
        key = key.upper()
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in _QUOTES:
            value = value[1:-1].strip()
        if key not in wanted or not value:
            continue
        bindings.append(ArgumentBinding(sub_constraint=key, name=name or "value", value_text=value))
    missing = sorted(wanted - {b.sub_constraint for b in bindings})
    if missing:
        raise ArgumentParseError(f"no arguments extracted for {', '.join(missing)}")
    return bindings


def format_argument_lines(bindings: Iterable[ArgumentBinding]) -> str:
    return "\n".join(f"{b.sub_constraint}: {b.name} = {b.value_text}" for b in bindings)


_FENCE = re.compile(r"^[ \t]*```[^\n`]*\n(.*?)^[ \t]*```", re.DOTALL | re.MULTILINE)
_OPEN_FENCE = re.compile(r"^[ \t]*```[^\n`]*\n(.*)\Z", re.DOTALL | re.MULTILINE)
_CODE_SIGNAL = re.compile(
    r"^\s*(?:(?:def|class)\s+\w+.*:"
    r"|(?:if|elif|else|for|while|with|try|except)\b.*:"
    r"|import\s+[\w.]+(?:\s+as\s+\w+)?"
    r"|from\s+[\w.]+\s+import\s+.+"
    r"|return\b.*"
    r"|[A-Za-z_][\w.]*\s*=(?!=).*"
    r"|print\s*\(.*)\s*$"
)


def extract_program(text: str) -> str:
    """Source code from an LLM response.

    The first fenced block wins; a fence left open runs to the end of the
    response. An unfenced response is taken whole if at
    least one line looks like code; pure prose raises EmptyProgramError.
    """
    m = _FENCE.search(text) or _OPEN_FENCE.search(text)
    if m:
        source = m.group(1).strip("\n")
        if not source.strip():
            raise EmptyProgramError("fenced code block is empty")
        return source + "\n"
    if any(_CODE_SIGNAL.match(line) for line in text.splitlines()):
        return text.strip("\n") + "\n"
    raise EmptyProgramError("response contains no program code")
