from __future__ import annotations

import sys
from pathlib import Path

import pytest

from knowtag.agents import Agents
from knowtag.gateway import Gateway, MockBackend, MockEntry, Role, TranscriptStore
from knowtag.model import KnowledgeConcept, Question
from knowtag.pipeline import Pipeline, PipelineConfig
from knowtag.sandbox import Sandbox, SandboxPolicy

FIXTURES = Path(__file__).parent / "fixtures"

# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


FIG4_KNOWLEDGE = (
    "Learn to perform addition and subtraction operations between two tens less than 100, and judge the "
    "relationship between the results of the calculation and other calculations or numbers."
)
FIG4_QUESTION = "Calculate the following equation: 20 + 50 and compare the result with 90, which is larger?"
FIG4_PLAN = (
    "- N1: Verify only two numbers in calculations are between tens less than 100.\n"
    "- S1: Verify the question is about comparing the calculation result with another calculations or numbers.\n"
)
FIG4_SEMANTIC = (
    "The question asks to first calculate an equation and then compares it with a given number. This is aligned "
    "with given knowledge definition comparing the calculation result with numbers. Thus, <Yes>."
)
FIG4_ARGUMENTS = "Extract input argument from the question:\nN1: input_expression = 20 + 50\n"
FIG4_PROGRAM = '''```python
import re

def verify_add_subtract_calculation(input_string):
    pattern = r'^\\s*(\\d{1,2})\\s*([\\+\\-])\\s*(\\d{1,2})\\s*$'
    match = re.match(pattern, input_string)
    if match:
        num1, operator, num2 = match.groups()
        num1, num2 = int(num1), int(num2)
        if num1 % 10 == 0 and num2 % 10 == 0 and num1 < 100 and num2 < 100:
            return True
        else:
            return False
    else:
        return False

print(verify_add_subtract_calculation('20 + 50'))
```
The output returned by python program is [python execution]. Thus, <Yes>.
'''

PYTHON = (sys.executable, "-I", "-S")  # guest programs only need the stdlib
STUB_TRUE = ("sh", "-c", "echo True")


@pytest.fixture
def fig4_concept() -> KnowledgeConcept:
    return KnowledgeConcept("x02030701", FIG4_KNOWLEDGE)


@pytest.fixture
def fig4_question() -> Question:
    return Question("fig4", FIG4_QUESTION)


def fig4_entries(semantic: str = FIG4_SEMANTIC, program: str = FIG4_PROGRAM, plan: str = FIG4_PLAN,
                 repeat: bool = False) -> list[MockEntry]:
    times = None if repeat else 1
    return [
        MockEntry(Role.PLANNER, plan, times=times),
        MockEntry(Role.NUMERICAL_JUDGER, FIG4_ARGUMENTS, step="numerical_arguments", times=times),
        MockEntry(Role.NUMERICAL_JUDGER, program, step="numerical_program", times=times),
        MockEntry(Role.SEMANTIC_JUDGER, semantic, times=times),
    ]


def make_pipeline(entries, interpreter=PYTHON, store: TranscriptStore | None = None,
                  config: PipelineConfig = PipelineConfig(), timeout: float = 10.0, **agent_kw):
    gateway = Gateway(MockBackend(entries), store=store)
    agents = Agents(gateway, **agent_kw)
    sandbox = Sandbox(SandboxPolicy(interpreter=interpreter, wall_timeout=timeout))
    return Pipeline(agents, sandbox, config)
