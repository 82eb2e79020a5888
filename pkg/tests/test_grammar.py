import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from knowtag.errors import (
    ArgumentParseError,
    DuplicateIndexError,
    EmptyProgramError,
    JudgmentParseError,
    PlanParseError,
)
from knowtag.grammar import (
    extract_program,
    format_plan,
    parse_argument_lines,
    parse_judgment_token,
    parse_plan_text,
)
from knowtag.model import Kind, SubConstraint, Verdict


class TestPlanGrammar:
    def test_two_lines(self):
        scs = parse_plan_text("N1: check range\nS1: check topic")
        assert [(sc.kind, sc.index, sc.description) for sc in scs] == [
            (Kind.NUMERICAL, 1, "check range"), (Kind.SEMANTIC, 1, "check topic")]

    def test_duplicate(self):
        with pytest.raises(DuplicateIndexError):
            parse_plan_text("- N1: a\n- N1: b")

    def test_preamble_ignored(self):
        assert parse_plan_text("here is the plan:\n N2: x") == [SubConstraint(2, Kind.NUMERICAL, "x")]

    def test_nothing_parseable(self):
        with pytest.raises(PlanParseError):
            parse_plan_text("I think the knowledge is about addition.")

    def test_emission_order_kept(self):
        scs = parse_plan_text("S1: a\nN1: b\nN2: c\nN3: d")
        assert [sc.key for sc in scs] == ["S1", "N1", "N2", "N3"]
        assert sum(sc.kind is Kind.NUMERICAL for sc in scs) == 3

    def test_decorations(self):
        raw = "Plan:\n1. n1: lower case\n* S2 : spaced colon\n• S3: bullet dot.\n   - N4: indented"
        assert [sc.key for sc in parse_plan_text(raw)] == ["N1", "S2", "S3", "N4"]
        assert parse_plan_text(raw)[2].description == "bullet dot"


def oracle_classify(line: str):
    """Character-level reimplementation of the plan-line grammar."""
    s = line.lstrip()
    if s[:1] in ("-", "*", "+", "•"):
        s = s[1:].lstrip()
    else:
        i = 0
        while i < len(s) and s[i].isdigit():
            i += 1
        if 0 < i < len(s) and s[i] in ".)" and i + 1 < len(s) and s[i + 1].isspace():
            s = s[i + 1:].lstrip()
    if not s or s[0] not in "NnSs":
        return None
    kind = s[0].upper()
    j = 1
    while j < len(s) and s[j] in "0123456789":
        j += 1
    if j == 1:
        return None
    index = int(s[1:j])
    rest = s[j:].lstrip(" \t")
    if not rest.startswith(":"):
        return None
    desc = rest[1:].strip()
    if desc.endswith("."):
        desc = desc[:-1].rstrip()
    if index < 1 or not desc:
        return None
    return kind, index, desc


def fuzz_lines(seed: int, n: int = 50) -> list[str]:
    rng = random.Random(seed)
    prefixes = ["", " ", "  ", "- ", "* ", "+ ", "• ", "1. ", "12) ", "-", "x ", "Note ", "3.", "#"]
    heads = ["N", "S", "n", "s", "M", "Q", "NS", ""]
    indices = ["1", "2", "0", "10", "", "07", "a"]
    seps = [":", " :", "  :", "", "-", " ="]
    bodies = ["Verify the range", "check topic.", "", " ", "spans: colon", "e.g.", "  trimmed  "]
    return [rng.choice(prefixes) + rng.choice(heads) + rng.choice(indices) + rng.choice(seps) + rng.choice(bodies)
            for _ in range(n)]


@pytest.mark.parametrize("seed", range(6))
def test_plan_grammar_matches_oracle_on_fuzz_corpus(seed):
    lines = fuzz_lines(seed)
    assert len(lines) == 50
    for line in lines:
        expected = oracle_classify(line)
        try:
            got = parse_plan_text(line)
        except PlanParseError:
            got = None
        if expected is None:
            assert got is None, line
        else:
            (sc,) = got
            assert (sc.kind.value, sc.index, sc.description) == expected, line


sub_constraints = st.builds(
    SubConstraint,
    index=st.integers(1, 30),
    kind=st.sampled_from(list(Kind)),
    description=st.text(st.characters(whitelist_categories=("L", "N", "Zs"), whitelist_characters=":,()"),
                        min_size=1, max_size=40).filter(lambda s: s.strip()),
)


@given(st.lists(sub_constraints, min_size=1, max_size=8, unique_by=lambda sc: sc.key))
def test_format_parse_fixpoint(scs):
    once = format_plan(parse_plan_text(format_plan(scs)))
    assert format_plan(parse_plan_text(once)) == once


class TestJudgmentToken:
    def test_example(self):
        assert parse_judgment_token("...; Thus, <Yes>.") is Verdict.YES

    def test_last_wins(self):
        assert parse_judgment_token("maybe <Yes> but on reflection <No>") is Verdict.NO

    def test_case_insensitive(self):
        assert parse_judgment_token("so <yES>") is Verdict.YES

    def test_missing(self):
        with pytest.raises(JudgmentParseError):
            parse_judgment_token("the answer is yes")

    @given(st.text().filter(lambda s: "<" not in s))
    def test_suffix_dominance(self, prefix):
        assert parse_judgment_token(prefix + " <Yes>") is Verdict.YES
        assert parse_judgment_token(prefix + " <No>") is Verdict.NO


class TestArguments:
    def test_worked_example(self):
        (b,) = parse_argument_lines("Extract input argument from the question:\nN1: input_expression = 20 + 50", ["N1"])
        assert (b.sub_constraint, b.name, b.value_text) == ("N1", "input_expression", "20 + 50")

    def test_variants(self):
        text = "N1.a = 3\n- N2 = '7'\nN3: x = `1, 2`\nN9: ignored = 1"
        got = parse_argument_lines(text, ["N1", "N2", "N3"])
        assert [(b.sub_constraint, b.name, b.value_text) for b in got] == [
            ("N1", "a", "3"), ("N2", "value", "7"), ("N3", "x", "1, 2")]

    def test_missing_key(self):
        with pytest.raises(ArgumentParseError, match="N2"):
            parse_argument_lines("N1: a = 1", ["N1", "N2"])


# Hand-labeled responses: expected extracted source, or None for "no code".
PROGRAM_CASES = [
    ("```python\nprint(True)\n```", "print(True)\n"),
    ("Here you go:\n```python\nx = 1\nprint(x == 1)\n```\nDone.", "x = 1\nprint(x == 1)\n"),
    ("```\nprint(False)\n```", "print(False)\n"),
    ("```py\na = 2\n```\n```python\nb = 3\n```", "a = 2\n"),
    ("```python\nfirst()\n```\ntext\n```python\nsecond()\n```", "first()\n"),
    ("print(1 < 2)", "print(1 < 2)\n"),
    ("import math\nprint(math.isclose(1, 1))", "import math\nprint(math.isclose(1, 1))\n"),
    ("def f(x):\n    return x > 3\nprint(f(5))", "def f(x):\n    return x > 3\nprint(f(5))\n"),
    ("The script checks the range and prints True.", None),
    ("I cannot write a script for this.", None),
    ("", None),
    ("For each number we check whether it is a multiple of ten", None),
    ("If both numbers are tens, the answer is True.", None),
    ("From the question we get 20 and 50.", None),
    ("Thus, <Yes>.", None),
    ("```python\n\n```", None),
    ("Result:\n```python3\nvalue = 20 + 50\nprint(value < 100)\n```", "value = 20 + 50\nprint(value < 100)\n"),
    ("```python\nprint('```')\n```", "print('```')\n"),
    ("```python\nprint(True)\n", "print(True)\n"),
    ("x = [1, 2]\nprint(len(x) == 2)", "x = [1, 2]\nprint(len(x) == 2)\n"),
]


@pytest.mark.parametrize("response,expected", PROGRAM_CASES)
def test_program_extraction(response, expected):
    if expected is None:
        with pytest.raises(EmptyProgramError):
            extract_program(response)
    else:
        assert extract_program(response) == expected
