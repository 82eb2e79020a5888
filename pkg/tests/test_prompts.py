from collections import Counter
from itertools import combinations

import pytest

from knowtag.errors import InsufficientExamplesError, MissingPlaceholderError, SchemaError
from knowtag.gateway import Role
from knowtag.prompts import (
    FewShotExample,
    PromptTemplate,
    TemplateName,
    dump_few_shot_pool,
    format_examples,
    load_few_shot_pool,
    load_templates,
    render,
    sample_few_shot,
)

TEMPLATES = load_templates()

GOLDEN = {
    TemplateName.PLANNER: "Your job is to take the following knowledge definition and separate it into one or "
                          "more simpler Knowledge sub-constraints. Each of these smaller constraints must return "
                          "Yes or No value when evaluated.",
    TemplateName.SOLVER: "You are a student. Given a question, provide the answer at the end.",
    TemplateName.SEMANTIC_JUDGER: "You are a knowledge concept annotator. Your job is to judge whether the "
                                  "question is concerning the knowledge. The judgment tokens <Yes> or <No> "
                                  "should be provided at the end of the response.",
    TemplateName.NUMERICAL_ARGUMENTS: "Identify the numerical arguments for each subconstraint.",
    TemplateName.NUMERICAL_PROGRAM: "The script prints True if all the sub-constraints return True, "
                                    "False if else.",
}


@pytest.mark.parametrize("name", list(TemplateName))
def test_golden_instruction(name):
    assert GOLDEN[name] in TEMPLATES[name].body


def test_roles():
    assert TemplateName.NUMERICAL_PROGRAM.role is Role.NUMERICAL_JUDGER
    assert TemplateName.PLANNER.role is Role.PLANNER


def test_placeholders():
    assert TEMPLATES[TemplateName.SOLVER].required_placeholders == {"question"}
    assert TEMPLATES[TemplateName.SEMANTIC_JUDGER].required_placeholders == {
        "examples", "knowledge", "sub_constraint", "question"}


def test_render():
    out = render(TEMPLATES[TemplateName.SOLVER], {"question": "20 + 50 = ?"})
    assert "Question: 20 + 50 = ?" in out and "{{" not in out


def test_missing_placeholder_named():
    with pytest.raises(MissingPlaceholderError) as info:
        render(TEMPLATES[TemplateName.SOLVER], {})
    assert info.value.name == "question"


def test_zero_placeholder_identity():
    t = PromptTemplate(TemplateName.SOLVER, "no slots { here }")
    assert render(t, {"unused": "x"}) == "no slots { here }"


def test_custom_dir(tmp_path):
    for name in TemplateName:
        (tmp_path / f"{name.value}.txt").write_text(f"{name.value}: {{{{question}}}}")
    loaded = load_templates(tmp_path)
    assert render(loaded[TemplateName.SOLVER], {"question": "q"}) == "solver: q"


def ex(qid, label=1, concept="c", rationale=None):
    return FewShotExample(concept, qid, "know", f"question {qid}", label, rationale)


POOL = [ex("a"), ex("b", 0), ex("c"), ex("d", 0), ex("z", concept="other")]


class TestSampling:
    def test_seeded(self):
        assert sample_few_shot(POOL, "c", seed=3) == sample_few_shot(POOL, "c", seed=3)

    def test_distinct_and_in_concept(self):
        for seed in range(50):
            got = sample_few_shot(POOL, "c", seed=seed)
            assert len({e.question_id for e in got}) == 2
            assert all(e.concept_id == "c" for e in got)

    def test_insufficient(self):
        with pytest.raises(InsufficientExamplesError):
            sample_few_shot(POOL, "other")

    def test_leakage_guard(self):
        for seed in range(200):
            assert all(e.question_id != "a" for e in sample_few_shot(POOL, "c", seed=seed, exclude_question_id="a"))
        with pytest.raises(InsufficientExamplesError):
            sample_few_shot(POOL, "other", n=1, exclude_question_id="z")

    def test_uniform_over_pairs(self):
        counts = Counter(frozenset(e.question_id for e in sample_few_shot(POOL, "c", seed=s)) for s in range(1000))
        pairs = [frozenset(p) for p in combinations("abcd", 2)]
        assert set(counts) == set(pairs)
        for p in pairs:
            assert abs(counts[p] / 1000 - 1 / 6) <= 0.05
        chi2 = sum((counts[p] - 1000 / 6) ** 2 / (1000 / 6) for p in pairs)
        assert chi2 < 20.52  # df=5, p=0.001


class TestFormatting:
    def test_empty(self):
        assert format_examples([], Role.SEMANTIC_JUDGER) == ""

    def test_judger_blocks(self):
        text = format_examples([ex("a"), ex("b", 0, rationale="Not about tens. <No>.")], Role.SEMANTIC_JUDGER)
        blocks = text.strip().split("\n[Example ")
        assert text.startswith("\n[Example 1]") and "[Example 2]" in text
        assert blocks[0].splitlines()[-1] == "Judgment: <Yes>"
        assert blocks[1].splitlines()[-1] == "Judgment: Not about tens. <No>"
        assert text.index("question a") < text.index("question b")

    def test_planner_has_no_judgment(self):
        assert "Judgment" not in format_examples([ex("a")], Role.PLANNER)

    def test_rationale_must_agree(self):
        with pytest.raises(SchemaError):
            ex("a", 1, rationale="... <No>")
        with pytest.raises(SchemaError):
            ex("a", 1, rationale="no token")

    def test_pool_round_trip(self, tmp_path):
        pool = [ex("a", rationale="fits. <Yes>"), ex("b", 0)]
        path = tmp_path / "pool.jsonl"
        path.write_text(dump_few_shot_pool(pool))
        assert load_few_shot_pool(path) == pool
