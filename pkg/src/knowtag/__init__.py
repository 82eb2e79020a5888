"""Multi-agent LLM knowledge-concept tagging.

A planner splits a knowledge definition into semantic (S#) and numerical
(N#) sub-constraints; a semantic judger checks each S# with an LLM, a
numerical judger turns the N# checks into a program that is executed in a
sandbox, and the verdicts are combined with AND.
"""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    AgentJudgment,
    FinalJudgment,
    Kind,
    KnowledgeConcept,
    Plan,
    Question,
    Solution,
    SubConstraint,
    Verdict,
    combine_judgments,
    verdict_to_label,
)

__all__ = [
    "AgentJudgment",
    "FinalJudgment",
    "Kind",
    "KnowledgeConcept",
    "Plan",
    "Question",
    "Solution",
    "SubConstraint",
    "Verdict",
    "combine_judgments",
    "verdict_to_label",
]
