"""Labeled corpora, confusion counts, metrics and reports.

Corpus files are UTF-8 JSON Lines, one labeled pair per line::

    {"knowledge_id": "x02030701", "knowledge_text": "...", "question_id": "q1",
     "question_text": "...", "label": 1}
"""

from __future__ import annotations

import csv
import io
import json
import os
import random
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import (
    DuplicatePairError,
    EmptyCountsError,
    SchemaError,
    UnmatchedRecordError,
    UnsupportedFormatError,
)
from .model import KnowledgeConcept, Question

CORPUS_FIELDS = ("knowledge_id", "knowledge_text", "question_id", "question_text", "label")
UNDEFINED = "undefined"


def iter_jsonl(path: str | os.PathLike) -> Iterator[tuple[int, dict[str, Any]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise SchemaError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, rec


@dataclass(frozen=True)
class LabeledPair:
    concept: KnowledgeConcept
    question: Question
    gold_label: int

    def __post_init__(self):
        if self.gold_label not in (0, 1):
            raise SchemaError(f"gold label must be 0 or 1, got {self.gold_label!r}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.concept.id, self.question.id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "knowledge_id": self.concept.id,
            "knowledge_text": self.concept.definition,
            "question_id": self.question.id,
            "question_text": self.question.stem,
            "label": self.gold_label,
        }


def load_corpus(path: str | os.PathLike) -> list[LabeledPair]:
    pairs: list[LabeledPair] = []
    seen: set[tuple[str, str]] = set()
    definitions: dict[str, str] = {}
    for lineno, rec in iter_jsonl(path):
        missing = [f for f in CORPUS_FIELDS if f not in rec]
        if missing:
            raise SchemaError(f"{path}:{lineno}: missing field(s) {', '.join(missing)}")
        label = rec["label"]
        if isinstance(label, bool) or label not in (0, 1):
            raise SchemaError(f"{path}:{lineno}: label must be 0 or 1, got {label!r}")
        cid, qid = str(rec["knowledge_id"]), str(rec["question_id"])
        if definitions.setdefault(cid, rec["knowledge_text"]) != rec["knowledge_text"]:
            raise SchemaError(f"{path}:{lineno}: knowledge {cid} has conflicting definitions")
        if (cid, qid) in seen:
            raise DuplicatePairError(f"{path}:{lineno}: duplicate pair ({cid}, {qid})")
        seen.add((cid, qid))
        try:
            pair = LabeledPair(KnowledgeConcept(cid, rec["knowledge_text"]), Question(qid, rec["question_text"]), label)
        except SchemaError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from exc
        pairs.append(pair)
    return pairs


def dump_corpus(pairs: Iterable[LabeledPair]) -> str:
    return "".join(json.dumps(p.to_dict(), ensure_ascii=False) + "\n" for p in pairs)


def write_corpus(pairs: Iterable[LabeledPair], path: str | os.PathLike) -> None:
    Path(path).write_text(dump_corpus(pairs), encoding="utf-8")


# -- metrics -----------------------------------------------------------------


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


def count_confusion(records: Iterable[tuple[int, int]]) -> ConfusionCounts:
    """Tally (gold, predicted) label pairs."""
    cells = {(1, 1): 0, (0, 1): 0, (0, 0): 0, (1, 0): 0}
    for gold, pred in records:
        try:
            cells[(gold, pred)] += 1
        except KeyError:
            raise ValueError(f"labels must be 0 or 1, got ({gold!r}, {pred!r})") from None
    return ConfusionCounts(tp=cells[(1, 1)], fp=cells[(0, 1)], tn=cells[(0, 0)], fn=cells[(1, 0)])


@dataclass(frozen=True)
class MetricsReport:
    """Accuracy, precision, recall and F1; None stands for undefined."""

    scope: str
    counts: ConfusionCounts
    accuracy: float
    precision: float | None
    recall: float | None
    f1: float | None

    def metrics(self) -> dict[str, float | None]:
        return {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall, "f1": self.f1}


def compute_metrics(counts: ConfusionCounts, scope: str = "overall") -> MetricsReport:
    if counts.total == 0:
        raise EmptyCountsError(f"no scored pairs for {scope}")
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    accuracy = (tp + tn) / counts.total
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricsReport(scope, counts, accuracy, precision, recall, f1)


@dataclass(frozen=True)
class Prediction:
    concept_id: str
    question_id: str
    label: int


@dataclass(frozen=True)
class EvaluationReport:
    per_concept: Mapping[str, MetricsReport]
    overall: MetricsReport

    def rows(self) -> list[MetricsReport]:
        return [self.per_concept[cid] for cid in sorted(self.per_concept)] + [self.overall]


def per_concept_report(pairs: Sequence[LabeledPair], predictions: Iterable[Prediction],
                       require_complete: bool = True) -> EvaluationReport:
    """Score ``predictions`` against ``pairs`` per concept and micro-averaged overall.

    Every prediction must refer to a known pair; with ``require_complete``
    every pair must also have a prediction.
    """
    gold = {p.key: p.gold_label for p in pairs}
    by_concept: dict[str, list[tuple[int, int]]] = {}
    scored: set[tuple[str, str]] = set()
    for pred in predictions:
        key = (pred.concept_id, pred.question_id)
        if key not in gold:
            raise UnmatchedRecordError(f"prediction for unknown pair {key}")
        if key in scored:
            raise UnmatchedRecordError(f"more than one prediction for pair {key}")
        scored.add(key)
        by_concept.setdefault(pred.concept_id, []).append((gold[key], pred.label))
    if require_complete:
        missing = [k for k in gold if k not in scored]
        if missing:
            raise UnmatchedRecordError(f"{len(missing)} pair(s) have no prediction, e.g. {missing[0]}")
    per_concept = {cid: compute_metrics(count_confusion(rows), cid) for cid, rows in by_concept.items()}
    total = sum((r.counts for r in per_concept.values()), ConfusionCounts())
    return EvaluationReport(per_concept, compute_metrics(total, "overall"))


# -- report emission ---------------------------------------------------------

REPORT_FORMATS = ("json", "csv", "markdown")
_METRIC_ROWS = (("Accuracy", "accuracy"), ("Precision", "precision"), ("Recall", "recall"), ("F1-score", "f1"))


def _fmt(value: float | None) -> str:
    return UNDEFINED if value is None else f"{value:.4f}"


def _json_row(r: MetricsReport) -> dict[str, Any]:
    row: dict[str, Any] = {"scope": r.scope, "total": r.counts.total, "tp": r.counts.tp, "fp": r.counts.fp,
                           "tn": r.counts.tn, "fn": r.counts.fn}
    row.update({k: UNDEFINED if v is None else v for k, v in r.metrics().items()})
    return row


def render_report(report: EvaluationReport, fmt: str) -> str:
    if fmt == "json":
        body = {"concepts": [_json_row(r) for r in report.rows()[:-1]], "overall": _json_row(report.overall)}
        return json.dumps(body, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scope", "total", "tp", "fp", "tn", "fn", "accuracy", "precision", "recall", "f1"])
        for r in report.rows():
            c = r.counts
            writer.writerow([r.scope, c.total, c.tp, c.fp, c.tn, c.fn,
                             *(_fmt(v) for v in r.metrics().values())])
        return buf.getvalue()
    if fmt == "markdown":
        rows = [report.overall] + report.rows()[:-1]
        lines = ["| Metric | " + " | ".join("Overall" if r is report.overall else r.scope for r in rows) + " |",
                 "|---" * (len(rows) + 1) + "|"]
        for title, attr in _METRIC_ROWS:
            lines.append(f"| {title} | " + " | ".join(_fmt(getattr(r, attr)) for r in rows) + " |")
        for cell in ("tp", "fp", "tn", "fn"):
            lines.append(f"| {cell.upper()} | " + " | ".join(str(getattr(r.counts, cell)) for r in rows) + " |")
        return "\n".join(lines) + "\n"
    raise UnsupportedFormatError(f"unsupported report format {fmt!r}; choose one of {', '.join(REPORT_FORMATS)}")


def emit_report(report: EvaluationReport, fmt: str, path: str | os.PathLike | None = None) -> str:
    text = render_report(report, fmt)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


# -- synthetic fixtures ------------------------------------------------------

# (knowledge id, total, positive, negative) for the 24 concepts of MathKnowCT
TABLE1 = (
    ("x02030701", 100, 25, 75), ("x07020402", 87, 29, 58),
    ("x02021101", 100, 40, 60), ("x07020502", 100, 50, 50),
    ("x06020104", 100, 40, 60), ("x20050401", 100, 50, 50),
    ("x02061003", 100, 16, 84), ("x09020509", 100, 50, 50),
    ("x48040202", 100, 29, 71), ("x07020314", 100, 30, 70),
    ("x11041602", 100, 24, 76), ("x01010201", 100, 50, 50),
    ("x04030501", 100, 48, 52), ("x11040205", 100, 26, 74),
    ("x04030601", 100, 23, 77), ("x11040203", 100, 22, 78),
    ("x07010103", 100, 50, 50), ("x11040202", 100, 25, 75),
    ("x06030101", 100, 44, 56), ("x02040502", 100, 44, 56),
    ("x57130902", 100, 35, 65), ("x47060201", 100, 17, 83),
    ("x20041003", 62, 50, 12), ("x20070401", 100, 47, 53),
)

KNOWN_DEFINITIONS = {
    "x02030701": (
        "Learn to perform addition and subtraction operations between two tens less than 100, and judge the "
        "relationship between the results of the calculation and other calculations or numbers."
    ),
    "x01010201": (
        "Learn the definitions of following types of numbers, including integers, odd numbers, even numbers, "
        "fractions, decimals, positive numbers, negative numbers, and natural numbers. Common related question "
        "types include the following: (1) Select a number of a specified type from a given set of numbers; "
        "(2) Determine whether a number is within the defined range; (3) Determine whether a proposition about "
        "the classification of numbers is true."
    ),
    "x02040502": (
        "Learn the composition of two-digit numbers less than or equal to 100 (how many tens and how many ones). "
        "Common related question types include the following: (1) Convert a two-digit number into a combination "
        "of tens and ones; (2) Fill in the corresponding two-digit number based on the combination of tens and ones."
    ),
    "x02061003": (
        "Learn to use 3 or 4 digits to form a three-digit or four-digit number, and judge the size relationship "
        "between the digits. Related question types are limited to the following: (1) Use 3 digits to form a "
        "three-digit number smaller than a certain number. Find the total number of such three-digit numbers, the "
        "largest number, and the smallest number. Each digit can only be used once in the combination process. "
        "(2) Knowing that the sum of the digits in each digit of a four-digit number is a certain number, find the "
        "largest number and the smallest number of this four-digit number."
    ),
    "x04030501": (
        "Learn to calculate the reciprocal of a number. Common related question types include the following: "
        "(1) Calculate the reciprocal of one or more given numbers; (2) Given an equation where the product of a "
        "number and a blank is 1, find the value of the number that can be filled in the blank."
    ),
    "x48040202": (
        "Learn how to estimate the total purchase price of three items in a shopping scenario. Common related "
        "question types include the following: (1) Given the prices of three items (each item can be a three-digit "
        "or two-digit price), but at least one of the items has a three-digit price, calculate the approximate "
        "total purchase price of the three items; (2) Calculate both the approximate and exact total purchase "
        "price of the three items;"
    ),
    "x57130902": (
        "Learn to solve feasible combinations by enumeration. Common related question types include the "
        "following: (1) Given a numerical value of a total quantity demanded (e.g., total quantity of goods "
        "transported, total price), and the numerical value that each option can provide (e.g., the loading "
        "capacity of trucks of different sizes, coins of different denominations), solve the option combination "
        "that just meets the total quantity demanded. Also note that the numbers in the question stem are all "
        "integers, and the numerical value of each option in the combination cannot be wasted (e.g., each truck "
        "must be fully loaded, and no change is given for the currency). In the problem-solving process, no more "
        "than 15 feasible combinations should be enumerated."
    ),
}


def _scaled_positives(total: int, positive: int, n: int) -> int:
    # round half up, so the split does not depend on banker's rounding
    return (2 * n * positive + total) // (2 * total)


def _addition_stem(rng: random.Random, matching: bool) -> str:
    if matching:
        a, b = rng.randrange(1, 10) * 10, rng.randrange(1, 10) * 10
        c = rng.randrange(1, 19) * 10
        op = rng.choice("+-")
        if op == "-" and a < b:
            a, b = b, a
        return f"Calculate the following equation: {a} {op} {b} and compare the result with {c}, which is larger?"
    a, b = rng.randrange(101, 999), rng.randrange(11, 99)
    return f"Calculate {a} + {b}."


def generate_synthetic_corpus(per_concept: int | None = None, seed: int = 0) -> list[LabeledPair]:
    """Synthetic labeled pairs shaped like MathKnowCT.

    With ``per_concept=None`` each concept gets exactly its published
    total/positive/negative counts. With an integer, every concept gets that
    many questions and the positive share is scaled to match.
    """
    pairs = []
    for cid, total, positive, _negative in TABLE1:
        n = total if per_concept is None else per_concept
        n_pos = positive if per_concept is None else _scaled_positives(total, positive, n)
        labels = [1] * n_pos + [0] * (n - n_pos)
        rng = random.Random(f"{seed}:{cid}")
        rng.shuffle(labels)
        definition = KNOWN_DEFINITIONS.get(
            cid, f"Synthetic knowledge concept {cid}: a Grade 1-3 math skill used for pipeline testing.")
        concept = KnowledgeConcept(cid, definition)
        for j, label in enumerate(labels, 1):
            if cid == "x02030701":
                stem = _addition_stem(rng, bool(label))
            else:
                stem = f"Synthetic practice question {j} drawn near concept {cid}."
            pairs.append(LabeledPair(concept, Question(f"{cid}-q{j:03d}", stem), label))
    return pairs
