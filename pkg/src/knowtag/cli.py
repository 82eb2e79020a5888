"""``knowtag`` command line.

Exit codes (stable):

    0  success
    1  unexpected internal error
    2  configuration or input error (bad config, missing file, bad corpus)
    3  gateway error (transport, rate limit, replay miss, mock miss)
    4  parse error (unparseable LLM output, records not matching the corpus)
    5  every pair in a tagging run errored
    6  corrupt transcript archive
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from . import __version__
from .config import load_settings
from .corpus import (
    REPORT_FORMATS,
    LabeledPair,
    Prediction,
    emit_report,
    generate_synthetic_corpus,
    load_corpus,
    per_concept_report,
    write_corpus,
)
from .errors import (
    AgentParseError,
    ConfigError,
    CorruptArchiveError,
    EvaluationError,
    GatewayError,
    InsufficientExamplesError,
    KnowtagError,
    MissingPlaceholderError,
    SandboxError,
)
from .gateway import Role, TranscriptStore, export_transcripts, import_transcripts
from .grammar import format_plan
from .model import KnowledgeConcept, Question
from .pipeline import dump_records, load_records
from .runtime import Mode, build_engine

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_GATEWAY = 3
EXIT_PARSE = 4
EXIT_ALL_FAILED = 5
EXIT_CORRUPT_ARCHIVE = 6

log = logging.getLogger("knowtag")


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, CorruptArchiveError):
        return EXIT_CORRUPT_ARCHIVE
    if isinstance(exc, GatewayError):
        return EXIT_GATEWAY
    if isinstance(exc, (AgentParseError, EvaluationError)):
        return EXIT_PARSE
    if isinstance(exc, (ConfigError, SandboxError, InsufficientExamplesError, MissingPlaceholderError, OSError)):
        return EXIT_CONFIG
    return EXIT_INTERNAL


def _engine_args() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.LIVE.value,
                   help="LLM backend: live HTTP, replay from --store, or scripted mock (default: live)")
    p.add_argument("--store", help="transcript store (JSONL); recorded into in live/mock mode, read in replay mode")
    p.add_argument("--mock-script", help="YAML mock script (mock mode); overrides mock.script")
    return p


def _common_args() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="YAML config file (default: $KNOWTAG_CONFIG, else built-in defaults)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def build_parser() -> argparse.ArgumentParser:
    common, engine = _common_args(), _engine_args()
    parser = argparse.ArgumentParser(prog="knowtag", description="Multi-agent knowledge-concept tagging.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", parents=[common, engine], help="decompose one knowledge definition into a plan")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--knowledge-file", help="text file holding the knowledge definition")
    src.add_argument("--corpus", help="corpus to look --concept-id up in")
    p.add_argument("--concept-id", help="concept id (required with --corpus; defaults to the file stem)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("tag", parents=[common, engine], help="tag a corpus or a single pair")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", help="corpus JSONL file; every pair is tagged")
    src.add_argument("--concept", help="knowledge definition text of a single pair (with --question)")
    p.add_argument("--question", help="question stem of a single pair")
    p.add_argument("--concept-id", default="concept", help="id for --concept (default: concept)")
    p.add_argument("--question-id", default="question", help="id for --question (default: question)")
    p.add_argument("--records-out", required=True, help="where to write tagging records (JSONL)")
    p.add_argument("--parallelism", type=int, help="override pipeline.parallelism")
    p.add_argument("--no-timings", action="store_true", help="write wall_time as null for byte-stable output")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("evaluate", parents=[common], help="score tagging records against a labeled corpus")
    p.add_argument("--corpus", required=True, help="labeled corpus JSONL file")
    p.add_argument("--records", required=True, help="tagging records written by 'knowtag tag'")
    p.add_argument("--format", choices=REPORT_FORMATS, default="markdown", help="report format (default: markdown)")
    p.add_argument("--out", help="report file; figures are written next to it (default: stdout, no figures)")
    p.add_argument("--errors-as", choices=["no", "yes", "skip"], default="no",
                   help="how to score errored pairs (default: no, i.e. a negative prediction)")
    p.add_argument("--no-figures", action="store_true", help="do not render figures next to --out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("transcripts", parents=[common], help="export, import or summarize a transcript store")
    p.add_argument("action", choices=["export", "import", "stats"])
    p.add_argument("--store", required=True, help="transcript store (JSONL)")
    p.add_argument("--archive", help="archive file (export target / import source)")
    p.set_defaults(func=cmd_transcripts)

    p = sub.add_parser("fixture", parents=[common], help="write the synthetic MathKnowCT-shaped corpus")
    p.add_argument("--out", required=True, help="corpus file to write")
    p.add_argument("--per-concept", type=int, help="questions per concept (default: published counts)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fixture)
    return parser


def _engine(args: argparse.Namespace, **overrides):
    settings = load_settings(args.config)
    if overrides.get("parallelism") is not None:
        settings.pipeline.parallelism = overrides["parallelism"]
    return build_engine(settings, Mode(args.mode), args.store, args.mock_script)


def cmd_plan(args: argparse.Namespace) -> int:
    if args.knowledge_file:
        path = Path(args.knowledge_file)
        try:
            definition = path.read_text(encoding="utf-8").strip()
        except FileNotFoundError as exc:
            raise ConfigError(f"knowledge file not found: {path}") from exc
        concept = KnowledgeConcept(args.concept_id or path.stem, definition)
    else:
        if not args.concept_id:
            raise ConfigError("--corpus needs --concept-id")
        concepts = {p.concept.id: p.concept for p in load_corpus(args.corpus)}
        if args.concept_id not in concepts:
            raise ConfigError(f"concept {args.concept_id!r} not found in {args.corpus}")
        concept = concepts[args.concept_id]
    engine = _engine(args)
    plan = engine.agents.plan(concept)
    print(f"# concept: {concept.id}")
    print("# raw planner output")
    print(plan.raw_text.rstrip())
    print("# parsed plan")
    print(format_plan(plan.sub_constraints))
    print(f"# needs_solution: {str(plan.needs_solution).lower()}")
    return EXIT_OK


def cmd_tag(args: argparse.Namespace) -> int:
    if args.corpus:
        pairs = [(p.concept, p.question) for p in load_corpus(args.corpus)]
    else:
        if not args.question:
            raise ConfigError("--concept needs --question")
        pairs = [(KnowledgeConcept(args.concept_id, args.concept), Question(args.question_id, args.question))]
    engine = _engine(args, parallelism=args.parallelism)
    records = engine.pipeline.tag_batch(pairs)
    Path(args.records_out).write_text(dump_records(records, timings=not args.no_timings), encoding="utf-8")
    yes = sum(1 for r in records if r.final is not None and r.final.label == 1)
    no = sum(1 for r in records if r.final is not None and r.final.label == 0)
    errors = len(records) - yes - no
    print(f"{yes} yes, {no} no, {errors} error")
    for r in records:
        if r.error_trace:
            print(f"error: {r.concept_id}/{r.question_id} at {r.error_trace['stage']}: "
                  f"{r.error_trace['type']}: {r.error_trace['message']}", file=sys.stderr)
    if records and errors == len(records):
        return EXIT_ALL_FAILED
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    pairs = load_corpus(args.corpus)
    records = load_records(args.records)
    predictions = []
    skipped: set[tuple[str, str]] = set()
    for r in records:
        label = r.predicted_label
        if label is None:
            if args.errors_as == "skip":
                skipped.add((r.concept_id, r.question_id))
                continue
            label = 1 if args.errors_as == "yes" else 0
        predictions.append(Prediction(r.concept_id, r.question_id, label))
    scored: list[LabeledPair] = [p for p in pairs if p.key not in skipped]
    report = per_concept_report(scored, predictions)
    text = emit_report(report, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)
    else:
        print(f"wrote {args.out}")
        if not args.no_figures:
            from .plotting import render_figures

            out = Path(args.out)
            for fig in render_figures(report, out.parent, out.stem):
                print(f"wrote {fig}")
    return EXIT_OK


def cmd_transcripts(args: argparse.Namespace) -> int:
    if args.action == "export":
        if not args.archive:
            raise ConfigError("export needs --archive")
        if not Path(args.store).exists():
            raise ConfigError(f"transcript store not found: {args.store}")
        n = export_transcripts(TranscriptStore(args.store), args.archive)
        print(f"exported {n} records to {args.archive}")
    elif args.action == "import":
        if not args.archive:
            raise ConfigError("import needs --archive")
        try:
            store = import_transcripts(args.archive, into=args.store)
        except FileNotFoundError as exc:
            raise ConfigError(f"archive not found: {args.archive}") from exc
        print(f"imported {len(store)} records into {args.store}")
    else:
        if not Path(args.store).exists():
            raise ConfigError(f"transcript store not found: {args.store}")
        store = TranscriptStore(args.store)
        print(f"records={len(store)}")
        counts = store.role_counts()
        for role in Role:
            print(f"{role.value}={counts[role.value]}")
    return EXIT_OK


def cmd_fixture(args: argparse.Namespace) -> int:
    pairs = generate_synthetic_corpus(args.per_concept, args.seed)
    write_corpus(pairs, args.out)
    print(f"wrote {len(pairs)} pairs to {args.out}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CorruptArchiveError as exc:
        print(f"knowtag: corrupt archive: {exc}", file=sys.stderr)
        return EXIT_CORRUPT_ARCHIVE
    except (KnowtagError, OSError) as exc:
        print(f"knowtag: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
