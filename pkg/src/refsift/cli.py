"""Command-line entry point.

One subcommand per pipeline step; `--json` switches the human output to
machine-readable records so scripts and the HTTP layer can share the
same code paths.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analysis, metascreen, reporting, snowball
from .config import ReviewConfig, load_config
from .errors import RefsiftError
from .models import DocumentText, State, Topic
from .screening import DEFAULT_DUPLICATE_THRESHOLD, ScreeningEngine
from .sources import SourceAdapter
from .sources.web import DblpSource, ScholarWebSource, SemanticScholarSource
from .store import ReviewStore, init_store
from .venues import VenueRanker

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refsift", description="Snowballing literature review assistant")
    parser.add_argument("--config", help="path to the YAML config file")
    parser.add_argument("--store", help="override the store path from the config")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a review store from seed titles")
    p.add_argument("--seeds", required=True, help="text file, one seed title per line")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("snowball", help="expand the next iteration from the citation sources")
    p.add_argument("--direction", choices=snowball.DIRECTIONS)
    p.add_argument("--workers", type=int)

    sub.add_parser("screen-metadata", help="apply the automated metadata filters")

    p = sub.add_parser("rank-venues", help="venue ranking worklist and assignments")
    p.add_argument("--suggest", metavar="VENUE", help="show closest ranked venues per source")
    p.add_argument("-k", type=int, help="suggestions per source")
    p.add_argument("--set", nargs=2, metavar=("VENUE", "RANK"), help="record a venue rank")
    p.add_argument("--source", default="manual")
    p.add_argument("--by", default="cli")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("screen", help="manual screening queue and decisions")
    p.add_argument("--rater", help="acting rater")
    p.add_argument("--stage", default="title")
    p.add_argument("--list", action="store_true", help="print the rater's queue")
    p.add_argument("--decide", metavar="ARTICLE_ID")
    p.add_argument("--verdict", choices=("include", "exclude"))
    p.add_argument("--amend", action="store_true")
    p.add_argument("--close", action="store_true", help="close the stage once every rater is done")

    p = sub.add_parser("conflicts", help="list split votes awaiting consensus")
    p.add_argument("--stage")

    p = sub.add_parser("consensus", help="settle a conflict")
    p.add_argument("article_id")
    p.add_argument("--stage", required=True)
    p.add_argument("--verdict", required=True, choices=("include", "exclude"))
    p.add_argument("--by", required=True)

    p = sub.add_parser("dedup", help="near-duplicate pairs among included articles")
    p.add_argument("--threshold", type=float)
    p.add_argument("--resolve", nargs=2, metavar=("ID_A", "ID_B"))
    p.add_argument("--as", dest="resolution", choices=("same", "different"))
    p.add_argument("--by", default="cli")

    p = sub.add_parser("consolidate", help="export the final included set")
    p.add_argument("--out", required=True, help="output base path (.csv and .bib are added)")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("extract", help="extract plain text from downloaded articles")
    p.add_argument("--article", help="article id")
    p.add_argument("--file", help="pdf or txt file for --article")
    p.add_argument("--dir", help="directory of <article_id>.pdf/.txt files")
    p.add_argument("--out-dir", help="write extracted text here")

    p = sub.add_parser("topics", help="topic modeling pipeline")
    tsub = p.add_subparsers(dest="topics_command", required=True)
    tp = tsub.add_parser("generate")
    tp.add_argument("--texts", required=True, help="directory of extracted .txt files")
    tp.add_argument("--sample-size", type=int)
    tp.add_argument("--out", required=True)
    tp.add_argument("--mock-script", help="JSON list of scripted model responses")
    tp = tsub.add_parser("refine")
    tp.add_argument("--topics", required=True)
    tp.add_argument("--threshold", type=float)
    tp.add_argument("--out", required=True)
    tp.add_argument("--mock-script")
    tp = tsub.add_parser("assign")
    tp.add_argument("--texts", required=True)
    tp.add_argument("--topics", required=True)
    tp.add_argument("--mode", choices=("closed", "open"), default="closed")
    tp.add_argument("--task", default="topics")
    tp.add_argument("--out", required=True)
    tp.add_argument("--mock-script")

    p = sub.add_parser("ask", help="run a task prompt over extracted articles")
    p.add_argument("--texts", required=True)
    p.add_argument("--prompt-file", required=True)
    p.add_argument("--task", default="task")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--mock-script")

    p = sub.add_parser("eval", help="score pipeline output against ground truth")
    esub = p.add_subparsers(dest="eval_command", required=True)
    ep = esub.add_parser("assignments")
    ep.add_argument("--pred", required=True)
    ep.add_argument("--truth", required=True)
    ep.add_argument("--micro", action="store_true")
    ep = esub.add_parser("rubric")
    ep.add_argument("--scores", required=True)

    p = sub.add_parser("report", help="per-iteration efficiency report")
    p.add_argument("--csv", help="also write the rows to this CSV file")
    p.add_argument("--figures", help="also render charts into this directory")

    p = sub.add_parser("serve", help="run the local screening service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8722)
    p.add_argument("--token", help="require this bearer token on every request")

    return parser


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    elif human:
        print(human)


def _open_store(args, config: ReviewConfig, writable: bool = True) -> ReviewStore:
    return ReviewStore.open(config.store_path, writable=writable)


def _build_adapters(config: ReviewConfig) -> list[SourceAdapter]:
    adapters: list[SourceAdapter] = []
    for name in config.sources:
        settings = config.source_settings.get(name, {})
        if name == "semantic-scholar":
            adapters.append(SemanticScholarSource(**settings))
        elif name == "dblp":
            adapters.append(DblpSource(**settings))
        elif name == "scholar-web":
            adapters.append(ScholarWebSource(**settings))
        elif name == "mock":
            raise RefsiftError("the mock source is only available programmatically")
    return adapters


def _ranker(store: ReviewStore, config: ReviewConfig) -> VenueRanker:
    ranker = VenueRanker(store, featurizer=config.venue_featurizer)
    for name, path in sorted(config.rank_tables.items()):
        ranker.load_table(name, path)
    return ranker


def _engine(store: ReviewStore, config: ReviewConfig) -> ScreeningEngine:
    return ScreeningEngine(
        store,
        config.raters,
        abstract_stage=config.abstract_stage,
        criteria=config.screen_criteria() if config.screen else None,
    )


def _session(args, config: ReviewConfig) -> analysis.ModelSession:
    script_path = getattr(args, "mock_script", None)
    if script_path:
        script = json.loads(Path(script_path).read_text(encoding="utf-8"))
        model: analysis.ChatModel = analysis.MockChatModel(script=script)
    else:
        model = analysis.HttpChatModel(config.model, config.model_base_url)
    audit_path = config.store_path + ".llm-audit.jsonl"
    return analysis.ModelSession(
        model, audit_path=audit_path, temperature=config.temperature, seed=config.seed
    )


def _load_texts(directory: str) -> list[DocumentText]:
    docs = []
    for path in sorted(Path(directory).glob("*.txt")):
        text = path.read_text(encoding="utf-8")
        if not text.strip():
            continue
        docs.append(
            DocumentText(
                article_id=path.stem,
                text=text,
                token_estimate=analysis.estimate_tokens(text),
                extraction_source="sidecar-text",
            )
        )
    if not docs:
        raise RefsiftError(f"no .txt documents under {directory}")
    return docs


def _load_topics(path: str) -> list[Topic]:
    topics = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            data = json.loads(line)
            topics.append(
                Topic(
                    topic_id=data["topic_id"],
                    label=data["label"],
                    description=data.get("description", ""),
                    provisional=data.get("provisional", False),
                )
            )
    return topics


def _write_topics(path: str, topics: list[Topic]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for topic in topics:
            handle.write(json.dumps(topic.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")


def _load_assignment_sets(path: str) -> dict[str, set[str]]:
    """Either a JSON object {article: [topics]} or one assignment record
    per line with article_id and topic_ids."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
        if isinstance(data, dict):
            return {key: set(value) for key, value in data.items()}
    except json.JSONDecodeError:
        pass
    out: dict[str, set[str]] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        out[record["article_id"]] = set(record["topic_ids"])
    return out


# -- command handlers ------------------------------------------------


def cmd_init(args, config: ReviewConfig) -> int:
    seed_file = Path(args.seeds)
    titles = [
        line.strip()
        for line in seed_file.read_text(encoding="utf-8").splitlines()
        if line.strip() and not line.startswith("#")
    ]
    store = init_store(config.store_path, titles, config.to_dict(), force=args.force)
    with store:
        _emit(
            args,
            {"store": config.store_path, "seeds": len(titles)},
            f"created {config.store_path} with {len(titles)} seed articles",
        )
    return 0


def cmd_snowball(args, config: ReviewConfig) -> int:
    direction = args.direction or config.direction
    adapters = _build_adapters(config)
    with _open_store(args, config) as store:
        next_iteration = max(store.iteration_numbers(), default=0) + 1
        plan = snowball.build_plan(store, next_iteration, direction)
        result = snowball.expand(store, adapters, plan, workers=args.workers or config.workers)
        payload = {
            "iteration": result.iteration_number,
            "new_candidates": result.new_candidates,
            "duplicates_skipped": result.duplicates_skipped,
            "warnings": result.warnings,
        }
        lines = [
            f"iteration {result.iteration_number}: {result.new_candidates} new candidates, "
            f"{result.duplicates_skipped} already known"
        ]
        lines.extend(f"warning: {w}" for w in result.warnings)
        _emit(args, payload, "\n".join(lines))
    return 0


def cmd_screen_metadata(args, config: ReviewConfig) -> int:
    with _open_store(args, config) as store:
        ranker = _ranker(store, config)
        result = metascreen.screen(store, config.screen_criteria(), ranker.rank_of)
        store.save()
        reasons: dict[str, int] = {}
        for _, reason in result.rejected:
            reasons[reason] = reasons.get(reason, 0) + 1
        payload = {"passed": len(result.passed), "rejected": len(result.rejected), "by_reason": reasons}
        _emit(
            args,
            payload,
            f"{len(result.passed)} passed to title screening, {len(result.rejected)} rejected {reasons}",
        )
    return 0


def cmd_rank_venues(args, config: ReviewConfig) -> int:
    with _open_store(args, config, writable=args.set is not None) as store:
        ranker = _ranker(store, config)
        if args.set:
            venue, rank = args.set
            entry = ranker.record_ranking(venue, rank, args.source, args.by, force=args.force)
            store.save()
            _emit(args, entry.to_dict(), f"ranked {venue!r} as {rank} ({args.source})")
            return 0
        if args.suggest:
            suggestions = ranker.suggest(args.suggest, k=args.k or config.suggest_k)
            payload = {"suggestions": [s.to_dict() for s in suggestions]}
            lines = [
                f"{s.entry.source:>14}  {s.score:.3f}  {s.entry.venue_name} [{s.entry.rank}]"
                for s in suggestions
            ]
            _emit(args, payload, "\n".join(lines) or "no suggestions")
            return 0
        pending = ranker.pending_venues()
        _emit(args, {"pending": pending}, "\n".join(pending) or "no venues awaiting a rank")
    return 0


def cmd_screen(args, config: ReviewConfig) -> int:
    mutating = bool(args.decide or args.close)
    with _open_store(args, config, writable=mutating) as store:
        engine = _engine(store, config)
        if args.decide:
            if not args.rater or not args.verdict:
                raise RefsiftError("--decide needs --rater and --verdict")
            engine.decide(args.rater, args.decide, args.stage, args.verdict, amend=args.amend)
            store.save()
            _emit(
                args,
                {"article_id": args.decide, "stage": args.stage, "verdict": args.verdict},
                f"recorded {args.verdict} for {args.decide}",
            )
            return 0
        if args.close:
            result = engine.close_stage(args.stage)
            store.save()
            payload = {
                "stage": result.stage,
                "advanced": result.advanced,
                "rejected": result.rejected,
                "conflicts": [c.to_dict() for c in result.conflicts],
            }
            _emit(
                args,
                payload,
                f"{args.stage} closed: {len(result.advanced)} advanced, "
                f"{len(result.rejected)} rejected, {len(result.conflicts)} conflicts",
            )
            return 0
        if not args.rater:
            raise RefsiftError("--rater is required to view a queue")
        queue = engine.queue(args.rater, args.stage)
        if args.json:
            _emit(args, {"queue": queue}, "")
        else:
            for position, item in enumerate(queue, 1):
                print(f"[{position}/{len(queue)}] {item['article_id']}  {item['title']}")
                if item.get("url"):
                    print(f"    {item['url']}")
            if not queue:
                print("queue is empty")
    return 0


def cmd_conflicts(args, config: ReviewConfig) -> int:
    with _open_store(args, config, writable=False) as store:
        engine = _engine(store, config)
        conflicts = engine.open_conflicts(args.stage)
        payload = {"conflicts": [c.to_dict() for c in conflicts]}
        lines = [f"{c.article_id} ({c.stage}): {c.verdicts}" for c in conflicts]
        _emit(args, payload, "\n".join(lines) or "no open conflicts")
    return 0


def cmd_consensus(args, config: ReviewConfig) -> int:
    with _open_store(args, config) as store:
        engine = _engine(store, config)
        engine.resolve_conflict(args.article_id, args.stage, args.verdict, args.by)
        store.save()
        _emit(
            args,
            {"article_id": args.article_id, "verdict": args.verdict},
            f"consensus {args.verdict} recorded for {args.article_id}",
        )
    return 0


def cmd_dedup(args, config: ReviewConfig) -> int:
    threshold = args.threshold or config.duplicate_threshold
    with _open_store(args, config, writable=args.resolve is not None) as store:
        engine = _engine(store, config)
        if args.resolve:
            if not args.resolution:
                raise RefsiftError("--resolve needs --as same|different")
            demoted = engine.resolve_duplicate(args.resolve[0], args.resolve[1], args.resolution, args.by)
            store.save()
            message = f"marked {args.resolve[0]} / {args.resolve[1]} as {args.resolution}"
            if demoted:
                message += f"; {demoted} folded away"
            _emit(args, {"resolution": args.resolution, "demoted": demoted}, message)
            return 0
        pairs = engine.duplicate_scan(threshold)
        payload = {"pairs": [p.to_dict() for p in pairs]}
        lines = []
        for pair in pairs:
            a = store.get(pair.article_a)
            b = store.get(pair.article_b)
            lines.append(f"{pair.similarity:.3f}  {pair.article_a} {a.title!r}")
            lines.append(f"       {pair.article_b} {b.title!r}")
        _emit(args, payload, "\n".join(lines) or "no near-duplicates above threshold")
    return 0


def cmd_consolidate(args, config: ReviewConfig) -> int:
    with _open_store(args, config, writable=False) as store:
        engine = _engine(store, config)
        out = engine.consolidate_final(args.out, threshold=config.duplicate_threshold, force=args.force)
        _emit(args, out, f"{out['count']} articles written to {out['csv']} and {out['bibtex']}")
    return 0


def cmd_extract(args, config: ReviewConfig) -> int:
    with _open_store(args, config, writable=False) as store:
        extracted = []
        if args.dir:
            for path in sorted(Path(args.dir).iterdir()):
                if path.suffix.lower() not in (".pdf", ".txt"):
                    continue
                doc = analysis.fetch_and_extract(store, path.stem, str(path), out_dir=args.out_dir)
                extracted.append({"article_id": doc.article_id, "tokens": doc.token_estimate})
        else:
            if not args.article or not args.file:
                raise RefsiftError("pass --article and --file, or --dir")
            doc = analysis.fetch_and_extract(store, args.article, args.file, out_dir=args.out_dir)
            extracted.append({"article_id": doc.article_id, "tokens": doc.token_estimate})
        lines = [f"{d['article_id']}: ~{d['tokens']} tokens" for d in extracted]
        _emit(args, {"extracted": extracted}, "\n".join(lines))
    return 0


def cmd_topics(args, config: ReviewConfig) -> int:
    session = _session(args, config)
    if args.topics_command == "generate":
        docs = _load_texts(args.texts)
        topics = analysis.generate_topics(session, docs, sample_size=args.sample_size)
        _write_topics(args.out, topics)
        _emit(args, {"topics": len(topics), "out": args.out}, f"{len(topics)} topics -> {args.out}")
        return 0
    if args.topics_command == "refine":
        topics = _load_topics(args.topics)
        refined = analysis.refine_topics(session, topics, threshold=args.threshold or config.merge_threshold)
        _write_topics(args.out, refined)
        _emit(
            args,
            {"before": len(topics), "after": len(refined), "out": args.out},
            f"{len(topics)} topics -> {len(refined)} after refinement",
        )
        return 0
    docs = _load_texts(args.texts)
    topics = _load_topics(args.topics)
    with open(args.out, "w", encoding="utf-8") as handle:
        count = 0
        for doc in docs:
            assignment = analysis.assign_topics(session, doc, topics, mode=args.mode)
            assignment.task = args.task
            handle.write(json.dumps(assignment.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
            count += 1
    _emit(args, {"assignments": count, "out": args.out}, f"{count} assignments -> {args.out}")
    return 0


def cmd_ask(args, config: ReviewConfig) -> int:
    session = _session(args, config)
    docs = _load_texts(args.texts)
    prompt = Path(args.prompt_file).read_text(encoding="utf-8")
    records = analysis.run_task_over_corpus(
        session,
        docs,
        prompt,
        task_name=args.task,
        token_budget=config.token_budget,
        workers=args.workers,
        out_path=args.out,
    )
    _emit(args, {"answers": len(records), "out": args.out}, f"{len(records)} answers -> {args.out}")
    return 0


def cmd_eval(args, config: ReviewConfig) -> int:
    if args.eval_command == "assignments":
        predicted = _load_assignment_sets(args.pred)
        truth = _load_assignment_sets(args.truth)
        result = analysis.evaluate_assignments(
            predicted, truth, average="micro" if args.micro else "macro"
        )
        _emit(
            args,
            result,
            f"precision {result['precision']:.3f}  recall {result['recall']:.3f}",
        )
        return 0
    scores = analysis.load_rubric_csv(args.scores)
    aggregate = analysis.aggregate_rubric(scores)
    lines = [
        f"{criterion:<12} mean {stats['mean']:.3f}  std {stats['std']:.3f}  (n={stats['n']})"
        for criterion, stats in aggregate.items()
    ]
    _emit(args, aggregate, "\n".join(lines))
    return 0


def cmd_report(args, config: ReviewConfig) -> int:
    with _open_store(args, config, writable=False) as store:
        reports = snowball.iteration_reports(store)
        if args.csv:
            reporting.write_csv(args.csv, reports)
        figures = []
        if args.figures:
            figures = reporting.render_figures(args.figures, reports)
        payload = {"rows": reporting.report_rows(reports), "figures": figures}
        human = reporting.render_table(reports)
        if figures:
            human += "\nfigures: " + ", ".join(figures)
        _emit(args, payload, human)
    return 0


def cmd_serve(args, config: ReviewConfig) -> int:
    import uvicorn

    from .api import create_app

    app = create_app(config, token=args.token)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


HANDLERS = {
    "init": cmd_init,
    "snowball": cmd_snowball,
    "screen-metadata": cmd_screen_metadata,
    "rank-venues": cmd_rank_venues,
    "screen": cmd_screen,
    "conflicts": cmd_conflicts,
    "consensus": cmd_consensus,
    "dedup": cmd_dedup,
    "consolidate": cmd_consolidate,
    "extract": cmd_extract,
    "topics": cmd_topics,
    "ask": cmd_ask,
    "eval": cmd_eval,
    "report": cmd_report,
    "serve": cmd_serve,
}


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config)
        if args.store:
            config.store_path = args.store
        return HANDLERS[args.command](args, config)
    except RefsiftError as exc:
        if args.json:
            print(json.dumps(exc.payload(), sort_keys=True), file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
