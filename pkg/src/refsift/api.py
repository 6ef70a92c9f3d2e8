"""Local HTTP service for the screening companion UI.

Thin layer over the same engine the CLI uses: every endpoint validates
through identical code paths, so a verdict entered here and one entered
on the command line leave the store byte-identical. GET endpoints never
mutate. Long-running work (snowball expansion, topic batches) runs as a
background job, one per kind, polled via /jobs/{id}.
"""

from __future__ import annotations

import json
import threading
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import analysis, snowball
from .config import ReviewConfig
from .errors import RefsiftError, UnknownArticleError
from .models import DocumentText, State
from .reporting import report_rows
from .screening import ScreeningEngine
from .sources import SourceAdapter
from .store import ReviewStore, utc_now
from .venues import VenueRanker

UI_DIR = Path(__file__).with_name("ui")


class DecisionBody(BaseModel):
    rater: str
    article_id: str
    stage: str = "title"
    verdict: str
    amend: bool = False


class ConsensusBody(BaseModel):
    article_id: str
    stage: str
    verdict: str
    by: str


class VenueRankBody(BaseModel):
    venue: str
    rank: str
    source: str = "manual"
    by: str = "ui"
    similarity: float | None = None
    force: bool = False


class DuplicateBody(BaseModel):
    article_a: str
    article_b: str
    resolution: str
    by: str = "ui"


class SnowballJobBody(BaseModel):
    direction: str | None = None


class TopicsJobBody(BaseModel):
    texts_dir: str
    out: str
    sample_size: int | None = None
    mock_script: list[str] | None = None


class Job:
    def __init__(self, job_id: str, kind: str):
        self.id = job_id
        self.kind = kind
        self.status = "running"
        self.result: dict | None = None
        self.error: str | None = None
        self.started = utc_now()
        self.finished: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "status": self.status,
            "result": self.result,
            "error": self.error,
            "started": self.started,
            "finished": self.finished,
        }


class JobRegistry:
    def __init__(self):
        self._lock = threading.Lock()
        self._jobs: dict[str, Job] = {}
        self._counter = 0

    def start(self, kind: str, target) -> Job:
        with self._lock:
            for job in self._jobs.values():
                if job.kind == kind and job.status == "running":
                    raise RefsiftError(f"a {kind} job is already running ({job.id})")
            self._counter += 1
            job = Job(f"{kind}-{self._counter}", kind)
            self._jobs[job.id] = job

        def run():
            try:
                job.result = target()
                job.status = "done"
            except Exception as exc:  # surfaced via the status endpoint
                job.error = str(exc)
                job.status = "failed"
            job.finished = utc_now()

        thread = threading.Thread(target=run, name=job.id, daemon=True)
        thread.start()
        return job

    def get(self, job_id: str) -> Job:
        with self._lock:
            if job_id not in self._jobs:
                raise UnknownArticleError(job_id)
            return self._jobs[job_id]


def create_app(
    config: ReviewConfig,
    *,
    store: ReviewStore | None = None,
    adapters: list[SourceAdapter] | None = None,
    token: str | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    owns_store = store is None

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.store = store if store is not None else ReviewStore.open(config.store_path)
        yield
        app.state.store.save()
        if owns_store:
            app.state.store.close()

    async def check_token(request: Request):
        if token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or wrong token")

    app = FastAPI(title="refsift", lifespan=lifespan, dependencies=[Depends(check_token)])
    jobs = JobRegistry()

    @app.exception_handler(RefsiftError)
    async def refsift_error(request: Request, exc: RefsiftError):
        status = 404 if isinstance(exc, UnknownArticleError) else 400
        return JSONResponse(status_code=status, content=exc.payload())

    def get_store() -> ReviewStore:
        return app.state.store

    def engine() -> ScreeningEngine:
        return ScreeningEngine(
            get_store(),
            config.raters,
            abstract_stage=config.abstract_stage,
            criteria=config.screen_criteria() if config.screen else None,
        )

    def ranker() -> VenueRanker:
        built = VenueRanker(get_store(), featurizer=config.venue_featurizer)
        for name, path in sorted(config.rank_tables.items()):
            built.load_table(name, path)
        return built

    # -- read endpoints ----------------------------------------------

    @app.get("/articles")
    def articles(state: str | None = None):
        states = None
        if state is not None:
            if state not in State.ALL:
                raise RefsiftError(f"unknown state {state!r}")
            states = {state}
        return {"articles": [a.to_dict() for a in get_store().query(states=states)]}

    @app.get("/queue")
    def queue(rater: str, stage: str = "title"):
        items = engine().queue(rater, stage)
        return {"queue": items, "total": len(items)}

    @app.get("/conflicts")
    def conflicts(stage: str | None = None):
        return {"conflicts": [c.to_dict() for c in engine().open_conflicts(stage)]}

    @app.get("/venues/pending")
    def venues_pending():
        return {"pending": ranker().pending_venues()}

    @app.get("/venues/suggest")
    def venues_suggest(q: str, k: int | None = None):
        suggestions = ranker().suggest(q, k=k or config.suggest_k)
        return {"suggestions": [s.to_dict() for s in suggestions]}

    @app.get("/duplicates")
    def duplicates(threshold: float | None = None):
        pairs = engine().duplicate_scan(threshold or config.duplicate_threshold)
        store = get_store()
        out = []
        for pair in pairs:
            row = pair.to_dict()
            row["title_a"] = store.get(pair.article_a).title
            row["title_b"] = store.get(pair.article_b).title
            out.append(row)
        return {"pairs": out}

    @app.get("/report")
    def report():
        return {"rows": report_rows(snowball.iteration_reports(get_store()))}

    # -- mutations ---------------------------------------------------

    @app.post("/decisions")
    def post_decision(body: DecisionBody):
        engine().decide(body.rater, body.article_id, body.stage, body.verdict, amend=body.amend)
        get_store().save()
        return {"recorded": True, "article_id": body.article_id, "stage": body.stage}

    @app.post("/decisions/close")
    def post_close(stage: str = "title"):
        result = engine().close_stage(stage)
        get_store().save()
        return {
            "stage": result.stage,
            "advanced": result.advanced,
            "rejected": result.rejected,
            "conflicts": [c.to_dict() for c in result.conflicts],
        }

    @app.post("/consensus")
    def post_consensus(body: ConsensusBody):
        engine().resolve_conflict(body.article_id, body.stage, body.verdict, body.by)
        get_store().save()
        return {"resolved": body.article_id, "verdict": body.verdict}

    @app.post("/venues/rank")
    def post_venue_rank(body: VenueRankBody):
        entry = ranker().record_ranking(
            body.venue,
            body.rank,
            body.source,
            body.by,
            similarity_used=body.similarity,
            force=body.force,
        )
        get_store().save()
        return entry.to_dict()

    @app.post("/duplicates/resolve")
    def post_duplicate(body: DuplicateBody):
        demoted = engine().resolve_duplicate(body.article_a, body.article_b, body.resolution, body.by)
        get_store().save()
        return {"resolution": body.resolution, "demoted": demoted}

    # -- background jobs ---------------------------------------------

    @app.post("/jobs/snowball")
    def job_snowball(body: SnowballJobBody):
        from .cli import _build_adapters

        direction = body.direction or config.direction
        if direction not in snowball.DIRECTIONS:
            raise RefsiftError(f"direction must be one of {snowball.DIRECTIONS}")
        chosen = adapters if adapters is not None else _build_adapters(config)

        def work():
            store = get_store()
            with store._lock:
                n = max(store.iteration_numbers(), default=0) + 1
                plan = snowball.build_plan(store, n, direction)
                result = snowball.expand(store, chosen, plan, workers=config.workers)
            store.save()
            return {
                "iteration": result.iteration_number,
                "new_candidates": result.new_candidates,
                "duplicates_skipped": result.duplicates_skipped,
                "warnings": result.warnings,
            }

        return jobs.start("snowball", work).to_dict()

    @app.post("/jobs/topics")
    def job_topics(body: TopicsJobBody):
        if body.mock_script is not None:
            model: analysis.ChatModel = analysis.MockChatModel(script=body.mock_script)
        else:
            model = analysis.HttpChatModel(config.model, config.model_base_url)
        session = analysis.ModelSession(
            model,
            audit_path=config.store_path + ".llm-audit.jsonl",
            temperature=config.temperature,
            seed=config.seed,
        )

        def work():
            docs = []
            for path in sorted(Path(body.texts_dir).glob("*.txt")):
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
            topics = analysis.generate_topics(session, docs, sample_size=body.sample_size)
            refined = analysis.refine_topics(session, topics, threshold=config.merge_threshold)
            with open(body.out, "w", encoding="utf-8") as handle:
                for topic in refined:
                    handle.write(json.dumps(topic.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
            return {"topics": len(refined), "out": body.out}

        return jobs.start("topics", work).to_dict()

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        return jobs.get(job_id).to_dict()

    directory = Path(ui_dir) if ui_dir is not None else UI_DIR
    if directory.is_dir():
        app.mount("/", StaticFiles(directory=directory, html=True), name="ui")

    return app
