"""Iterative citation snowballing.

Each iteration expands a frontier (the seeds at first, then whatever the
previous iteration approved) through one or more citation sources, folds
the neighbours back into the store as candidates, and hands the batch to
screening. The loop stops at the fixed point: an iteration that approves
nothing.

Source calls fan out across a thread pool, but results are applied in a
fixed order so that two runs over the same graph produce byte-identical
stores.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import metascreen
from .errors import CapabilityError, ScreeningError, SourceError, StoreError
from .models import Article, IterationRecord, IterationReport, RawRecord, State
from .screening import ScreeningEngine, iteration_reports
from .sources import CITATIONS, REFERENCES, SourceAdapter, consolidate
from .store import ReviewStore
from .textnorm import normalize_text

logger = logging.getLogger(__name__)

FORWARD = "forward"
BACKWARD = "backward"
BOTH = "both"
DIRECTIONS = (FORWARD, BACKWARD, BOTH)

_DIRECTION_CAPS = {FORWARD: CITATIONS, BACKWARD: REFERENCES}


@dataclass
class IterationPlan:
    iteration_number: int
    direction: str
    frontier: list[Article] = field(default_factory=list)


@dataclass
class ExpandResult:
    iteration_number: int
    new_candidates: int = 0
    duplicates_skipped: int = 0
    warnings: list[str] = field(default_factory=list)


@dataclass
class RunResult:
    converged: bool
    iterations_run: int
    reports: list[IterationReport] = field(default_factory=list)


def build_plan(store: ReviewStore, iteration_number: int, direction: str) -> IterationPlan:
    """Frontier for the iteration: the live seeds for iteration 1, then
    the articles the previous iteration left included."""
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if iteration_number < 1:
        raise ValueError(f"iteration numbers start at 1, got {iteration_number}")
    if iteration_number == 1:
        frontier = [
            a
            for a in store.query(iteration=0)
            if a.state not in State.REJECTED and a.state != State.DUPLICATE
        ]
    else:
        frontier = store.query(states={State.INCLUDED}, iteration=iteration_number - 1)
    frontier.sort(key=lambda a: (a.normalized_title, a.id))
    return IterationPlan(iteration_number=iteration_number, direction=direction, frontier=frontier)


def _expand_directions(direction: str) -> list[str]:
    return [BACKWARD, FORWARD] if direction == BOTH else [direction]


def _resolve_record(article: Article, adapter: SourceAdapter) -> RawRecord | None:
    """Find the adapter's own handle for an article we already hold."""
    source_id = article.source_ids.get(adapter.name)
    if source_id is not None:
        return RawRecord(source=adapter.name, source_id=source_id, title=article.title, doi=article.doi)
    query = article.doi or article.title
    hits = adapter.lookup(query, k=1)
    if not hits:
        return None
    return hits[0]


def _fetch_task(article: Article, adapter: SourceAdapter, direction: str):
    record = _resolve_record(article, adapter)
    if record is None:
        return None, []
    return record, adapter.neighbors(record, direction)


def expand(
    store: ReviewStore,
    adapters: Sequence[SourceAdapter],
    plan: IterationPlan,
    *,
    workers: int = 4,
    source_tiers: dict[str, int] | None = None,
) -> ExpandResult:
    """Pull neighbours for every frontier article and upsert them as
    candidates of this iteration.

    A source failing for one frontier article degrades to a warning; the
    iteration is then marked partially expanded rather than lost.
    """
    if not plan.frontier:
        raise StoreError(f"iteration {plan.iteration_number} has an empty frontier")
    existing = store.iteration_record(plan.iteration_number)
    if existing is not None and existing.expanded:
        raise StoreError(f"iteration {plan.iteration_number} was already expanded")
    if not adapters:
        raise SourceError("no sources configured")
    directions = _expand_directions(plan.direction)
    capable: dict[str, list[SourceAdapter]] = {}
    for direction in directions:
        capable[direction] = [a for a in adapters if a.supports(_DIRECTION_CAPS[direction])]
        if not capable[direction]:
            names = ", ".join(a.name for a in adapters)
            raise CapabilityError(f"no configured source supports {direction} expansion ({names})")

    tasks = []
    for article in plan.frontier:
        for direction in directions:
            for adapter in capable[direction]:
                tasks.append((article, adapter, direction))

    outcomes: dict[int, tuple] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = {
            pool.submit(_fetch_task, article, adapter, direction): idx
            for idx, (article, adapter, direction) in enumerate(tasks)
        }
        for future, idx in futures.items():
            try:
                outcomes[idx] = (future.result(), None)
            except (SourceError, CapabilityError) as exc:
                outcomes[idx] = (None, exc)

    result = ExpandResult(iteration_number=plan.iteration_number)
    # Group fetched neighbours per frontier article, then apply in frontier
    # order so the store sees a reproducible insertion sequence.
    for frontier_idx, article in enumerate(plan.frontier):
        groups: dict[str, list[RawRecord]] = {}
        group_dirs: dict[str, set[str]] = {}
        for idx, (task_article, adapter, direction) in enumerate(tasks):
            if task_article is not article:
                continue
            payload, error = outcomes[idx]
            if error is not None:
                message = f"{adapter.name} failed for {article.id} ({direction}): {error}"
                logger.warning(message)
                result.warnings.append(message)
                continue
            resolved, neighbors = payload
            if resolved is None:
                message = f"{adapter.name} has no record matching {article.id}"
                logger.warning(message)
                result.warnings.append(message)
                continue
            article.source_ids.setdefault(resolved.source, resolved.source_id)
            if article.doi is None and resolved.doi:
                article.doi = resolved.doi
            for record in neighbors:
                key = f"doi:{record.doi.casefold()}" if record.doi else f"title:{normalize_text(record.title)}"
                groups.setdefault(key, []).append(record)
                group_dirs.setdefault(key, set()).add(direction)
        candidates = []
        for key, records in groups.items():
            candidate = consolidate(
                records,
                discovered_in_iteration=plan.iteration_number,
                discovered_via=group_dirs[key],
                source_tiers=source_tiers,
            )
            candidates.append(candidate)
        candidates.sort(key=lambda a: (a.normalized_title, a.id))
        for candidate in candidates:
            _, was_new = store.upsert_article(candidate, actor="snowball")
            if was_new:
                result.new_candidates += 1
            else:
                result.duplicates_skipped += 1

    store.put_iteration_record(
        IterationRecord(
            iteration_number=plan.iteration_number,
            direction=plan.direction,
            frontier=[a.id for a in plan.frontier],
            expanded=True,
            new_candidates=result.new_candidates,
            duplicates_skipped=result.duplicates_skipped,
            warnings=list(result.warnings),
        )
    )
    if store.path is not None:
        store.save()
    return result


def has_converged(store: ReviewStore, iteration_number: int) -> bool:
    """True once a fully screened iteration approved nothing new."""
    batch = store.query(iteration=iteration_number)
    record = store.iteration_record(iteration_number)
    if record is None and not batch:
        raise StoreError(f"iteration {iteration_number} has not run")
    pending = [a for a in batch if a.state in State.PENDING]
    if pending:
        raise ScreeningError(
            f"iteration {iteration_number} still has {len(pending)} unscreened articles"
        )
    return not any(a.state in State.APPROVED for a in batch)


ScreenDriver = Callable[[ReviewStore, int], None]


def auto_screen_driver(
    raters: Sequence[str],
    policy: str | Callable[[Article, str], str],
    *,
    criteria: metascreen.ScreenCriteria | None = None,
    rank_lookup: metascreen.RankLookup | None = None,
    abstract_stage: bool = False,
) -> ScreenDriver:
    """Screening driver for unattended runs: every rater votes the
    policy's verdict, so stages close without conflicts."""
    if isinstance(policy, str):
        fixed = policy

        def decide(article: Article, stage: str) -> str:
            return fixed

    else:
        decide = policy

    def drive(store: ReviewStore, iteration_number: int) -> None:
        lookup = rank_lookup or (lambda venue: None)
        metascreen.screen(store, criteria or metascreen.ScreenCriteria(), lookup)
        engine = ScreeningEngine(store, list(raters), abstract_stage=abstract_stage)
        for stage in engine.stages():
            for article in engine._stage_articles(stage):
                verdict = decide(article, stage)
                for rater in engine.raters:
                    engine.decide(rater, article.id, stage, verdict)
            engine.close_stage(stage)

    return drive


def run_until_converged(
    store: ReviewStore,
    adapters: Sequence[SourceAdapter],
    direction: str,
    screen_driver: ScreenDriver,
    *,
    max_iterations: int = 20,
    workers: int = 4,
    source_tiers: dict[str, int] | None = None,
) -> RunResult:
    """Expand and screen until an iteration approves nothing, or the
    iteration budget runs out (reported, not raised)."""
    if max_iterations < 1:
        raise ValueError(f"max_iterations must be positive, got {max_iterations}")
    converged = False
    iterations_run = 0
    start = max(store.iteration_numbers(), default=0) + 1
    for n in range(start, start + max_iterations):
        plan = build_plan(store, n, direction)
        if not plan.frontier:
            converged = True
            break
        expand(store, adapters, plan, workers=workers, source_tiers=source_tiers)
        screen_driver(store, n)
        iterations_run += 1
        if has_converged(store, n):
            converged = True
            break
    if store.path is not None:
        store.save()
    return RunResult(converged=converged, iterations_run=iterations_run, reports=iteration_reports(store))
