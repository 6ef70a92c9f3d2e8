"""Manual screening stages, conflict handling, duplicate consolidation
and the per-iteration efficiency report.

Raters work blind: the queue and decide paths never reveal what anyone
else voted. Votes only become visible when a stage closes, and an
article advances only on a unanimous verdict. Anything short of
unanimity is a conflict that a named resolver settles explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ScreeningError
from .metascreen import ScreenCriteria, missing_metadata
from .models import (
    STAGE_STATES,
    STAGES,
    Article,
    DuplicateResolution,
    IterationReport,
    ScreeningDecision,
    State,
)
from .store import ReviewStore
from .venues import title_similarity

INCLUDE = "include"
EXCLUDE = "exclude"
VERDICTS = (INCLUDE, EXCLUDE)

DEFAULT_DUPLICATE_THRESHOLD = 0.9


@dataclass
class Conflict:
    article_id: str
    stage: str
    verdicts: dict[str, str]

    def to_dict(self) -> dict:
        return {"article_id": self.article_id, "stage": self.stage, "verdicts": dict(self.verdicts)}


@dataclass
class StageCloseResult:
    stage: str
    advanced: list[str] = field(default_factory=list)
    rejected: list[str] = field(default_factory=list)
    conflicts: list[Conflict] = field(default_factory=list)


@dataclass
class DuplicatePair:
    article_a: str
    article_b: str
    similarity: float

    def to_dict(self) -> dict:
        return {
            "article_a": self.article_a,
            "article_b": self.article_b,
            "similarity": round(self.similarity, 6),
        }


class ScreeningEngine:
    """Drives the human screening stages over a review store."""

    def __init__(
        self,
        store: ReviewStore,
        raters: list[str],
        *,
        abstract_stage: bool = False,
        criteria: ScreenCriteria | None = None,
    ):
        if len(raters) < 2:
            raise ScreeningError("screening needs at least two raters")
        if len(set(raters)) != len(raters):
            raise ScreeningError("rater names must be distinct")
        self.store = store
        self.raters = list(raters)
        self.abstract_stage = abstract_stage
        self.criteria = criteria

    # -- stages ------------------------------------------------------

    def stages(self) -> list[str]:
        if self.abstract_stage:
            return list(STAGES)
        return ["title", "fulltext"]

    def _check_stage(self, stage: str) -> None:
        if stage not in self.stages():
            raise ScreeningError(f"stage {stage!r} is not enabled")

    def _next_state(self, stage: str) -> str:
        order = self.stages()
        idx = order.index(stage)
        if idx + 1 < len(order):
            return STAGE_STATES[order[idx + 1]][0]
        return State.INCLUDED

    def _stage_articles(self, stage: str) -> list[Article]:
        active, _ = STAGE_STATES[stage]
        return self.store.query(states={active})

    # -- rater-facing ------------------------------------------------

    def queue(self, rater: str, stage: str) -> list[dict]:
        """Articles at this stage the rater has not yet decided. Never
        includes anyone else's verdicts."""
        self._check_stage(stage)
        if rater not in self.raters:
            raise ScreeningError(f"unknown rater {rater!r}")
        items = []
        for article in self._stage_articles(stage):
            if self.store.decisions_for(article.id, stage=stage, rater=rater):
                continue
            item = {
                "article_id": article.id,
                "title": article.title,
                "authors": list(article.authors),
                "year": article.year,
                "venue": article.venue,
                "url": article.url,
                "doi": article.doi,
            }
            if stage != "title":
                item["abstract"] = article.abstract
            if self.criteria is not None:
                gaps = missing_metadata(article, self.criteria)
                if gaps:
                    item["missing_metadata"] = gaps
            items.append(item)
        return items

    def decide(self, rater: str, article_id: str, stage: str, verdict: str, *, amend: bool = False) -> None:
        self._check_stage(stage)
        if rater not in self.raters:
            raise ScreeningError(f"unknown rater {rater!r}")
        if verdict not in VERDICTS:
            raise ScreeningError(f"verdict must be one of {VERDICTS}, got {verdict!r}")
        article = self.store.get(article_id)
        active, _ = STAGE_STATES[stage]
        if article.state != active:
            raise ScreeningError(
                f"article {article_id} is {article.state}, not awaiting the {stage} screen"
            )
        decision = ScreeningDecision(
            article_id=article_id,
            stage=stage,
            rater=rater,
            verdict=verdict,
            timestamp=self.store.clock(),
        )
        self.store.record_decision(decision, amend=amend)

    # -- closure -----------------------------------------------------

    def _verdicts(self, article_id: str, stage: str) -> dict[str, str]:
        out = {}
        for d in self.store.decisions_for(article_id, stage=stage, consensus=False):
            if d.rater in self.raters:
                out[d.rater] = d.verdict
        return out

    def close_stage(self, stage: str, *, actor: str = "screen") -> StageCloseResult:
        """Apply unanimous verdicts; surface the rest as conflicts.

        Every rater must have voted on every article still at the stage,
        otherwise nothing moves and the missing pairs are reported.
        """
        self._check_stage(stage)
        articles = self._stage_articles(stage)
        missing = []
        for article in articles:
            verdicts = self._verdicts(article.id, stage)
            for rater in self.raters:
                if rater not in verdicts:
                    missing.append(f"{rater}:{article.id}")
        if missing:
            raise ScreeningError(
                f"cannot close {stage} stage, undecided: " + ", ".join(sorted(missing))
            )
        result = StageCloseResult(stage=stage)
        _, rejected_state = STAGE_STATES[stage]
        for article in articles:
            verdicts = self._verdicts(article.id, stage)
            values = set(verdicts.values())
            if values == {INCLUDE}:
                self.store.transition(article.id, self._next_state(stage), actor)
                result.advanced.append(article.id)
            elif values == {EXCLUDE}:
                self.store.transition(article.id, rejected_state, actor)
                result.rejected.append(article.id)
            else:
                result.conflicts.append(Conflict(article.id, stage, verdicts))
        return result

    def open_conflicts(self, stage: str | None = None) -> list[Conflict]:
        """Articles whose raters have all voted but disagree."""
        stages = [stage] if stage is not None else self.stages()
        conflicts = []
        for s in stages:
            self._check_stage(s)
            for article in self._stage_articles(s):
                verdicts = self._verdicts(article.id, s)
                if set(verdicts) != set(self.raters):
                    continue
                if len(set(verdicts.values())) > 1:
                    conflicts.append(Conflict(article.id, s, verdicts))
        return conflicts

    def resolve_conflict(self, article_id: str, stage: str, verdict: str, resolved_by: str) -> None:
        """Settle a split vote with a recorded consensus decision."""
        self._check_stage(stage)
        if verdict not in VERDICTS:
            raise ScreeningError(f"verdict must be one of {VERDICTS}, got {verdict!r}")
        article = self.store.get(article_id)
        active, rejected_state = STAGE_STATES[stage]
        if article.state != active:
            raise ScreeningError(f"article {article_id} is not awaiting the {stage} screen")
        verdicts = self._verdicts(article_id, stage)
        if set(verdicts) != set(self.raters):
            raise ScreeningError(f"article {article_id} still has undecided raters")
        if len(set(verdicts.values())) == 1:
            raise ScreeningError(f"article {article_id} is not in conflict at the {stage} stage")
        decision = ScreeningDecision(
            article_id=article_id,
            stage=stage,
            rater=resolved_by,
            verdict=verdict,
            timestamp=self.store.clock(),
            is_consensus=True,
        )
        self.store.record_decision(decision)
        if verdict == INCLUDE:
            self.store.transition(article_id, self._next_state(stage), resolved_by)
        else:
            self.store.transition(article_id, rejected_state, resolved_by)

    # -- duplicates --------------------------------------------------

    def duplicate_scan(self, threshold: float = DEFAULT_DUPLICATE_THRESHOLD) -> list[DuplicatePair]:
        """Unresolved near-duplicate title pairs among included articles,
        most similar first."""
        if not 0.0 < threshold <= 1.0:
            raise ScreeningError(f"threshold must be in (0, 1], got {threshold}")
        included = self.store.query(states={State.INCLUDED})
        pairs = []
        for i, a in enumerate(included):
            for b in included[i + 1 :]:
                if self.store.find_duplicate_resolution(a.id, b.id):
                    continue
                score = title_similarity(a.title, b.title)
                if score >= threshold:
                    first, second = sorted((a.id, b.id))
                    pairs.append(DuplicatePair(first, second, score))
        pairs.sort(key=lambda p: (-p.similarity, p.article_a, p.article_b))
        return pairs

    def resolve_duplicate(
        self,
        article_a: str,
        article_b: str,
        resolution: str,
        resolved_by: str,
        *,
        similarity: float | None = None,
    ) -> str | None:
        """Record a verdict on a flagged pair. For "same" the article with
        poorer metadata folds into the other; returns the id that was
        demoted, or None for "different"."""
        if resolution not in ("same", "different"):
            raise ScreeningError(f"resolution must be same or different, got {resolution!r}")
        a = self.store.get(article_a)
        b = self.store.get(article_b)
        if self.store.find_duplicate_resolution(article_a, article_b):
            raise ScreeningError(f"pair {article_a}/{article_b} was already resolved")
        if similarity is None:
            similarity = title_similarity(a.title, b.title)
        record = DuplicateResolution(
            article_a=min(article_a, article_b),
            article_b=max(article_a, article_b),
            resolution=resolution,
            resolved_by=resolved_by,
            timestamp=self.store.clock(),
            similarity=similarity,
        )
        demoted = None
        if resolution == "same":
            if a.state != State.INCLUDED or b.state != State.INCLUDED:
                raise ScreeningError("both articles must be included to merge them")
            loser, winner = _pick_duplicate(a, b)
            self.store.transition(loser.id, State.DUPLICATE, resolved_by, duplicate_of=winner.id)
            demoted = loser.id
        self.store.add_duplicate_resolution(record)
        return demoted

    # -- reporting ---------------------------------------------------

    def iteration_reports(self) -> list[IterationReport]:
        return iteration_reports(self.store)

    def consolidate_final(
        self, out_base: str, *, threshold: float = DEFAULT_DUPLICATE_THRESHOLD, force: bool = False
    ) -> dict[str, str]:
        """Export the final included set once the review has settled.

        Refuses while screening work is outstanding: pending articles,
        open conflicts or unresolved near-duplicate pairs.
        """
        if not force:
            pending = self.store.query(states=State.PENDING)
            if pending:
                raise ScreeningError(
                    f"{len(pending)} articles still await screening, e.g. {pending[0].id}"
                )
            conflicts = self.open_conflicts()
            if conflicts:
                names = ", ".join(c.article_id for c in conflicts)
                raise ScreeningError("unresolved conflicts: " + names)
            pairs = self.duplicate_scan(threshold)
            if pairs:
                names = ", ".join(f"{p.article_a}/{p.article_b}" for p in pairs)
                raise ScreeningError("unresolved duplicate pairs: " + names)
        articles = sorted(
            self.store.query(states={State.INCLUDED}),
            key=lambda a: (a.normalized_title, a.id),
        )
        csv_path = out_base + ".csv"
        bib_path = out_base + ".bib"
        self.store.export_csv(csv_path, articles)
        self.store.export_bibtex(bib_path, articles)
        return {"csv": csv_path, "bibtex": bib_path, "count": str(len(articles))}


def _pick_duplicate(a: Article, b: Article) -> tuple[Article, Article]:
    """(loser, winner): fewer filled fields loses, ties broken by later
    discovery iteration, then id."""

    def key(article: Article):
        return (article.filled_field_count(), -article.discovered_in_iteration, article.id)

    loser = min(a, b, key=key)
    winner = b if loser is a else a
    return loser, winner


def iteration_reports(store: ReviewStore) -> list[IterationReport]:
    """Per-iteration retrieved/rejected/approved counts from article
    states, one row per snowball iteration."""
    articles = [a for a in store.query() if a.discovered_in_iteration >= 1]
    last = 0
    for a in articles:
        last = max(last, a.discovered_in_iteration)
    for n in store.iteration_numbers():
        last = max(last, n)
    screening_rejected = {State.TITLE_REJECTED, State.ABSTRACT_REJECTED, State.FULL_REJECTED}
    reports = []
    for n in range(1, last + 1):
        batch = [a for a in articles if a.discovered_in_iteration == n]
        reports.append(
            IterationReport(
                iteration_number=n,
                retrieved=len(batch),
                rejected_metadata=sum(1 for a in batch if a.state == State.METADATA_REJECTED),
                rejected_screening=sum(1 for a in batch if a.state in screening_rejected),
                approved=sum(1 for a in batch if a.state in State.APPROVED),
            )
        )
    return reports


def totals_row(reports: list[IterationReport]) -> IterationReport:
    return IterationReport(
        iteration_number=0,
        retrieved=sum(r.retrieved for r in reports),
        rejected_metadata=sum(r.rejected_metadata for r in reports),
        rejected_screening=sum(r.rejected_screening for r in reports),
        approved=sum(r.approved for r in reports),
    )
