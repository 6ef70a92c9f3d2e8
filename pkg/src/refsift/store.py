"""Single-file review store.

All articles, screening decisions, venue rankings, iteration records and the
append-only audit log live in one human-diffable JSONL file: a header line
carrying the schema version and review config, then one record per line in
insertion order with sorted keys. Rewrites are atomic (temp file + rename)
and the canonical form is byte-deterministic for a given operation sequence,
so long-lived reviews diff cleanly under version control.

Concurrency: single-writer, multi-reader. In-process mutations serialize
through one lock; a lock file refuses a second writing process.
"""

from __future__ import annotations

import csv
import json
import os
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

from .errors import (
    IllegalTransitionError,
    StoreError,
    StoreLockedError,
    UnknownArticleError,
)
from .models import (
    Article,
    AuditEntry,
    DuplicateResolution,
    IterationRecord,
    ScreeningDecision,
    State,
    VenueRankingEntry,
)
from .textnorm import normalize_text

SCHEMA_VERSION = 1

Clock = Callable[[], str]


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def _dump_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n"


@dataclass
class StoreSnapshot:
    schema_version: int = SCHEMA_VERSION
    config: dict = field(default_factory=dict)
    articles: list[Article] = field(default_factory=list)
    decisions: list[ScreeningDecision] = field(default_factory=list)
    venue_rankings: list[VenueRankingEntry] = field(default_factory=list)
    audit: list[AuditEntry] = field(default_factory=list)
    iterations: list[IterationRecord] = field(default_factory=list)
    duplicate_resolutions: list[DuplicateResolution] = field(default_factory=list)

    def serialize(self) -> str:
        lines = [
            _dump_line(
                {"kind": "header", "schema_version": self.schema_version, "config": self.config}
            )
        ]
        for article in self.articles:
            lines.append(_dump_line({"kind": "article", **article.to_dict()}))
        for decision in self.decisions:
            lines.append(_dump_line({"kind": "decision", **decision.to_dict()}))
        for entry in self.venue_rankings:
            lines.append(_dump_line({"kind": "venue", **entry.to_dict()}))
        for record in self.iterations:
            lines.append(_dump_line({"kind": "iteration", **record.to_dict()}))
        for resolution in self.duplicate_resolutions:
            lines.append(_dump_line({"kind": "dup", **resolution.to_dict()}))
        for entry in self.audit:
            lines.append(_dump_line({"kind": "audit", **entry.to_dict()}))
        return "".join(lines)

    @classmethod
    def deserialize(cls, text: str) -> "StoreSnapshot":
        lines = [line for line in text.split("\n") if line.strip()]
        if not lines:
            raise StoreError("store file is empty")
        header = json.loads(lines[0])
        if header.get("kind") != "header":
            raise StoreError("store file does not start with a header record")
        version = header.get("schema_version")
        if version != SCHEMA_VERSION:
            raise StoreError(
                f"unsupported store schema version {version} (expected {SCHEMA_VERSION})"
            )
        snapshot = cls(schema_version=version, config=header.get("config") or {})
        for lineno, line in enumerate(lines[1:], start=2):
            record = json.loads(line)
            kind = record.pop("kind", None)
            if kind == "article":
                snapshot.articles.append(Article.from_dict(record))
            elif kind == "decision":
                snapshot.decisions.append(ScreeningDecision.from_dict(record))
            elif kind == "venue":
                snapshot.venue_rankings.append(VenueRankingEntry.from_dict(record))
            elif kind == "iteration":
                snapshot.iterations.append(IterationRecord.from_dict(record))
            elif kind == "dup":
                snapshot.duplicate_resolutions.append(DuplicateResolution.from_dict(record))
            elif kind == "audit":
                snapshot.audit.append(AuditEntry.from_dict(record))
            else:
                raise StoreError(f"unknown record kind {kind!r} at line {lineno}")
        return snapshot


class ReviewStore:
    """Owns the snapshot plus lookup indexes; every mutation goes through
    the instance lock and lands in the audit log."""

    def __init__(self, path: Path | None, snapshot: StoreSnapshot, clock: Clock | None = None):
        self.path = Path(path) if path is not None else None
        self.snapshot = snapshot
        self.clock = clock or utc_now
        self._lock = threading.RLock()
        self._lockfile_held = False
        self._by_id: dict[str, Article] = {}
        self._by_doi: dict[str, str] = {}
        self._by_source: dict[tuple[str, str], str] = {}
        self._by_title: dict[str, str] = {}
        self._rebuild_indexes()

    # -- lifecycle ---------------------------------------------------------

    @classmethod
    def create(
        cls,
        path: Path | None,
        config: dict | None = None,
        *,
        force: bool = False,
        clock: Clock | None = None,
    ) -> "ReviewStore":
        if path is not None:
            path = Path(path)
            if path.exists() and not force:
                raise StoreError(f"store already exists at {path} (use force to overwrite)")
            path.parent.mkdir(parents=True, exist_ok=True)
        store = cls(path, StoreSnapshot(config=config or {}), clock=clock)
        store._acquire_lockfile()
        store.save()
        return store

    @classmethod
    def open(
        cls, path: Path, *, writable: bool = True, clock: Clock | None = None
    ) -> "ReviewStore":
        path = Path(path)
        if not path.exists():
            raise StoreError(f"no store found at {path}")
        snapshot = StoreSnapshot.deserialize(path.read_text(encoding="utf-8"))
        store = cls(path, snapshot, clock=clock)
        if writable:
            store._acquire_lockfile()
        return store

    def _lockfile_path(self) -> Path | None:
        if self.path is None:
            return None
        return self.path.with_name(self.path.name + ".lock")

    def _acquire_lockfile(self) -> None:
        lockfile = self._lockfile_path()
        if lockfile is None or self._lockfile_held:
            return
        try:
            fd = os.open(lockfile, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StoreLockedError(
                f"store is locked by another process ({lockfile}); "
                "remove the lock file if that process is gone"
            )
        with os.fdopen(fd, "w") as handle:
            handle.write(str(os.getpid()))
        self._lockfile_held = True

    def close(self) -> None:
        lockfile = self._lockfile_path()
        if lockfile is not None and self._lockfile_held:
            try:
                lockfile.unlink()
            except FileNotFoundError:
                pass
            self._lockfile_held = False

    def __enter__(self) -> "ReviewStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def save(self) -> None:
        if self.path is None:
            return
        with self._lock:
            tmp = self.path.with_name(self.path.name + ".tmp")
            tmp.write_text(self.snapshot.serialize(), encoding="utf-8")
            os.replace(tmp, self.path)

    # -- indexes -----------------------------------------------------------

    def _rebuild_indexes(self) -> None:
        self._by_id.clear()
        self._by_doi.clear()
        self._by_source.clear()
        self._by_title.clear()
        for article in self.snapshot.articles:
            self._index(article)

    def _index(self, article: Article) -> None:
        self._by_id[article.id] = article
        if article.doi:
            self._by_doi.setdefault(article.doi.strip().casefold(), article.id)
        for source, source_id in article.source_ids.items():
            self._by_source.setdefault((source, source_id), article.id)
        self._by_title.setdefault(article.normalized_title, article.id)

    def _find_existing(self, candidate: Article) -> Article | None:
        if candidate.doi:
            found = self._by_doi.get(candidate.doi.strip().casefold())
            if found:
                return self._by_id[found]
        for source, source_id in candidate.source_ids.items():
            found = self._by_source.get((source, source_id))
            if found:
                return self._by_id[found]
        found = self._by_title.get(candidate.normalized_title)
        if found:
            return self._by_id[found]
        return None

    # -- audit -------------------------------------------------------------

    def append_audit(
        self,
        actor: str,
        action: str,
        article_id: str | None = None,
        old_state: str | None = None,
        new_state: str | None = None,
        detail: dict | None = None,
    ) -> AuditEntry:
        with self._lock:
            entry = AuditEntry(
                seq=len(self.snapshot.audit) + 1,
                timestamp=self.clock(),
                actor=actor,
                action=action,
                article_id=article_id,
                old_state=old_state,
                new_state=new_state,
                detail=detail or {},
            )
            self.snapshot.audit.append(entry)
            return entry

    def replay_states(self) -> dict[str, tuple[str, str | None, str | None]]:
        """Reconstruct (state, state_reason, duplicate_of) per article purely
        from the audit log; the result must match the stored articles."""
        states: dict[str, tuple[str, str | None, str | None]] = {}
        for entry in self.snapshot.audit:
            if entry.action == "created":
                states[entry.article_id] = (entry.new_state or State.CANDIDATE, None, None)
            elif entry.action == "transition":
                if entry.article_id not in states:
                    raise StoreError(
                        f"audit replay: transition for unknown article {entry.article_id}"
                    )
                states[entry.article_id] = (
                    entry.new_state,
                    entry.detail.get("reason"),
                    entry.detail.get("duplicate_of"),
                )
        return states

    # -- articles ----------------------------------------------------------

    def init_seeds(self, seed_titles: Iterable[str], actor: str = "init") -> list[Article]:
        titles = [t.strip() for t in seed_titles if t and t.strip()]
        if not titles:
            raise StoreError("seed list is empty")
        created: list[Article] = []
        with self._lock:
            for title in titles:
                candidate = Article.new(
                    title, discovered_in_iteration=0, discovered_via={"seed"}
                )
                article_id, was_new = self.upsert_article(candidate, actor=actor)
                if was_new:
                    created.append(self._by_id[article_id])
        return created

    def upsert_article(self, candidate: Article, actor: str = "system") -> tuple[str, bool]:
        """Insert `candidate` or merge it into the article it identifies.

        Identity precedence: DOI (case-insensitive), then any shared
        (source, source-id) pair, then the normalized title. Merging fills
        absent fields and unions source ids; it never touches lifecycle
        state or the discovery iteration.
        """
        if not candidate.title or not candidate.title.strip():
            raise StoreError("cannot upsert an article with an empty title")
        with self._lock:
            existing = self._find_existing(candidate)
            if existing is None:
                self.snapshot.articles.append(candidate)
                self._index(candidate)
                self.append_audit(
                    actor,
                    "created",
                    article_id=candidate.id,
                    new_state=candidate.state,
                    detail={
                        "iteration": candidate.discovered_in_iteration,
                        "via": sorted(candidate.discovered_via),
                    },
                )
                return candidate.id, True
            self._merge_into(existing, candidate)
            return existing.id, False

    def _merge_into(self, existing: Article, incoming: Article) -> None:
        for name in ("year", "venue", "language", "doi", "url", "abstract"):
            if getattr(existing, name) is None and getattr(incoming, name) is not None:
                setattr(existing, name, getattr(incoming, name))
        if not existing.authors and incoming.authors:
            existing.authors = list(incoming.authors)
        for source, source_id in incoming.source_ids.items():
            existing.source_ids.setdefault(source, source_id)
        existing.discovered_via |= incoming.discovered_via
        self._index(existing)

    def get(self, article_id: str) -> Article:
        article = self._by_id.get(article_id)
        if article is None:
            raise UnknownArticleError(article_id)
        return article

    def query(
        self,
        states: set[str] | None = None,
        iteration: int | None = None,
        discovered_via: set[str] | None = None,
    ) -> list[Article]:
        result = []
        for article in self.snapshot.articles:
            if states is not None and article.state not in states:
                continue
            if iteration is not None and article.discovered_in_iteration != iteration:
                continue
            if discovered_via is not None and not (article.discovered_via & discovered_via):
                continue
            result.append(article)
        result.sort(key=lambda a: (a.discovered_in_iteration, a.normalized_title, a.id))
        return result

    def transition(
        self,
        article_id: str,
        new_state: str,
        actor: str,
        *,
        reason: str | None = None,
        duplicate_of: str | None = None,
    ) -> Article:
        with self._lock:
            article = self.get(article_id)
            if new_state not in State.ALL:
                raise StoreError(f"unknown state {new_state!r}")
            if not State.is_legal(article.state, new_state):
                raise IllegalTransitionError(article_id, article.state, new_state)
            if new_state == State.DUPLICATE:
                if not duplicate_of:
                    raise StoreError("transition to duplicate requires the canonical article id")
                if duplicate_of not in self._by_id:
                    raise UnknownArticleError(duplicate_of)
                if duplicate_of == article_id:
                    raise StoreError("an article cannot be a duplicate of itself")
            detail: dict = {}
            if reason is not None:
                detail["reason"] = reason
            if duplicate_of is not None:
                detail["duplicate_of"] = duplicate_of
            old_state = article.state
            article.state = new_state
            article.state_reason = reason if new_state == State.METADATA_REJECTED else None
            article.duplicate_of = duplicate_of if new_state == State.DUPLICATE else None
            self.append_audit(
                actor,
                "transition",
                article_id=article_id,
                old_state=old_state,
                new_state=new_state,
                detail=detail,
            )
            return article

    # -- decisions ---------------------------------------------------------

    def decisions_for(
        self,
        article_id: str | None = None,
        stage: str | None = None,
        rater: str | None = None,
        consensus: bool | None = None,
    ) -> list[ScreeningDecision]:
        result = []
        for decision in self.snapshot.decisions:
            if article_id is not None and decision.article_id != article_id:
                continue
            if stage is not None and decision.stage != stage:
                continue
            if rater is not None and decision.rater != rater:
                continue
            if consensus is not None and decision.is_consensus != consensus:
                continue
            result.append(decision)
        return result

    def record_decision(self, decision: ScreeningDecision, amend: bool = False) -> None:
        with self._lock:
            if not decision.is_consensus:
                previous = [
                    d
                    for d in self.snapshot.decisions
                    if not d.is_consensus
                    and d.article_id == decision.article_id
                    and d.stage == decision.stage
                    and d.rater == decision.rater
                ]
                if previous and not amend:
                    raise StoreError(
                        f"{decision.rater} already decided {decision.article_id} "
                        f"at stage {decision.stage} (pass amend to change it)"
                    )
                if previous:
                    old = previous[-1]
                    self.snapshot.decisions.remove(old)
                    self.append_audit(
                        decision.rater,
                        "decision-amended",
                        article_id=decision.article_id,
                        detail={
                            "stage": decision.stage,
                            "old_verdict": old.verdict,
                            "new_verdict": decision.verdict,
                        },
                    )
                else:
                    self.append_audit(
                        decision.rater,
                        "decision",
                        article_id=decision.article_id,
                        detail={"stage": decision.stage, "verdict": decision.verdict},
                    )
            else:
                existing = [
                    d
                    for d in self.snapshot.decisions
                    if d.is_consensus
                    and d.article_id == decision.article_id
                    and d.stage == decision.stage
                ]
                if existing:
                    raise StoreError(
                        f"consensus already recorded for {decision.article_id} "
                        f"at stage {decision.stage}"
                    )
                self.append_audit(
                    decision.rater,
                    "consensus",
                    article_id=decision.article_id,
                    detail={"stage": decision.stage, "verdict": decision.verdict},
                )
            self.snapshot.decisions.append(decision)

    # -- venue rankings ----------------------------------------------------

    def find_venue_ranking(self, venue_name: str) -> VenueRankingEntry | None:
        normalized = normalize_text(venue_name)
        for entry in self.snapshot.venue_rankings:
            if entry.normalized_name == normalized:
                return entry
        return None

    def add_venue_ranking(self, entry: VenueRankingEntry, force: bool = False) -> None:
        with self._lock:
            existing = self.find_venue_ranking(entry.venue_name)
            if existing is not None:
                if not force:
                    raise StoreError(
                        f"venue {entry.venue_name!r} is already ranked "
                        f"{existing.rank} (use force to overwrite)"
                    )
                self.snapshot.venue_rankings.remove(existing)
            self.snapshot.venue_rankings.append(entry)
            self.append_audit(
                entry.decided_by,
                "venue-ranked",
                detail={"venue": entry.normalized_name, "rank": entry.rank, "source": entry.source},
            )

    # -- iteration records -------------------------------------------------

    def iteration_record(self, iteration_number: int) -> IterationRecord | None:
        for record in self.snapshot.iterations:
            if record.iteration_number == iteration_number:
                return record
        return None

    def put_iteration_record(self, record: IterationRecord) -> None:
        with self._lock:
            existing = self.iteration_record(record.iteration_number)
            if existing is not None:
                self.snapshot.iterations.remove(existing)
            self.snapshot.iterations.append(record)

    def iteration_numbers(self) -> list[int]:
        return sorted(record.iteration_number for record in self.snapshot.iterations)

    # -- duplicate resolutions ---------------------------------------------

    def find_duplicate_resolution(self, id_a: str, id_b: str) -> DuplicateResolution | None:
        a, b = sorted((id_a, id_b))
        for resolution in self.snapshot.duplicate_resolutions:
            if resolution.article_a == a and resolution.article_b == b:
                return resolution
        return None

    def add_duplicate_resolution(self, resolution: DuplicateResolution) -> None:
        with self._lock:
            if self.find_duplicate_resolution(resolution.article_a, resolution.article_b):
                raise StoreError(
                    f"pair ({resolution.article_a}, {resolution.article_b}) already resolved"
                )
            self.snapshot.duplicate_resolutions.append(resolution)
            self.append_audit(
                resolution.resolved_by,
                "duplicate-resolution",
                detail={
                    "article_a": resolution.article_a,
                    "article_b": resolution.article_b,
                    "resolution": resolution.resolution,
                },
            )

    # -- exports -----------------------------------------------------------

    EXPORT_COLUMNS = ("id", "title", "authors", "year", "venue", "doi", "url", "state", "iteration")

    def export_csv(self, path: Path, articles: list[Article]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(self.EXPORT_COLUMNS)
            for article in articles:
                writer.writerow(
                    [
                        article.id,
                        article.title,
                        "; ".join(article.authors),
                        article.year if article.year is not None else "",
                        article.venue or "",
                        article.doi or "",
                        article.url or "",
                        article.state,
                        article.discovered_in_iteration,
                    ]
                )

    def export_bibtex(self, path: Path, articles: list[Article]) -> None:
        used_keys: set[str] = set()
        entries = []
        for article in articles:
            key = _bibtex_key(article, used_keys)
            used_keys.add(key)
            kind = "article" if article.venue else "misc"
            lines = [f"@{kind}{{{key},"]
            lines.append(f"  title = {{{_bibtex_escape(article.title)}}},")
            if article.authors:
                lines.append(
                    f"  author = {{{_bibtex_escape(' and '.join(article.authors))}}},"
                )
            if article.year is not None:
                lines.append(f"  year = {{{article.year}}},")
            if article.venue:
                lines.append(f"  journal = {{{_bibtex_escape(article.venue)}}},")
            if article.doi:
                lines.append(f"  doi = {{{article.doi}}},")
            if article.url:
                lines.append(f"  url = {{{article.url}}},")
            lines.append("}")
            entries.append("\n".join(lines))
        Path(path).write_text("\n\n".join(entries) + "\n", encoding="utf-8")


def _bibtex_escape(text: str) -> str:
    return text.replace("{", "\\{").replace("}", "\\}").replace("&", "\\&")


def _bibtex_key(article: Article, used: set[str]) -> str:
    if article.authors:
        surname = article.authors[0].split()[-1]
    else:
        surname = "anon"
    surname = re.sub(r"[^A-Za-z0-9]", "", surname).lower() or "anon"
    year = str(article.year) if article.year is not None else "nd"
    first_word = article.normalized_title.split()[0] if article.normalized_title else "untitled"
    base = f"{surname}{year}{first_word}"
    key = base
    suffix = ord("a")
    while key in used:
        key = base + chr(suffix)
        suffix += 1
    return key


def init_store(
    path: Path | None,
    seed_titles: list[str],
    config: dict | None = None,
    *,
    force: bool = False,
    clock: Clock | None = None,
) -> ReviewStore:
    """Create a fresh store seeded with one Candidate article per distinct
    title (identical titles after normalization collapse to one)."""
    titles = [t for t in (s.strip() for s in seed_titles) if t]
    if not titles:
        raise StoreError("seed list is empty")
    store = ReviewStore.create(path, config=config, force=force, clock=clock)
    store.init_seeds(titles)
    store.save()
    return store
