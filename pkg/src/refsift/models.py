"""Domain types: articles, screening decisions, venue rankings, topics.

Every type serializes to a plain dict with a stable key set (absent values
stay as explicit nulls) so the store's canonical on-disk form is
deterministic.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .textnorm import normalize_text


class State:
    """Article lifecycle states and the legal transition edges."""

    CANDIDATE = "candidate"
    METADATA_REJECTED = "metadata-rejected"
    IN_TITLE_SCREEN = "in-title-screen"
    TITLE_REJECTED = "title-rejected"
    IN_ABSTRACT_SCREEN = "in-abstract-screen"
    ABSTRACT_REJECTED = "abstract-rejected"
    IN_FULL_SCREEN = "in-full-screen"
    FULL_REJECTED = "full-rejected"
    INCLUDED = "included"
    DUPLICATE = "duplicate"

    # The abstract-screen states only come into play when the optional
    # abstract stage is enabled; their edges are legal either way.
    EDGES: dict[str, set[str]] = {
        CANDIDATE: {METADATA_REJECTED, IN_TITLE_SCREEN},
        IN_TITLE_SCREEN: {TITLE_REJECTED, IN_ABSTRACT_SCREEN, IN_FULL_SCREEN},
        IN_ABSTRACT_SCREEN: {ABSTRACT_REJECTED, IN_FULL_SCREEN},
        IN_FULL_SCREEN: {FULL_REJECTED, INCLUDED},
        INCLUDED: {DUPLICATE},
        METADATA_REJECTED: set(),
        TITLE_REJECTED: set(),
        ABSTRACT_REJECTED: set(),
        FULL_REJECTED: set(),
        DUPLICATE: set(),
    }

    ALL = tuple(EDGES)
    REJECTED = {METADATA_REJECTED, TITLE_REJECTED, ABSTRACT_REJECTED, FULL_REJECTED}
    # Screening has run to completion for these; "approved" counts both
    # because a duplicate was included before being folded into its canonical.
    APPROVED = {INCLUDED, DUPLICATE}
    PENDING = {CANDIDATE, IN_TITLE_SCREEN, IN_ABSTRACT_SCREEN, IN_FULL_SCREEN}

    @classmethod
    def is_legal(cls, old: str, new: str) -> bool:
        return new in cls.EDGES.get(old, set())


STAGES = ("title", "abstract", "fulltext")

# Maps a screening stage to (active state, reject state).
STAGE_STATES = {
    "title": (State.IN_TITLE_SCREEN, State.TITLE_REJECTED),
    "abstract": (State.IN_ABSTRACT_SCREEN, State.ABSTRACT_REJECTED),
    "fulltext": (State.IN_FULL_SCREEN, State.FULL_REJECTED),
}

DISCOVERED_VIA = ("seed", "forward", "backward")


def article_id_for(doi: str | None, source_ids: dict[str, str], normalized_title: str) -> str:
    """Content-derived article id.

    Precedence mirrors the identity key: DOI, then the first source-native
    id (sorted by source name), then the normalized title.
    """
    if doi:
        key = "doi:" + doi.strip().casefold()
    elif source_ids:
        source = sorted(source_ids)[0]
        key = f"src:{source}:{source_ids[source]}"
    else:
        key = "title:" + normalized_title
    return "a" + hashlib.sha1(key.encode("utf-8")).hexdigest()[:15]


@dataclass
class Article:
    id: str
    title: str
    normalized_title: str
    authors: list[str] = field(default_factory=list)
    year: int | None = None
    venue: str | None = None
    language: str | None = None
    doi: str | None = None
    url: str | None = None
    abstract: str | None = None
    source_ids: dict[str, str] = field(default_factory=dict)
    discovered_in_iteration: int = 0
    discovered_via: set[str] = field(default_factory=set)
    state: str = State.CANDIDATE
    state_reason: str | None = None
    duplicate_of: str | None = None

    @classmethod
    def new(
        cls,
        title: str,
        *,
        authors: list[str] | None = None,
        year: int | None = None,
        venue: str | None = None,
        language: str | None = None,
        doi: str | None = None,
        url: str | None = None,
        abstract: str | None = None,
        source_ids: dict[str, str] | None = None,
        discovered_in_iteration: int = 0,
        discovered_via: set[str] | None = None,
    ) -> "Article":
        if not title or not title.strip():
            raise ValueError("article title must be non-empty")
        normalized = normalize_text(title)
        source_ids = dict(source_ids or {})
        return cls(
            id=article_id_for(doi, source_ids, normalized),
            title=title,
            normalized_title=normalized,
            authors=list(authors or []),
            year=year,
            venue=venue,
            language=language,
            doi=doi,
            url=url,
            abstract=abstract,
            source_ids=source_ids,
            discovered_in_iteration=discovered_in_iteration,
            discovered_via=set(discovered_via or set()),
        )

    def filled_field_count(self) -> int:
        """How much metadata this record carries; used to pick the canonical
        article when resolving duplicates."""
        count = sum(
            1
            for value in (self.year, self.venue, self.language, self.doi, self.url, self.abstract)
            if value is not None
        )
        if self.authors:
            count += 1
        return count + len(self.source_ids)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "normalized_title": self.normalized_title,
            "authors": list(self.authors),
            "year": self.year,
            "venue": self.venue,
            "language": self.language,
            "doi": self.doi,
            "url": self.url,
            "abstract": self.abstract,
            "source_ids": dict(sorted(self.source_ids.items())),
            "discovered_in_iteration": self.discovered_in_iteration,
            "discovered_via": sorted(self.discovered_via),
            "state": self.state,
            "state_reason": self.state_reason,
            "duplicate_of": self.duplicate_of,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Article":
        return cls(
            id=data["id"],
            title=data["title"],
            normalized_title=data["normalized_title"],
            authors=list(data.get("authors") or []),
            year=data.get("year"),
            venue=data.get("venue"),
            language=data.get("language"),
            doi=data.get("doi"),
            url=data.get("url"),
            abstract=data.get("abstract"),
            source_ids=dict(data.get("source_ids") or {}),
            discovered_in_iteration=data.get("discovered_in_iteration", 0),
            discovered_via=set(data.get("discovered_via") or []),
            state=data.get("state", State.CANDIDATE),
            state_reason=data.get("state_reason"),
            duplicate_of=data.get("duplicate_of"),
        )


@dataclass
class ScreeningDecision:
    article_id: str
    stage: str
    rater: str
    verdict: str  # include | exclude
    timestamp: str
    is_consensus: bool = False

    def to_dict(self) -> dict:
        return {
            "article_id": self.article_id,
            "stage": self.stage,
            "rater": self.rater,
            "verdict": self.verdict,
            "timestamp": self.timestamp,
            "is_consensus": self.is_consensus,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScreeningDecision":
        return cls(
            article_id=data["article_id"],
            stage=data["stage"],
            rater=data["rater"],
            verdict=data["verdict"],
            timestamp=data["timestamp"],
            is_consensus=bool(data.get("is_consensus", False)),
        )


@dataclass
class VenueRankingEntry:
    venue_name: str
    normalized_name: str
    rank: str
    source: str  # manual | core-table | scimago | prior-review
    decided_by: str
    similarity_used: float | None = None

    def to_dict(self) -> dict:
        return {
            "venue_name": self.venue_name,
            "normalized_name": self.normalized_name,
            "rank": self.rank,
            "source": self.source,
            "decided_by": self.decided_by,
            "similarity_used": self.similarity_used,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VenueRankingEntry":
        return cls(
            venue_name=data["venue_name"],
            normalized_name=data["normalized_name"],
            rank=data["rank"],
            source=data["source"],
            decided_by=data["decided_by"],
            similarity_used=data.get("similarity_used"),
        )


@dataclass
class AuditEntry:
    seq: int
    timestamp: str
    actor: str
    action: str  # created | transition | decision | decision-amended | consensus | duplicate-resolution
    article_id: str | None = None
    old_state: str | None = None
    new_state: str | None = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "actor": self.actor,
            "action": self.action,
            "article_id": self.article_id,
            "old_state": self.old_state,
            "new_state": self.new_state,
            "detail": dict(sorted(self.detail.items())),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AuditEntry":
        return cls(
            seq=data["seq"],
            timestamp=data["timestamp"],
            actor=data["actor"],
            action=data["action"],
            article_id=data.get("article_id"),
            old_state=data.get("old_state"),
            new_state=data.get("new_state"),
            detail=dict(data.get("detail") or {}),
        )


@dataclass
class IterationRecord:
    iteration_number: int
    direction: str  # forward | backward | both
    frontier: list[str] = field(default_factory=list)
    expanded: bool = False
    new_candidates: int = 0
    duplicates_skipped: int = 0
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iteration_number": self.iteration_number,
            "direction": self.direction,
            "frontier": list(self.frontier),
            "expanded": self.expanded,
            "new_candidates": self.new_candidates,
            "duplicates_skipped": self.duplicates_skipped,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IterationRecord":
        return cls(
            iteration_number=data["iteration_number"],
            direction=data["direction"],
            frontier=list(data.get("frontier") or []),
            expanded=bool(data.get("expanded", False)),
            new_candidates=data.get("new_candidates", 0),
            duplicates_skipped=data.get("duplicates_skipped", 0),
            warnings=list(data.get("warnings") or []),
        )


@dataclass
class DuplicateResolution:
    article_a: str  # canonical ordering: a < b
    article_b: str
    resolution: str  # same | different
    resolved_by: str
    timestamp: str
    similarity: float | None = None

    def to_dict(self) -> dict:
        return {
            "article_a": self.article_a,
            "article_b": self.article_b,
            "resolution": self.resolution,
            "resolved_by": self.resolved_by,
            "timestamp": self.timestamp,
            "similarity": self.similarity,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DuplicateResolution":
        return cls(
            article_a=data["article_a"],
            article_b=data["article_b"],
            resolution=data["resolution"],
            resolved_by=data["resolved_by"],
            timestamp=data["timestamp"],
            similarity=data.get("similarity"),
        )


@dataclass
class IterationReport:
    iteration_number: int
    retrieved: int
    rejected_metadata: int
    rejected_screening: int
    approved: int

    @property
    def efficiency(self) -> float:
        if self.retrieved <= 0:
            return 0.0
        return self.approved / self.retrieved

    def to_dict(self) -> dict:
        return {
            "iteration_number": self.iteration_number,
            "retrieved": self.retrieved,
            "rejected_metadata": self.rejected_metadata,
            "rejected_screening": self.rejected_screening,
            "approved": self.approved,
            "efficiency": round(self.efficiency, 4),
        }


@dataclass
class RawRecord:
    """One bibliographic record as returned by a single source."""

    source: str
    source_id: str
    title: str
    authors: list[str] = field(default_factory=list)
    year: int | None = None
    venue: str | None = None
    language: str | None = None
    doi: str | None = None
    url: str | None = None
    abstract: str | None = None

    def __post_init__(self):
        if not self.source or not self.source_id:
            raise ValueError("RawRecord requires non-empty source and source_id")
        if not self.title or not self.title.strip():
            raise ValueError("RawRecord requires a non-empty title")


@dataclass
class Topic:
    topic_id: str
    label: str
    description: str
    provisional: bool = False

    def to_dict(self) -> dict:
        return {
            "topic_id": self.topic_id,
            "label": self.label,
            "description": self.description,
            "provisional": self.provisional,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Topic":
        return cls(
            topic_id=data["topic_id"],
            label=data["label"],
            description=data["description"],
            provisional=bool(data.get("provisional", False)),
        )


@dataclass
class TopicAssignment:
    article_id: str
    topic_ids: list[str]
    rationales: dict[str, str] = field(default_factory=dict)
    task: str = "topics"
    verified: bool = False

    def to_dict(self) -> dict:
        return {
            "article_id": self.article_id,
            "topic_ids": sorted(self.topic_ids),
            "rationales": dict(sorted(self.rationales.items())),
            "task": self.task,
            "verified": self.verified,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TopicAssignment":
        return cls(
            article_id=data["article_id"],
            topic_ids=list(data["topic_ids"]),
            rationales=dict(data.get("rationales") or {}),
            task=data.get("task", "topics"),
            verified=bool(data.get("verified", False)),
        )


RUBRIC_CRITERIA = ("faithfulness", "salience", "structure", "conciseness")


@dataclass
class RubricScore:
    summary_id: str
    rater: str
    faithfulness: int
    salience: int
    structure: int
    conciseness: int

    def __post_init__(self):
        for name in RUBRIC_CRITERIA:
            value = getattr(self, name)
            if not isinstance(value, int) or not 1 <= value <= 5:
                raise ValueError(f"{name} score must be an integer in 1..5, got {value!r}")


@dataclass
class DocumentText:
    article_id: str
    text: str
    token_estimate: int
    extraction_source: str  # pdf-extractor | sidecar-text

    def __post_init__(self):
        if not self.text:
            raise ValueError("document text must be non-empty")
        if self.token_estimate <= 0:
            raise ValueError("token_estimate must be positive")
