"""Venue-ranking assistance.

Suggests ranks for unranked venues by cosine similarity between the venue
name and (a) venues already ranked in this review and (b) entries loaded
from ranking tables (a local CORE-style CSV, a Scimago-style export in the
same format). The featurizer defaults to unigram term frequency over
normalized tokens; a character-trigram option exists for heavily
abbreviated names. Suggestions are never auto-accepted: recording a rank
is always an explicit call.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import StoreError
from .models import State, VenueRankingEntry
from .store import ReviewStore
from .textnorm import normalize_text, tokenize

TermVector = dict[str, int]

DEFAULT_RANK_TIERS = ("A*", "A", "B", "C", "ranked-other", "unranked")

PRIOR_REVIEW_SOURCE = "prior-review"


def vectorize(name: str, featurizer: str = "unigram") -> TermVector:
    """Term-frequency vector of a venue name; empty input gives {}."""
    if featurizer == "unigram":
        tokens = tokenize(name)
    elif featurizer == "char-trigram":
        norm = normalize_text(name).replace(" ", "_")
        tokens = [norm[i : i + 3] for i in range(len(norm) - 2)] if len(norm) >= 3 else ([norm] if norm else [])
    else:
        raise ValueError(f"unknown featurizer {featurizer!r}")
    vector: TermVector = {}
    for token in tokens:
        vector[token] = vector.get(token, 0) + 1
    return vector


def cosine(a: TermVector, b: TermVector) -> float:
    """Cosine similarity of two term-frequency vectors, 0.0 when either is
    empty. Frequencies are non-negative so the result is in [0, 1]."""
    if not a or not b:
        return 0.0
    if len(b) < len(a):
        a, b = b, a
    dot = sum(count * b[token] for token, count in a.items() if token in b)
    if dot == 0:
        return 0.0
    norm_a = math.sqrt(sum(c * c for c in a.values()))
    norm_b = math.sqrt(sum(c * c for c in b.values()))
    return min(1.0, dot / (norm_a * norm_b))


def title_similarity(a: str, b: str, featurizer: str = "unigram") -> float:
    return cosine(vectorize(a, featurizer), vectorize(b, featurizer))


@dataclass
class Suggestion:
    entry: VenueRankingEntry
    score: float

    def to_dict(self) -> dict:
        return {"entry": self.entry.to_dict(), "score": round(self.score, 6)}


def load_ranking_table(path: Path, source: str, tiers: tuple[str, ...] = DEFAULT_RANK_TIERS,
                       tier_map: dict[str, str] | None = None) -> list[VenueRankingEntry]:
    """Read a `venue,rank,source` CSV (header row, UTF-8).

    The file's own source column wins over the `source` argument when
    present; ranks are passed through `tier_map` (raw value -> configured
    tier) so CORE letters and Scimago quartiles land in one ordered scale.
    """
    entries: list[VenueRankingEntry] = []
    tier_map = tier_map or {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or "venue" not in reader.fieldnames or "rank" not in reader.fieldnames:
            raise StoreError(f"ranking table {path} must have columns venue,rank[,source]")
        for row in reader:
            venue = (row.get("venue") or "").strip()
            raw_rank = (row.get("rank") or "").strip()
            if not venue or not raw_rank:
                continue
            rank = tier_map.get(raw_rank, raw_rank)
            if rank not in tiers:
                rank = "ranked-other" if "ranked-other" in tiers else rank
            entries.append(
                VenueRankingEntry(
                    venue_name=venue,
                    normalized_name=normalize_text(venue),
                    rank=rank,
                    source=(row.get("source") or "").strip() or source,
                    decided_by="table",
                )
            )
    return entries


class VenueRanker:
    """Suggestion and recording workflow over the store plus loaded tables."""

    def __init__(
        self,
        store: ReviewStore,
        tables: dict[str, list[VenueRankingEntry]] | None = None,
        *,
        tiers: tuple[str, ...] = DEFAULT_RANK_TIERS,
        featurizer: str = "unigram",
    ):
        self.store = store
        self.tables = tables or {}
        self.tiers = tuple(tiers)
        self.featurizer = featurizer

    def load_table(self, name: str, path: Path, tier_map: dict[str, str] | None = None) -> int:
        entries = load_ranking_table(path, name, self.tiers, tier_map)
        self.tables[name] = entries
        return len(entries)

    def _sources(self) -> dict[str, list[VenueRankingEntry]]:
        sources = dict(self.tables)
        if self.store.snapshot.venue_rankings:
            sources[PRIOR_REVIEW_SOURCE] = list(self.store.snapshot.venue_rankings)
        return sources

    def suggest(self, venue: str, k: int = 5) -> list[Suggestion]:
        """Top-k entries per source by cosine against `venue`, grouped by
        source (sources in name order), ties broken by normalized name."""
        if k <= 0:
            raise ValueError("k must be positive")
        sources = self._sources()
        if not sources:
            raise StoreError("no ranking sources loaded (load a table or rank venues first)")
        query = vectorize(venue, self.featurizer)
        suggestions: list[Suggestion] = []
        for source_name in sorted(sources):
            scored = [
                Suggestion(entry, cosine(query, vectorize(entry.venue_name, self.featurizer)))
                for entry in sources[source_name]
            ]
            scored.sort(key=lambda s: (-s.score, s.entry.normalized_name))
            suggestions.extend(scored[:k])
        return suggestions

    def record_ranking(
        self,
        venue: str,
        rank: str,
        source: str,
        decided_by: str,
        *,
        similarity_used: float | None = None,
        force: bool = False,
    ) -> VenueRankingEntry:
        if not venue or not venue.strip():
            raise StoreError("venue name must be non-empty")
        if rank not in self.tiers:
            raise StoreError(f"rank {rank!r} is not one of the configured tiers {self.tiers}")
        entry = VenueRankingEntry(
            venue_name=venue.strip(),
            normalized_name=normalize_text(venue),
            rank=rank,
            source=source,
            decided_by=decided_by,
            similarity_used=similarity_used,
        )
        self.store.add_venue_ranking(entry, force=force)
        return entry

    def pending_venues(self) -> list[str]:
        """Distinct normalized venue names among non-rejected articles that
        have no ranking entry yet, sorted."""
        ranked = {entry.normalized_name for entry in self.store.snapshot.venue_rankings}
        pending: set[str] = set()
        for article in self.store.snapshot.articles:
            if article.state in State.REJECTED:
                continue
            if not article.venue:
                continue
            normalized = normalize_text(article.venue)
            if normalized and normalized not in ranked:
                pending.add(normalized)
        return sorted(pending)

    def rank_of(self, venue: str) -> str | None:
        """Tier recorded in the review for `venue`, if any."""
        entry = self.store.find_venue_ranking(venue)
        return entry.rank if entry else None
