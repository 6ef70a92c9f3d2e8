"""Automated metadata screening: year, language and venue-rank filters.

Rejection reasons name the first failing criterion in the fixed order
year, language, venue. Articles missing the metadata a criterion needs
are never auto-rejected; they pass through flagged for human attention.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

from .errors import ConfigError, ScreeningError
from .models import Article, State
from .store import ReviewStore
from .venues import DEFAULT_RANK_TIERS

logger = logging.getLogger(__name__)

RankLookup = Callable[[str], str | None]


@dataclass
class ScreenCriteria:
    min_year: int | None = None
    max_year: int | None = None
    allowed_languages: set[str] | None = None
    require_ranked_venue: bool = False
    min_rank: str | None = None
    tiers: tuple[str, ...] = DEFAULT_RANK_TIERS

    def __post_init__(self):
        violations = []
        if self.min_year is not None and self.max_year is not None and self.min_year > self.max_year:
            violations.append(f"min_year {self.min_year} exceeds max_year {self.max_year}")
        if self.min_rank is not None and not self.require_ranked_venue:
            violations.append("min_rank requires require_ranked_venue")
        if self.min_rank is not None and self.min_rank not in self.tiers:
            violations.append(f"min_rank {self.min_rank!r} is not a configured tier")
        if violations:
            raise ConfigError(violations)
        if self.allowed_languages is not None:
            self.allowed_languages = {lang.casefold() for lang in self.allowed_languages}

    @property
    def enabled(self) -> bool:
        return any(
            (
                self.min_year is not None,
                self.max_year is not None,
                self.allowed_languages is not None,
                self.require_ranked_venue,
            )
        )

    @classmethod
    def from_dict(cls, data: dict, tiers: tuple[str, ...] = DEFAULT_RANK_TIERS) -> "ScreenCriteria":
        languages = data.get("allowed_languages")
        return cls(
            min_year=data.get("min_year"),
            max_year=data.get("max_year"),
            allowed_languages=set(languages) if languages is not None else None,
            require_ranked_venue=bool(data.get("require_ranked_venue", False)),
            min_rank=data.get("min_rank"),
            tiers=tiers,
        )


def _language_matches(language: str, allowed: set[str]) -> bool:
    tag = language.casefold()
    primary = tag.split("-", 1)[0]
    return tag in allowed or primary in allowed


def evaluate(article: Article, criteria: ScreenCriteria, rank_lookup: RankLookup) -> str | None:
    """Reason the article fails, or None if it passes. Pure; missing
    metadata never produces a rejection."""
    if article.year is not None:
        if criteria.min_year is not None and article.year < criteria.min_year:
            return "year"
        if criteria.max_year is not None and article.year > criteria.max_year:
            return "year"
    if criteria.allowed_languages is not None and article.language is not None:
        if not _language_matches(article.language, criteria.allowed_languages):
            return "language"
    if criteria.require_ranked_venue and article.venue:
        rank = rank_lookup(article.venue)
        if rank is None:
            # screen() guarantees this never happens; treat as unranked-tier
            return "venue"
        if rank == "unranked":
            return "venue"
        if criteria.min_rank is not None:
            if criteria.tiers.index(rank) > criteria.tiers.index(criteria.min_rank):
                return "venue"
    return None


def missing_metadata(article: Article, criteria: ScreenCriteria) -> list[str]:
    """Metadata fields a criterion wanted but the article lacks."""
    missing = []
    if (criteria.min_year is not None or criteria.max_year is not None) and article.year is None:
        missing.append("year")
    if criteria.allowed_languages is not None and article.language is None:
        missing.append("language")
    if criteria.require_ranked_venue and not article.venue:
        missing.append("venue")
    return missing


@dataclass
class ScreenResult:
    passed: list[Article] = field(default_factory=list)
    rejected: list[tuple[Article, str]] = field(default_factory=list)


def screen(
    store: ReviewStore,
    criteria: ScreenCriteria,
    rank_lookup: RankLookup,
    *,
    candidates: list[Article] | None = None,
    actor: str = "metadata-screen",
) -> ScreenResult:
    """Partition candidates and apply the transitions: rejected articles
    move to metadata-rejected with their reason, the rest advance to the
    title screen."""
    if candidates is None:
        candidates = store.query(states={State.CANDIDATE})
    if criteria.require_ranked_venue:
        unranked = sorted(
            {a.venue for a in candidates if a.venue and rank_lookup(a.venue) is None}
        )
        if unranked:
            raise ScreeningError(
                "venue ranking required but these venues are unranked: " + ", ".join(unranked)
            )
    if not criteria.enabled:
        logger.warning("no metadata criteria enabled; every candidate passes")
    result = ScreenResult()
    for article in candidates:
        reason = evaluate(article, criteria, rank_lookup) if criteria.enabled else None
        if reason is not None:
            store.transition(article.id, State.METADATA_REJECTED, actor, reason=reason)
            result.rejected.append((article, reason))
        else:
            store.transition(article.id, State.IN_TITLE_SCREEN, actor)
            result.passed.append(article)
    return result
