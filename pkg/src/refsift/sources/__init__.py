"""Uniform interface over scholarly metadata sources.

Every source is a `SourceAdapter` with declared capabilities (metadata,
citations, references). Rate limiting is enforced centrally per source
name, so two adapter instances for the same source share one limiter.
Transient failures retry with exponential backoff and jitter; a request
that ultimately fails surfaces an error rather than a truncated result.
"""

from __future__ import annotations

import logging
import random
import threading
import time
from dataclasses import dataclass, field

from ..errors import CapabilityError, RateLimitedError, RetryableSourceError, SourceError
from ..models import Article, RawRecord

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 5
BACKOFF_BASE = 0.5

METADATA = "metadata"
CITATIONS = "citations"
REFERENCES = "references"

# Curated APIs (tier 0) outrank scraped sources (tier 1) when consolidating
# conflicting metadata.
DEFAULT_SOURCE_TIERS = {
    "semantic-scholar": 0,
    "dblp": 0,
    "mock": 0,
    "scholar-web": 1,
}


class RateLimiter:
    """Enforces a minimum interval between request starts and a cap on
    in-flight requests. Thread-safe; shared per source via `limiter_for`."""

    def __init__(self, min_interval: float = 0.0, max_in_flight: int = 4):
        self.min_interval = min_interval
        self._semaphore = threading.Semaphore(max_in_flight)
        self._gate = threading.Lock()
        self._next_start = 0.0

    def __enter__(self):
        self._semaphore.acquire()
        with self._gate:
            wait = self._next_start - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._next_start = time.monotonic() + self.min_interval
        return self

    def __exit__(self, *exc):
        self._semaphore.release()


_LIMITERS: dict[str, RateLimiter] = {}
_LIMITERS_LOCK = threading.Lock()


def limiter_for(source: str, min_interval: float = 0.0, max_in_flight: int = 4) -> RateLimiter:
    with _LIMITERS_LOCK:
        if source not in _LIMITERS:
            _LIMITERS[source] = RateLimiter(min_interval, max_in_flight)
        return _LIMITERS[source]


def reset_limiters() -> None:
    with _LIMITERS_LOCK:
        _LIMITERS.clear()


def with_retries(fn, *, attempts: int = MAX_ATTEMPTS, sleep=time.sleep, rng: random.Random | None = None):
    """Call `fn` retrying retryable failures with exponential backoff and
    jitter; a server-provided retry-after overrides the computed delay."""
    rng = rng or random
    last: Exception | None = None
    for attempt in range(attempts):
        try:
            return fn()
        except RetryableSourceError as exc:
            last = exc
            if attempt == attempts - 1:
                break
            delay = BACKOFF_BASE * (2**attempt)
            delay += rng.uniform(0, delay * 0.2)
            if exc.retry_after is not None:
                delay = exc.retry_after
            logger.debug("retryable source failure (%s), retrying in %.2fs", exc, delay)
            sleep(delay)
    raise last  # type: ignore[misc]


class SourceAdapter:
    """Base adapter. Subclasses implement the _do_* hooks; the public
    methods add rate limiting and retries."""

    name = "base"
    capabilities: frozenset[str] = frozenset()

    def __init__(self, min_interval: float = 0.0, max_in_flight: int = 4, sleep=time.sleep):
        self.limiter = limiter_for(self.name, min_interval, max_in_flight)
        self._sleep = sleep

    def supports(self, capability: str) -> bool:
        return capability in self.capabilities

    def lookup(self, query: str, k: int = 5) -> list[RawRecord]:
        """Best matches for a title or DOI, in the source's own relevance
        order. Not-found is an empty list, never an error."""
        if not self.supports(METADATA):
            raise CapabilityError(f"source {self.name} does not support metadata lookup")
        return with_retries(lambda: self._guarded(self._do_lookup, query, k), sleep=self._sleep)

    def neighbors(self, record: RawRecord, direction: str) -> list[RawRecord]:
        """Complete citation (forward) or reference (backward) list for
        `record`, paginated transparently."""
        capability = {"forward": CITATIONS, "backward": REFERENCES}.get(direction)
        if capability is None:
            raise ValueError(f"direction must be forward or backward, got {direction!r}")
        if not self.supports(capability):
            raise CapabilityError(
                f"source {self.name} does not support {capability} ({direction} snowballing)"
            )
        results: list[RawRecord] = []
        offset = 0
        while True:
            page, next_offset = with_retries(
                lambda: self._guarded(self._do_neighbors_page, record, direction, offset),
                sleep=self._sleep,
            )
            results.extend(page)
            if next_offset is None:
                return results
            offset = next_offset

    def _guarded(self, fn, *args):
        with self.limiter:
            return fn(*args)

    # -- hooks -------------------------------------------------------------

    def _do_lookup(self, query: str, k: int) -> list[RawRecord]:
        raise NotImplementedError

    def _do_neighbors_page(
        self, record: RawRecord, direction: str, offset: int
    ) -> tuple[list[RawRecord], int | None]:
        raise NotImplementedError


def looks_like_doi(query: str) -> bool:
    return query.strip().lower().startswith("10.") and "/" in query


def consolidate(
    records: list[RawRecord],
    *,
    discovered_in_iteration: int = 0,
    discovered_via: set[str] | None = None,
    source_tiers: dict[str, int] | None = None,
) -> Article:
    """Merge records for one work into a single Article.

    Records are ordered by (source tier, DOI-less last, source, source id);
    each field takes the first present value in that order, so the outcome
    is independent of input permutation. Disagreements on present fields
    are logged, not silently dropped.
    """
    if not records:
        raise SourceError("consolidate requires at least one record")
    tiers = dict(DEFAULT_SOURCE_TIERS)
    if source_tiers:
        tiers.update(source_tiers)
    ordered = sorted(
        records,
        key=lambda r: (tiers.get(r.source, 0), 0 if r.doi else 1, r.source, r.source_id),
    )
    primary = ordered[0]
    merged: dict = {
        "title": primary.title,
        "authors": list(primary.authors),
        "year": primary.year,
        "venue": primary.venue,
        "language": primary.language,
        "doi": primary.doi,
        "url": primary.url,
        "abstract": primary.abstract,
    }
    for record in ordered[1:]:
        for name in ("year", "venue", "language", "doi", "url", "abstract"):
            value = getattr(record, name)
            if value is None:
                continue
            if merged[name] is None:
                merged[name] = value
            elif merged[name] != value:
                logger.info(
                    "consolidate: %s=%r from %s loses to %r (higher-priority source)",
                    name,
                    value,
                    record.source,
                    merged[name],
                )
        if not merged["authors"] and record.authors:
            merged["authors"] = list(record.authors)
    source_ids = {}
    for record in ordered:
        source_ids.setdefault(record.source, record.source_id)
    return Article.new(
        merged["title"],
        authors=merged["authors"],
        year=merged["year"],
        venue=merged["venue"],
        language=merged["language"],
        doi=merged["doi"],
        url=merged["url"],
        abstract=merged["abstract"],
        source_ids=source_ids,
        discovered_in_iteration=discovered_in_iteration,
        discovered_via=discovered_via or set(),
    )
