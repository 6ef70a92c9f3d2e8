"""In-memory mock source over an explicit citation graph.

Used by the whole test suite and by scripted end-to-end runs: the graph is
the ground truth that snowballing results are checked against. Supports
pagination and seeded fault injection so the retry path is exercised
deterministically.
"""

from __future__ import annotations

import random

from ..errors import RetryableSourceError
from ..models import RawRecord
from ..textnorm import normalize_text
from . import CITATIONS, METADATA, REFERENCES, SourceAdapter, looks_like_doi


class MockSource(SourceAdapter):
    name = "mock"
    capabilities = frozenset({METADATA, CITATIONS, REFERENCES})

    def __init__(
        self,
        records: dict[str, RawRecord] | None = None,
        cites: dict[str, list[str]] | None = None,
        *,
        page_size: int = 100,
        fail_rate: float = 0.0,
        rng: random.Random | None = None,
    ):
        super().__init__(min_interval=0.0, sleep=lambda _t: None)
        self.records: dict[str, RawRecord] = dict(records or {})
        # cites[a] = works that a cites (a's reference list)
        self.cites: dict[str, list[str]] = {k: list(v) for k, (v) in (cites or {}).items()}
        self.page_size = page_size
        self.fail_rate = fail_rate
        self.rng = rng or random.Random(0)
        self.page_fetches = 0

    @classmethod
    def from_graph(cls, edges: list[tuple[str, str]], titles: dict[str, str] | None = None, **kw):
        """Build from (citer, cited) edges; records are synthesized for
        every node with deterministic titles unless given."""
        nodes = sorted({n for edge in edges for n in edge})
        titles = titles or {}
        records = {
            node: RawRecord(
                source="mock",
                source_id=node,
                title=titles.get(node, f"Study {node}"),
                authors=[f"Author {node}"],
                year=2020,
            )
            for node in nodes
        }
        cites: dict[str, list[str]] = {node: [] for node in nodes}
        for citer, cited in edges:
            cites[citer].append(cited)
        return cls(records, cites, **kw)

    def add_record(self, record: RawRecord, references: list[str] | None = None) -> None:
        self.records[record.source_id] = record
        self.cites.setdefault(record.source_id, [])
        if references:
            self.cites[record.source_id] = list(references)

    def _maybe_fail(self) -> None:
        if self.fail_rate > 0 and self.rng.random() < self.fail_rate:
            raise RetryableSourceError("injected fault")

    def _do_lookup(self, query: str, k: int) -> list[RawRecord]:
        self._maybe_fail()
        if looks_like_doi(query):
            needle = query.strip().casefold()
            return [r for r in self.records.values() if r.doi and r.doi.casefold() == needle][:k]
        needle = normalize_text(query)
        return [r for r in self.records.values() if normalize_text(r.title) == needle][:k]

    def _neighbor_ids(self, record: RawRecord, direction: str) -> list[str]:
        if direction == "backward":
            return self.cites.get(record.source_id, [])
        return [citer for citer, cited in self.cites.items() if record.source_id in cited]

    def _do_neighbors_page(
        self, record: RawRecord, direction: str, offset: int
    ) -> tuple[list[RawRecord], int | None]:
        self._maybe_fail()
        self.page_fetches += 1
        ids = self._neighbor_ids(record, direction)
        page_ids = ids[offset : offset + self.page_size]
        next_offset = offset + self.page_size if offset + self.page_size < len(ids) else None
        return [self.records[i] for i in page_ids], next_offset
