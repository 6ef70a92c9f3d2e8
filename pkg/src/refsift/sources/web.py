"""HTTP-backed source adapters and the transport layer.

Adapters talk through a transport callable `(url, params) -> (status,
headers, body)` so tests replay recorded fixtures bit-exactly while
production uses requests. API keys come from `<SOURCE>_API_KEY`
environment variables; endpoints are configurable.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from urllib.parse import urlencode

import requests

from ..errors import CapabilityError, RateLimitedError, RetryableSourceError, SourceError
from ..models import RawRecord
from . import CITATIONS, METADATA, REFERENCES, SourceAdapter, looks_like_doi


def canonical_url(url: str, params: dict | None) -> str:
    if not params:
        return url
    return url + "?" + urlencode(sorted(params.items()))


class LiveTransport:
    """Real HTTPS transport."""

    def __init__(self, timeout: float = 30.0, headers: dict | None = None):
        self.timeout = timeout
        self.headers = headers or {}
        self.session = requests.Session()

    def __call__(self, url: str, params: dict | None) -> tuple[int, dict, str]:
        try:
            response = self.session.get(
                url, params=params, timeout=self.timeout, headers=self.headers
            )
        except requests.RequestException as exc:
            raise RetryableSourceError(f"network failure: {exc}") from exc
        return response.status_code, dict(response.headers), response.text


class FixtureTransport:
    """Replays recorded responses: one JSON file per request with keys
    url, status, body (body may be a string or an object)."""

    def __init__(self, fixture_dir: Path):
        self.responses: dict[str, tuple[int, dict, str]] = {}
        for path in sorted(Path(fixture_dir).glob("*.json")):
            data = json.loads(path.read_text(encoding="utf-8"))
            body = data["body"]
            if not isinstance(body, str):
                body = json.dumps(body)
            self.responses[data["url"]] = (data["status"], data.get("headers", {}), body)

    def __call__(self, url: str, params: dict | None) -> tuple[int, dict, str]:
        key = canonical_url(url, params)
        if key not in self.responses:
            raise SourceError(f"no recorded fixture for {key}")
        return self.responses[key]


class RecordingTransport:
    """Wraps a live transport and captures each response to a fixture file."""

    def __init__(self, inner, fixture_dir: Path):
        self.inner = inner
        self.fixture_dir = Path(fixture_dir)
        self.fixture_dir.mkdir(parents=True, exist_ok=True)
        self._counter = 0

    def __call__(self, url: str, params: dict | None) -> tuple[int, dict, str]:
        status, headers, body = self.inner(url, params)
        self._counter += 1
        out = self.fixture_dir / f"req{self._counter:04d}.json"
        out.write_text(
            json.dumps(
                {"url": canonical_url(url, params), "status": status, "body": body},
                ensure_ascii=False,
                indent=2,
            ),
            encoding="utf-8",
        )
        return status, headers, body


def api_key_for(source_name: str) -> str | None:
    env = source_name.replace("-", "_").upper() + "_API_KEY"
    return os.environ.get(env)


class HttpSourceAdapter(SourceAdapter):
    """Shared HTTP plumbing: status handling and JSON decoding."""

    def __init__(self, base_url: str, transport=None, **kw):
        super().__init__(**kw)
        self.base_url = base_url.rstrip("/")
        self.transport = transport or LiveTransport(headers=self._default_headers())

    def _default_headers(self) -> dict:
        headers = {}
        key = api_key_for(self.name)
        if key:
            headers["x-api-key"] = key
        return headers

    def _get_json(self, url: str, params: dict | None = None):
        status, headers, body = self.transport(url, params)
        if status == 404:
            return None
        if status == 429:
            retry_after = headers.get("Retry-After") or headers.get("retry-after")
            raise RateLimitedError(
                f"{self.name} rate limited",
                retry_after=float(retry_after) if retry_after else None,
            )
        if status >= 500:
            raise RetryableSourceError(f"{self.name} server error {status}")
        if status != 200:
            raise SourceError(f"{self.name} unexpected status {status} for {url}")
        try:
            return json.loads(body)
        except json.JSONDecodeError as exc:
            raise RetryableSourceError(f"{self.name} returned invalid JSON") from exc


_S2_FIELDS = "title,authors,year,venue,externalIds,url,abstract"


class SemanticScholarSource(HttpSourceAdapter):
    """Adapter for a Semantic-Scholar-style graph API."""

    name = "semantic-scholar"
    capabilities = frozenset({METADATA, CITATIONS, REFERENCES})
    page_size = 100

    def __init__(self, base_url: str = "https://api.semanticscholar.org/graph/v1", **kw):
        super().__init__(base_url, **kw)

    def _parse_paper(self, data: dict) -> RawRecord | None:
        title = (data.get("title") or "").strip()
        paper_id = data.get("paperId")
        if not title or not paper_id:
            return None
        external = data.get("externalIds") or {}
        return RawRecord(
            source=self.name,
            source_id=paper_id,
            title=title,
            authors=[a.get("name", "") for a in data.get("authors") or [] if a.get("name")],
            year=data.get("year"),
            venue=(data.get("venue") or None),
            doi=external.get("DOI"),
            url=data.get("url"),
            abstract=data.get("abstract"),
        )

    def _do_lookup(self, query: str, k: int) -> list[RawRecord]:
        if looks_like_doi(query):
            data = self._get_json(
                f"{self.base_url}/paper/DOI:{query.strip()}", {"fields": _S2_FIELDS}
            )
            if data is None:
                return []
            record = self._parse_paper(data)
            return [record] if record else []
        data = self._get_json(
            f"{self.base_url}/paper/search",
            {"query": query, "fields": _S2_FIELDS, "limit": k},
        )
        if data is None:
            return []
        records = []
        for item in data.get("data") or []:
            record = self._parse_paper(item)
            if record:
                records.append(record)
        return records

    def _do_neighbors_page(
        self, record: RawRecord, direction: str, offset: int
    ) -> tuple[list[RawRecord], int | None]:
        endpoint, wrapper = (
            ("citations", "citingPaper") if direction == "forward" else ("references", "citedPaper")
        )
        data = self._get_json(
            f"{self.base_url}/paper/{record.source_id}/{endpoint}",
            {"fields": _S2_FIELDS, "offset": offset, "limit": self.page_size},
        )
        if data is None:
            return [], None
        records = []
        for item in data.get("data") or []:
            parsed = self._parse_paper(item.get(wrapper) or {})
            if parsed:
                records.append(parsed)
        return records, data.get("next")


class DblpSource(HttpSourceAdapter):
    """Adapter for a DBLP-style publication search API (metadata only)."""

    name = "dblp"
    capabilities = frozenset({METADATA})

    def __init__(self, base_url: str = "https://dblp.org", **kw):
        super().__init__(base_url, **kw)

    def _do_lookup(self, query: str, k: int) -> list[RawRecord]:
        data = self._get_json(
            f"{self.base_url}/search/publ/api", {"q": query, "format": "json", "h": k}
        )
        if data is None:
            return []
        hits = (((data.get("result") or {}).get("hits")) or {}).get("hit") or []
        records = []
        for hit in hits:
            info = hit.get("info") or {}
            title = (info.get("title") or "").strip().rstrip(".")
            key = info.get("key")
            if not title or not key:
                continue
            authors_field = (info.get("authors") or {}).get("author") or []
            if isinstance(authors_field, dict):
                authors_field = [authors_field]
            authors = [a.get("text", "") for a in authors_field if a.get("text")]
            year = info.get("year")
            records.append(
                RawRecord(
                    source=self.name,
                    source_id=key,
                    title=title,
                    authors=authors,
                    year=int(year) if year else None,
                    venue=info.get("venue"),
                    doi=info.get("doi"),
                    url=info.get("ee") or info.get("url"),
                )
            )
        return records


class ScholarWebSource(SourceAdapter):
    """Stub for a scraping-hostile web source.

    There is no stable public interface to build against, so this adapter
    must be opted into explicitly and still refuses to run without a
    user-supplied scrape transport. All tests use the mock source instead.
    """

    name = "scholar-web"
    capabilities = frozenset({METADATA, CITATIONS, REFERENCES})

    def __init__(self, enabled: bool = False, scrape_transport=None, **kw):
        super().__init__(**kw)
        self.enabled = enabled
        self.scrape_transport = scrape_transport

    def _refuse(self):
        if not self.enabled:
            raise CapabilityError(
                "scholar-web is disabled; enable it explicitly in the sources config"
            )
        raise SourceError(
            "scholar-web has no supported transport; supply scrape_transport "
            "or rely on the API-backed sources"
        )

    def _do_lookup(self, query: str, k: int) -> list[RawRecord]:
        self._refuse()

    def _do_neighbors_page(self, record, direction, offset):
        self._refuse()
