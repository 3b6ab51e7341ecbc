"""Client for the NVD REST interface: CVE by id, CVE search, CPE search, with
an on-disk response cache and a sliding-window rate limiter.

Offline mode (mandatory for CI) serves recorded responses from a fixture
directory through the same code path as the live transport.
"""

from __future__ import annotations

import json
import re
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Protocol
from urllib.parse import urlencode

import httpx

from .domain import CveRecord

CVES_PATH = "/rest/json/cves/2.0"
CPES_PATH = "/rest/json/cpes/2.0"
DEFAULT_BASE_URL = "https://services.nvd.nist.gov"
API_KEY_ENV_VAR = "NVD_API_KEY"

# Public service policy: 5 requests per 30 s without a key, 50 with one.
RATE_WINDOW_SECONDS = 30.0
RATE_LIMIT_WITHOUT_KEY = 5
RATE_LIMIT_WITH_KEY = 50

CACHE_TTL_SECONDS = 24 * 3600.0

_CVE_ID = re.compile(r"^CVE-\d{4}-\d{4,}$")

BY_CVE_ID = "by_cve_id"
BY_CPE_NAME = "by_cpe_name"
BY_KEYWORD = "by_keyword"
CPE_SEARCH = "cpe_search"


class NvdError(RuntimeError):
    pass


class NotFound(NvdError):
    pass


class RateLimited(NvdError):
    def __init__(self, message: str, retry_after: float | None = None) -> None:
        super().__init__(message)
        self.retry_after = retry_after


class Upstream5xx(NvdError):
    pass


class FixtureMissing(NvdError):
    pass


@dataclass(frozen=True)
class NvdQuery:
    kind: str
    parameter: str
    offset: int = 0
    limit: int = 50

    def __post_init__(self) -> None:
        if self.kind not in (BY_CVE_ID, BY_CPE_NAME, BY_KEYWORD, CPE_SEARCH):
            raise ValueError(f"unknown query kind: {self.kind!r}")
        if not self.parameter.strip():
            raise ValueError("query parameter must be non-empty")
        if self.kind == BY_CVE_ID and not _CVE_ID.match(self.parameter):
            raise ValueError(f"not a CVE id: {self.parameter!r}")
        if self.limit < 1:
            raise ValueError("limit must be >= 1")
        if self.offset < 0:
            raise ValueError("offset must be >= 0")


@dataclass(frozen=True)
class CvePage:
    records: tuple[CveRecord, ...]
    total: int
    offset: int
    limit: int

    @property
    def next_offset(self) -> int | None:
        upcoming = self.offset + len(self.records)
        return upcoming if upcoming < self.total else None


@dataclass(frozen=True)
class CpePage:
    names: tuple[str, ...]
    total: int
    offset: int
    limit: int

    @property
    def next_offset(self) -> int | None:
        upcoming = self.offset + len(self.names)
        return upcoming if upcoming < self.total else None


def canonical_query_key(path: str, params: dict[str, Any]) -> str:
    """Stable, filesystem-safe key for a query; shared by cache and fixtures."""
    flat = urlencode(sorted((k, str(v)) for k, v in params.items()))
    raw = f"{path.strip('/').replace('/', '_')}__{flat}" if flat else path.strip("/").replace("/", "_")
    return re.sub(r"[^A-Za-z0-9._-]+", "_", raw)


class RateLimiter:
    """Blocking sliding-window limiter; callers wait for a free slot."""

    def __init__(
        self,
        limit: int,
        window: float = RATE_WINDOW_SECONDS,
        clock: Callable[[], float] = time.monotonic,
        sleeper: Callable[[float], None] = time.sleep,
    ) -> None:
        if limit < 1:
            raise ValueError("limit must be >= 1")
        self.limit = limit
        self.window = window
        self._clock = clock
        self._sleep = sleeper
        self._grants: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        """Block until a slot is free; returns the grant time."""
        while True:
            with self._lock:
                now = self._clock()
                while self._grants and now - self._grants[0] >= self.window:
                    self._grants.popleft()
                if len(self._grants) < self.limit:
                    self._grants.append(now)
                    return now
                wait = self.window - (now - self._grants[0])
            self._sleep(max(wait, 0.001))


class DiskCache:
    """Query-keyed JSON cache with a TTL; expired entries are never served."""

    def __init__(
        self,
        directory: str | Path,
        ttl: float = CACHE_TTL_SECONDS,
        clock: Callable[[], float] = time.time,
    ) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.ttl = ttl
        self._clock = clock
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> dict[str, Any] | None:
        with self._lock:
            path = self._path(key)
            if not path.exists():
                return None
            try:
                entry = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, ValueError):
                return None
            if self._clock() - entry["fetched_at"] >= entry["ttl"]:
                path.unlink(missing_ok=True)
                return None
            return entry["body"]

    def put(self, key: str, body: dict[str, Any]) -> None:
        with self._lock:
            entry = {"fetched_at": self._clock(), "ttl": self.ttl, "body": body}
            self._path(key).write_text(json.dumps(entry), encoding="utf-8")


class Transport(Protocol):
    def get(self, path: str, params: dict[str, Any]) -> dict[str, Any]: ...


class HttpNvdTransport:
    def __init__(
        self,
        base_url: str = DEFAULT_BASE_URL,
        api_key: str = "",
        client: httpx.Client | None = None,
        timeout: float = 30.0,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self._headers = {"apiKey": api_key} if api_key else {}
        self._client = client if client is not None else httpx.Client(timeout=timeout)

    def get(self, path: str, params: dict[str, Any]) -> dict[str, Any]:
        try:
            response = self._client.get(
                f"{self.base_url}{path}", params=params, headers=self._headers
            )
        except httpx.HTTPError as exc:
            raise NvdError(f"request failed: {exc}") from exc
        if response.status_code in (403, 429):
            retry_after = response.headers.get("Retry-After")
            raise RateLimited(
                "rate limited by upstream",
                retry_after=float(retry_after) if retry_after else None,
            )
        if response.status_code == 404:
            raise NotFound(path)
        if response.status_code >= 500:
            raise Upstream5xx(f"upstream returned {response.status_code}")
        if response.status_code >= 400:
            raise NvdError(f"upstream returned {response.status_code}")
        return response.json()


class FixtureTransport:
    """Serves checked-in responses keyed by canonical_query_key()."""

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        self.request_count = 0

    def get(self, path: str, params: dict[str, Any]) -> dict[str, Any]:
        self.request_count += 1
        fixture = self.directory / f"{canonical_query_key(path, params)}.json"
        if not fixture.exists():
            raise FixtureMissing(f"no recorded response for {path} {params} ({fixture.name})")
        body = json.loads(fixture.read_text(encoding="utf-8"))
        status = body.get("__status__")
        if status == 404:
            raise NotFound(path)
        if status == 403:
            raise RateLimited("rate limited by upstream (recorded)")
        if status is not None and status >= 500:
            raise Upstream5xx(f"upstream returned {status} (recorded)")
        return body


def parse_cve_item(item: dict[str, Any]) -> CveRecord:
    cve = item["cve"]
    description = ""
    for entry in cve.get("descriptions", []):
        if entry.get("lang") == "en":
            description = entry.get("value", "")
            break
    score = None
    metrics = cve.get("metrics", {})
    for metric_key in ("cvssMetricV31", "cvssMetricV30", "cvssMetricV2"):
        entries = metrics.get(metric_key)
        if entries:
            score = float(entries[0]["cvssData"]["baseScore"])
            break
    references = tuple(ref["url"] for ref in cve.get("references", []) if "url" in ref)
    return CveRecord(
        id=cve["id"], description=description, cvss_score=score, references=references
    )


class NvdClient:
    """CVE/CPE lookups with caching and rate limiting. Safe for concurrent
    callers; a caller may block while waiting for a rate-limit slot."""

    def __init__(
        self,
        transport: Transport | None = None,
        cache: DiskCache | None = None,
        rate_limiter: RateLimiter | None = None,
        api_key: str = "",
    ) -> None:
        self.transport = transport if transport is not None else HttpNvdTransport(api_key=api_key)
        self.cache = cache
        limit = RATE_LIMIT_WITH_KEY if api_key else RATE_LIMIT_WITHOUT_KEY
        self.rate_limiter = rate_limiter if rate_limiter is not None else RateLimiter(limit)
        self.upstream_requests = 0
        self._count_lock = threading.Lock()

    def _fetch(self, path: str, params: dict[str, Any]) -> dict[str, Any]:
        key = canonical_query_key(path, params)
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                return cached
        self.rate_limiter.acquire()
        with self._count_lock:
            self.upstream_requests += 1
        body = self.transport.get(path, params)
        if self.cache is not None:
            self.cache.put(key, body)
        return body

    def get_cve(self, cve_id: str) -> CveRecord:
        if not _CVE_ID.match(cve_id):
            raise ValueError(f"not a CVE id: {cve_id!r}")
        body = self._fetch(CVES_PATH, {"cveId": cve_id})
        items = body.get("vulnerabilities", [])
        if not items:
            raise NotFound(cve_id)
        return parse_cve_item(items[0])

    def search_cves(self, query: NvdQuery) -> CvePage:
        if query.kind == CPE_SEARCH:
            raise ValueError("use search_cpes() for CPE searches")
        params: dict[str, Any] = {
            "startIndex": query.offset,
            "resultsPerPage": query.limit,
        }
        if query.kind == BY_CVE_ID:
            params["cveId"] = query.parameter
        elif query.kind == BY_CPE_NAME:
            params["cpeName"] = query.parameter
        else:
            params["keywordSearch"] = query.parameter
        body = self._fetch(CVES_PATH, params)
        records = tuple(parse_cve_item(item) for item in body.get("vulnerabilities", []))
        return CvePage(
            records=records,
            total=body.get("totalResults", len(records)),
            offset=query.offset,
            limit=query.limit,
        )

    def search_cpes(self, keyword: str, offset: int = 0, limit: int = 50) -> CpePage:
        query = NvdQuery(kind=CPE_SEARCH, parameter=keyword, offset=offset, limit=limit)
        params = {
            "keywordSearch": query.parameter,
            "startIndex": query.offset,
            "resultsPerPage": query.limit,
        }
        body = self._fetch(CPES_PATH, params)
        names = tuple(
            product["cpe"]["cpeName"]
            for product in body.get("products", [])
            if "cpe" in product and "cpeName" in product["cpe"]
        )
        return CpePage(
            names=names,
            total=body.get("totalResults", len(names)),
            offset=query.offset,
            limit=query.limit,
        )

    def cves_for_cpe(self, cpe_name: str, page_limit: int = 100) -> list[CveRecord]:
        """All CVEs for one CPE name, following pagination."""
        records: list[CveRecord] = []
        offset = 0
        while True:
            page = self.search_cves(
                NvdQuery(kind=BY_CPE_NAME, parameter=cpe_name, offset=offset, limit=page_limit)
            )
            records.extend(page.records)
            if page.next_offset is None:
                return records
            offset = page.next_offset
