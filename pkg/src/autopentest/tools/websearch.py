"""Web search tool backed by a pluggable HTTP provider, with a fixture mode for
offline runs."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .base import ToolResult


@dataclass(frozen=True)
class SearchHit:
    title: str
    url: str
    snippet: str


class SearchProvider(Protocol):
    def search(self, query: str) -> Sequence[SearchHit]: ...


class HttpSearchProvider:
    """POSTs the query to a search endpoint and reads a results array of
    title/url/content objects."""

    def __init__(
        self,
        endpoint: str,
        api_key: str = "",
        client: httpx.Client | None = None,
        timeout: float = 30.0,
        max_results: int = 5,
    ) -> None:
        self.endpoint = endpoint
        self.api_key = api_key
        self.max_results = max_results
        self._client = client if client is not None else httpx.Client(timeout=timeout)

    def search(self, query: str) -> Sequence[SearchHit]:
        body = {"query": query, "max_results": self.max_results}
        if self.api_key:
            body["api_key"] = self.api_key
        response = self._client.post(self.endpoint, json=body)
        response.raise_for_status()
        payload = response.json()
        return [
            SearchHit(
                title=item.get("title", ""),
                url=item.get("url", ""),
                snippet=item.get("content", item.get("snippet", "")),
            )
            for item in payload.get("results", [])
        ]


class FixtureSearchProvider:
    """Serves recorded results from a JSON file mapping query -> hits."""

    def __init__(self, fixtures: dict[str, list[dict[str, str]]]) -> None:
        self._fixtures = fixtures

    @classmethod
    def from_file(cls, path: str | Path) -> "FixtureSearchProvider":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def search(self, query: str) -> Sequence[SearchHit]:
        hits = self._fixtures.get(query, [])
        return [
            SearchHit(h.get("title", ""), h.get("url", ""), h.get("snippet", h.get("content", "")))
            for h in hits
        ]


class WebSearch:
    def __init__(self, provider: SearchProvider) -> None:
        self.provider = provider

    def run(self, query: str) -> ToolResult:
        if not query.strip():
            raise ValueError("search query must be non-empty")
        try:
            hits = self.provider.search(query)
        except Exception as exc:
            return ToolResult.from_output(f"search unavailable: {exc}")
        if not hits:
            return ToolResult.from_output("no results")
        blocks = [f"{h.title}\n{h.url}\n{h.snippet}" for h in hits]
        return ToolResult.from_output("\n\n".join(blocks))
