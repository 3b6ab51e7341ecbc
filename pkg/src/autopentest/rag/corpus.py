"""Document corpus management: a per-worker manifest of source URIs, a fetch
step that snapshots them to local text files, and offline ingestion of the
snapshots into the vector store."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from importlib import resources
from pathlib import Path
from typing import Callable

import httpx

from ..domain import WorkerName
from ..gateway import LlmGateway
from .store import VectorStore

logger = logging.getLogger(__name__)

_TAG = re.compile(r"<[^>]+>")
_WS = re.compile(r"[ \t]+")


def default_manifest() -> dict[str, list[str]]:
    """Shipped manifest mapping worker name to its document source URIs."""
    text = resources.files("autopentest").joinpath("rag/docs_manifest.json").read_text("utf-8")
    return json.loads(text)


def load_manifest(path: str | Path | None = None) -> dict[str, list[str]]:
    if path is None:
        return default_manifest()
    return json.loads(Path(path).read_text(encoding="utf-8"))


def snapshot_name(uri: str) -> str:
    digest = hashlib.sha256(uri.encode("utf-8")).hexdigest()[:16]
    stem = re.sub(r"[^A-Za-z0-9._-]+", "_", uri.split("//", 1)[-1])[:80]
    return f"{stem}__{digest}.txt"


def strip_markup(text: str) -> str:
    """Best-effort plain text from HTML snapshots; plain text passes through."""
    without_tags = _TAG.sub(" ", text)
    lines = [_WS.sub(" ", line).strip() for line in without_tags.splitlines()]
    return "\n".join(line for line in lines if line)


def fetch_snapshots(
    manifest: dict[str, list[str]],
    snapshot_dir: str | Path,
    fetcher: Callable[[str], str] | None = None,
) -> int:
    """Download every manifest URI into the snapshot directory (skipping ones
    already present) so ingestion is reproducible offline. Returns the number
    fetched."""
    snapshot_dir = Path(snapshot_dir)
    snapshot_dir.mkdir(parents=True, exist_ok=True)

    def default_fetcher(uri: str) -> str:
        response = httpx.get(uri, follow_redirects=True, timeout=60.0)
        response.raise_for_status()
        return response.text

    fetch = fetcher if fetcher is not None else default_fetcher
    fetched = 0
    for uris in manifest.values():
        for uri in uris:
            path = snapshot_dir / snapshot_name(uri)
            if path.exists():
                continue
            try:
                path.write_text(strip_markup(fetch(uri)), encoding="utf-8")
                fetched += 1
            except Exception as exc:
                logger.warning("failed to fetch %s: %s", uri, exc)
    return fetched


def ingest_snapshots(
    manifest: dict[str, list[str]],
    snapshot_dir: str | Path,
    store: VectorStore,
    gateway: LlmGateway,
) -> dict[str, int]:
    """Ingest each worker's snapshotted documents into its namespace. Returns
    chunks stored per worker."""
    snapshot_dir = Path(snapshot_dir)
    counts: dict[str, int] = {}
    for worker_value, uris in manifest.items():
        namespace = WorkerName(worker_value)
        documents = []
        for uri in uris:
            path = snapshot_dir / snapshot_name(uri)
            if not path.exists():
                logger.warning("no snapshot for %s; run the fetch step first", uri)
                continue
            documents.append((uri, path.read_text(encoding="utf-8")))
        if documents:
            counts[worker_value] = store.ingest(namespace, documents, gateway)
    return counts
