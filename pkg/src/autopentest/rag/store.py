"""Per-worker document store: chunk, embed, and retrieve by cosine similarity
within a worker's namespace.

The index is an exact full scan over the namespace (corpora are small curated
document sets), which keeps retrieval trivially consistent with a brute-force
oracle. On disk it is a JSON manifest plus a flat float32 vector file.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..domain import TranscriptMessage, WorkerName
from ..gateway import (
    CompletionRequest,
    EmbeddingVector,
    LlmGateway,
)
from .kernels import cosine_scores, normalize_rows, normalize_vector

logger = logging.getLogger(__name__)

CHUNK_SIZE = 1_000
CHUNK_OVERLAP = 200
RETRIEVAL_K = 4

SUMMARIZER_SYSTEM_PROMPT = (
    "Summarize the conversation below into a compact description of the current "
    "task, the actions taken so far, their results, and any open leads. "
    "Reply with the summary text only."
)


def chunk_text(text: str, size: int = CHUNK_SIZE, overlap: int = CHUNK_OVERLAP) -> list[str]:
    """Sliding-window chunking: windows start every (size - overlap) characters;
    a window ending mid-word is trimmed back to the last whitespace inside its
    overlap region so words stay intact without losing coverage."""
    if size <= 0 or not 0 <= overlap < size:
        raise ValueError("need size > 0 and 0 <= overlap < size")
    stride = size - overlap
    chunks: list[str] = []
    for start in range(0, len(text), stride):
        end = min(start + size, len(text))
        if end < len(text) and not text[end].isspace() and not text[end - 1].isspace():
            cut = text.rfind(" ", start + stride, end)
            for candidate in ("\n", "\t"):
                cut = max(cut, text.rfind(candidate, start + stride, end))
            if cut > start + stride:
                end = cut
        chunks.append(text[start:end])
    return chunks


@dataclass(frozen=True)
class DocumentChunk:
    id: str
    namespace: WorkerName
    text: str
    vector: EmbeddingVector
    source_uri: str
    ordinal: int


@dataclass(frozen=True)
class RetrievalResult:
    chunk: DocumentChunk
    similarity: float


class VectorStore:
    """Namespace-partitioned vector index with exact cosine retrieval.

    Ingestion is exclusive per store; retrieval reads a quiescent snapshot.
    """

    def __init__(
        self,
        chunk_size: int = CHUNK_SIZE,
        chunk_overlap: int = CHUNK_OVERLAP,
    ) -> None:
        self.chunk_size = chunk_size
        self.chunk_overlap = chunk_overlap
        self._lock = threading.Lock()
        self._chunks: dict[WorkerName, list[DocumentChunk]] = {}
        self._matrix_cache: dict[WorkerName, np.ndarray] = {}

    def namespaces(self) -> tuple[WorkerName, ...]:
        with self._lock:
            return tuple(self._chunks)

    def chunk_count(self, namespace: WorkerName) -> int:
        with self._lock:
            return len(self._chunks.get(namespace, []))

    def ingest(
        self,
        namespace: WorkerName,
        documents: Sequence[tuple[str, str]],
        gateway: LlmGateway,
    ) -> int:
        """Chunk, embed and store documents under the namespace. Re-ingesting a
        source_uri replaces its previous chunks. Returns chunks stored."""
        if not documents:
            raise ValueError("ingest() needs at least one document")
        prepared: list[tuple[str, int, str]] = []
        for source_uri, text in documents:
            if not text.strip():
                logger.warning("skipping empty document %s", source_uri)
                continue
            for ordinal, piece in enumerate(chunk_text(text, self.chunk_size, self.chunk_overlap)):
                prepared.append((source_uri, ordinal, piece))
        if not prepared:
            return 0
        vectors = gateway.embed([piece for _, _, piece in prepared])
        new_chunks = [
            DocumentChunk(
                id=f"{namespace.value}:{source_uri}#{ordinal}",
                namespace=namespace,
                text=piece,
                vector=vector,
                source_uri=source_uri,
                ordinal=ordinal,
            )
            for (source_uri, ordinal, piece), vector in zip(prepared, vectors)
        ]
        replaced_sources = {uri for uri, _, _ in prepared}
        with self._lock:
            existing = self._chunks.get(namespace, [])
            kept = [c for c in existing if c.source_uri not in replaced_sources]
            merged = kept + new_chunks
            dimensions = {c.vector.dimension for c in merged}
            if len(dimensions) > 1:
                raise ValueError(
                    f"embedding dimension mismatch in namespace {namespace.value}: {dimensions}"
                )
            self._chunks[namespace] = merged
            self._matrix_cache.pop(namespace, None)
        return len(new_chunks)

    def _namespace_matrix(self, namespace: WorkerName) -> tuple[list[DocumentChunk], np.ndarray]:
        with self._lock:
            chunks = list(self._chunks.get(namespace, []))
            cached = self._matrix_cache.get(namespace)
            if cached is None and chunks:
                raw = np.array([c.vector.values for c in chunks], dtype=np.float64)
                cached = normalize_rows(raw)
                self._matrix_cache[namespace] = cached
            return chunks, cached if cached is not None else np.empty((0, 0))

    def retrieve(
        self,
        namespace: WorkerName,
        query_text: str,
        k: int,
        gateway: LlmGateway,
    ) -> list[RetrievalResult]:
        """Top-k chunks of the namespace by cosine similarity to the query, ties
        broken by (source_uri, ordinal) ascending. An empty namespace yields an
        empty result."""
        if k < 1:
            raise ValueError("k must be >= 1")
        chunks, matrix = self._namespace_matrix(namespace)
        if not chunks:
            logger.info("retrieval skipped: namespace %s is empty", namespace.value)
            return []
        query_vector = gateway.embed([query_text])[0]
        if query_vector.dimension != matrix.shape[1]:
            raise ValueError(
                f"query dimension {query_vector.dimension} does not match namespace "
                f"dimension {matrix.shape[1]}"
            )
        query = normalize_vector(np.array(query_vector.values, dtype=np.float64))
        scores = cosine_scores(matrix, query)
        order = sorted(
            range(len(chunks)),
            key=lambda i: (-scores[i], chunks[i].source_uri, chunks[i].ordinal),
        )
        return [
            RetrievalResult(chunk=chunks[i], similarity=float(scores[i]))
            for i in order[:k]
        ]

    # --- persistence (manifest + flat vector file) ---

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        records = []
        vectors: list[tuple[float, ...]] = []
        with self._lock:
            for namespace in sorted(self._chunks, key=lambda w: w.value):
                for chunk in self._chunks[namespace]:
                    records.append(
                        {
                            "id": chunk.id,
                            "namespace": chunk.namespace.value,
                            "text": chunk.text,
                            "source_uri": chunk.source_uri,
                            "ordinal": chunk.ordinal,
                            "dimension": chunk.vector.dimension,
                            "row": len(vectors),
                        }
                    )
                    vectors.append(chunk.vector.values)
        manifest = {
            "chunk_size": self.chunk_size,
            "chunk_overlap": self.chunk_overlap,
            "chunks": records,
        }
        (directory / "manifest.json").write_text(
            json.dumps(manifest, ensure_ascii=False, indent=2), encoding="utf-8"
        )
        flat = np.array(vectors, dtype=np.float32) if vectors else np.empty((0, 0), np.float32)
        flat.tofile(directory / "vectors.f32")

    @classmethod
    def load(cls, directory: str | Path) -> "VectorStore":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        store = cls(chunk_size=manifest["chunk_size"], chunk_overlap=manifest["chunk_overlap"])
        records = manifest["chunks"]
        if records:
            dimension = records[0]["dimension"]
            flat = np.fromfile(directory / "vectors.f32", dtype=np.float32).reshape(
                len(records), dimension
            )
            for record in records:
                chunk = DocumentChunk(
                    id=record["id"],
                    namespace=WorkerName(record["namespace"]),
                    text=record["text"],
                    vector=EmbeddingVector(tuple(float(x) for x in flat[record["row"]])),
                    source_uri=record["source_uri"],
                    ordinal=record["ordinal"],
                )
                store._chunks.setdefault(chunk.namespace, []).append(chunk)
        return store


def render_transcript(messages: Iterable[TranscriptMessage]) -> str:
    return "\n".join(f"{m.role}: {m.content}" for m in messages)


def summarize_memory(
    gateway: LlmGateway,
    transcript: Sequence[TranscriptMessage],
    temperature: float = 0.0,
) -> str:
    """One completion call that condenses the worker's memory into the text used
    as the retrieval query."""
    if not transcript:
        raise ValueError("summarize_memory() needs a non-empty transcript")
    request = CompletionRequest(
        messages=(
            TranscriptMessage(role="system", content=SUMMARIZER_SYSTEM_PROMPT),
            TranscriptMessage(role="user", content=render_transcript(transcript)),
        ),
        temperature=temperature,
    )
    return gateway.complete(request).content


def render_retrieval_block(results: Sequence[RetrievalResult]) -> str:
    """Delimited context block injected into the worker's next completion."""
    lines = ["--- retrieved reference material ---"]
    for result in results:
        lines.append(f"[{result.chunk.source_uri} #{result.chunk.ordinal}]")
        lines.append(result.chunk.text)
    lines.append("--- end of reference material ---")
    return "\n".join(lines)
