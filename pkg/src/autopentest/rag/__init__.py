"""Retrieval-augmented context for the specialised workers."""

from .store import (
    CHUNK_OVERLAP,
    CHUNK_SIZE,
    RETRIEVAL_K,
    DocumentChunk,
    RetrievalResult,
    VectorStore,
    chunk_text,
    render_retrieval_block,
    summarize_memory,
)

__all__ = [
    "CHUNK_OVERLAP",
    "CHUNK_SIZE",
    "RETRIEVAL_K",
    "DocumentChunk",
    "RetrievalResult",
    "VectorStore",
    "chunk_text",
    "render_retrieval_block",
    "summarize_memory",
]
