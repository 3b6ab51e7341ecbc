"""Environment-driven wiring: providers, scanner, vector store, and the default
run launcher used by the CLI and the control service."""

from __future__ import annotations

import getpass
import logging
import os
import socket
import threading
from pathlib import Path

from .approval import REVIEW_ENV_VAR, ApprovalPolicy, ApprovalQueue, policy_for
from .discovery import SCAN_FIXTURE_ENV_VAR, ScanConfig, discover
from .domain import RunConfig
from .events import EventLog
from .gateway import (
    ChatProvider,
    EmbeddingProvider,
    HashEmbeddingProvider,
    HttpChatProvider,
    HttpEmbeddingProvider,
    ScriptedChatProvider,
)
from .graph import AgentGraph, RunReport
from .nvd import API_KEY_ENV_VAR, DiskCache, FixtureTransport, HttpNvdTransport, NvdClient
from .rag.store import VectorStore
from .tools.belt import RunToolset
from .tools.listener import DEFAULT_LISTEN_PORT
from .tools.websearch import FixtureSearchProvider, HttpSearchProvider, WebSearch

logger = logging.getLogger(__name__)

CHAT_BASE_URL = "AUTOPENTEST_CHAT_BASE_URL"
CHAT_API_KEY = "AUTOPENTEST_CHAT_API_KEY"
CHAT_MODEL = "AUTOPENTEST_CHAT_MODEL"
CHAT_SCRIPT = "AUTOPENTEST_CHAT_SCRIPT"
EMBED_BASE_URL = "AUTOPENTEST_EMBED_BASE_URL"
EMBED_API_KEY = "AUTOPENTEST_EMBED_API_KEY"
EMBED_MODEL = "AUTOPENTEST_EMBED_MODEL"
NVD_FIXTURES = "AUTOPENTEST_NVD_FIXTURES"
CACHE_DIR = "AUTOPENTEST_CACHE_DIR"
SEARCH_URL = "AUTOPENTEST_SEARCH_URL"
SEARCH_API_KEY = "AUTOPENTEST_SEARCH_API_KEY"
SEARCH_FIXTURES = "AUTOPENTEST_SEARCH_FIXTURES"
SCANNER_PATH = "AUTOPENTEST_NMAP"
RUNS_DIR = "AUTOPENTEST_RUNS_DIR"
RAG_DIR = "AUTOPENTEST_RAG_DIR"
LISTENER_PORT = "AUTOPENTEST_LISTENER_PORT"


def review_enabled_from_env() -> bool:
    value = os.environ.get(REVIEW_ENV_VAR, "on").strip().lower()
    return value not in ("off", "0", "false", "no")


def build_chat_provider() -> ChatProvider:
    script = os.environ.get(CHAT_SCRIPT)
    if script:
        return ScriptedChatProvider.from_file(script)
    base_url = os.environ.get(CHAT_BASE_URL)
    if not base_url:
        raise RuntimeError(
            f"no chat provider configured; set {CHAT_BASE_URL} (and {CHAT_API_KEY}) "
            f"or {CHAT_SCRIPT} for scripted playback"
        )
    return HttpChatProvider(
        base_url=base_url,
        api_key=os.environ.get(CHAT_API_KEY, ""),
        model=os.environ.get(CHAT_MODEL, "gpt-4o"),
    )


def build_embedding_provider() -> EmbeddingProvider:
    base_url = os.environ.get(EMBED_BASE_URL)
    if base_url:
        return HttpEmbeddingProvider(
            base_url=base_url,
            api_key=os.environ.get(EMBED_API_KEY, ""),
            model=os.environ.get(EMBED_MODEL, "text-embedding-ada-002"),
        )
    logger.info("no embedding endpoint configured; using deterministic local embeddings")
    return HashEmbeddingProvider()


def build_nvd_client() -> NvdClient:
    fixtures = os.environ.get(NVD_FIXTURES)
    cache_dir = os.environ.get(CACHE_DIR, str(Path.home() / ".cache" / "autopentest" / "nvd"))
    api_key = os.environ.get(API_KEY_ENV_VAR, "")
    if fixtures:
        return NvdClient(transport=FixtureTransport(fixtures), api_key=api_key)
    return NvdClient(
        transport=HttpNvdTransport(api_key=api_key),
        cache=DiskCache(cache_dir),
        api_key=api_key,
    )


def build_web_search() -> WebSearch | None:
    fixtures = os.environ.get(SEARCH_FIXTURES)
    if fixtures:
        return WebSearch(FixtureSearchProvider.from_file(fixtures))
    url = os.environ.get(SEARCH_URL)
    if url:
        return WebSearch(HttpSearchProvider(url, api_key=os.environ.get(SEARCH_API_KEY, "")))
    return None


def build_scan_config() -> ScanConfig:
    return ScanConfig(
        executable=os.environ.get(SCANNER_PATH, "nmap"),
        fixture_xml=os.environ.get(SCAN_FIXTURE_ENV_VAR) or None,
    )


def load_vector_store() -> VectorStore:
    rag_dir = os.environ.get(RAG_DIR, "rag-index")
    manifest = Path(rag_dir) / "manifest.json"
    if manifest.exists():
        return VectorStore.load(rag_dir)
    logger.info("no vector index at %s; retrieval will be skipped", rag_dir)
    return VectorStore()


def detect_own_ip() -> str:
    try:
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as probe:
            probe.connect(("10.255.255.255", 1))
            return probe.getsockname()[0]
    except OSError:
        return "127.0.0.1"


def detect_username() -> str:
    try:
        return getpass.getuser()
    except Exception:
        return "operator"


def runs_dir() -> Path:
    return Path(os.environ.get(RUNS_DIR, "runs"))


def build_graph(
    config: RunConfig,
    event_log: EventLog,
    approval_queue: ApprovalQueue,
    cancel: threading.Event,
    *,
    policy: ApprovalPolicy | None = None,
    approval_reader=None,
) -> AgentGraph:
    """Assemble a run from the environment: providers, scanner, tools, store."""
    scan_config = build_scan_config()
    nvd = build_nvd_client()
    web_search = build_web_search()
    listener_port = int(os.environ.get(LISTENER_PORT, str(DEFAULT_LISTEN_PORT)))

    def discovery_runner():
        return discover(config.target, scan_config, nvd)

    def toolset_factory(gate):
        return RunToolset(
            approval_gate=gate,
            web_search=web_search,
            nvd=nvd,
            listener_port=listener_port,
        )

    return AgentGraph(
        config,
        chat_provider=build_chat_provider(),
        embedding_provider=build_embedding_provider(),
        vector_store=load_vector_store(),
        discovery_runner=discovery_runner,
        approval_policy=policy
        if policy is not None
        else policy_for(config.review_enabled, serve=False),
        approval_queue=approval_queue,
        approval_reader=approval_reader,
        toolset_factory=toolset_factory,
        event_log=event_log,
        cancel=cancel,
    )


def default_launcher(config, event_log, approval_queue, cancel):
    """Launcher for the control service: approvals go to the API queue."""

    def execute() -> RunReport:
        graph = build_graph(
            config,
            event_log,
            approval_queue,
            cancel,
            policy=policy_for(config.review_enabled, serve=True),
        )
        return graph.run()

    return execute
