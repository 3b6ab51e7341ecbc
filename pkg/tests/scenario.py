"""Shared builders for the scripted end-to-end scenario used by the graph,
control-service, CLI, and acceptance tests."""

from __future__ import annotations

import json
from pathlib import Path

from autopentest.approval import ApprovalPolicy
from autopentest.discovery import ScanConfig, discover
from autopentest.domain import RunConfig, Target, WorkerName
from autopentest.events import EventLog
from autopentest.gateway import HashEmbeddingProvider, LlmGateway, ScriptedChatProvider
from autopentest.graph import AgentGraph
from autopentest.nvd import FixtureTransport, NvdClient, RateLimiter
from autopentest.rag.store import VectorStore
from autopentest.tools.belt import RunToolset
from autopentest.tools.shells import ProcessRunner

FIXTURES = Path(__file__).parent / "fixtures"

GOLDEN_TARGET = Target(host="10.10.11.239", own_ip="10.10.14.2", username="root")


class ScriptedReaderFactory:
    """Interactive-approval reader fed from a fixed answer list."""

    def __init__(self, answers):
        self.answers = list(answers)

    def __call__(self, prompt: str) -> str:
        return self.answers.pop(0)


def offline_nvd_client() -> NvdClient:
    return NvdClient(
        transport=FixtureTransport(FIXTURES / "nvd"), rate_limiter=RateLimiter(10_000)
    )


def golden_discovery_runner(target: Target = GOLDEN_TARGET):
    nvd = offline_nvd_client()
    config = ScanConfig(fixture_xml=FIXTURES / "scan_two_ports.xml")

    def runner():
        return discover(target, config, nvd)

    return runner


def seeded_store() -> tuple[VectorStore, HashEmbeddingProvider]:
    """Vector store with one small document per namespace used in the golden run.
    Uses the default embedding dimension so env-wired runs can query it."""
    embedder = HashEmbeddingProvider()
    gateway = LlmGateway(chat=None, embeddings=embedder)
    store = VectorStore()
    store.ingest(
        WorkerName.ENUMERATION,
        [
            (
                "doc://notes/enumeration",
                "Service enumeration methodology: sweep every port, fingerprint "
                "versions, and check discovered products against known CVE entries.",
            )
        ],
        gateway,
    )
    store.ingest(
        WorkerName.INJECTION,
        [
            (
                "doc://notes/injection",
                "Injection testing checklist: probe inputs with payloads, confirm "
                "execution context, then establish a stable shell for follow-up.",
            )
        ],
        gateway,
    )
    return store, embedder


def build_golden_graph(
    event_path: Path | None = None,
    *,
    approval_answers=("y", "y"),
    runner: ProcessRunner | None = None,
    config: RunConfig | None = None,
    script_path: Path | None = None,
) -> AgentGraph:
    provider = ScriptedChatProvider.from_file(script_path or FIXTURES / "golden_scenario.json")
    store, embedder = seeded_store()
    run_config = config if config is not None else RunConfig(target=GOLDEN_TARGET)

    def toolset_factory(gate):
        return RunToolset(approval_gate=gate, runner=runner or ProcessRunner())

    return AgentGraph(
        run_config,
        chat_provider=provider,
        embedding_provider=embedder,
        vector_store=store,
        discovery_runner=golden_discovery_runner(run_config.target),
        approval_policy=ApprovalPolicy(mode="interactive"),
        approval_reader=ScriptedReaderFactory(approval_answers),
        toolset_factory=toolset_factory,
        event_log=EventLog(path=event_path),
    )


def masked_event_lines(path: Path) -> list[str]:
    """Event-log lines with timestamps (the only nondeterministic field) masked."""
    lines = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        record["timestamp"] = "***"
        lines.append(json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":")))
    return lines
