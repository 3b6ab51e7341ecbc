"""Shared vocabulary for a run: targets, discovery results, plans, transcripts,
approvals, and usage accounting.

Values are immutable once constructed and safe to share across threads; the
only mutable pieces (RunState, UsageLedger, ApprovalRequest) guard their own
transitions.
"""

from __future__ import annotations

import ipaddress
import json
import re
import threading
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Any, Iterable, Mapping

MAX_WORKER_ITERATIONS_DEFAULT = 100
SESSION_BUDGET_SECONDS_DEFAULT = 120 * 60.0
RESTART_GAP_SECONDS_DEFAULT = 20 * 60.0

MICRO_PER_DOLLAR = 1_000_000

_CVE_ID = re.compile(r"^CVE-\d{4}-\d{4,}$")
_HOST_LABEL = re.compile(r"^[a-z0-9]([a-z0-9-]{0,61}[a-z0-9])?$")


class InvalidTarget(ValueError):
    """Raised when user input is neither an IP address nor a valid hostname."""


class IllegalPhaseTransition(RuntimeError):
    """Raised on a RunState phase change outside the legal transition relation."""


class AlreadyResolved(RuntimeError):
    """Raised when an ApprovalRequest is resolved a second time."""


def dollars_to_micro(amount: str | float | Decimal) -> int:
    """Convert a dollar amount to integer micro-dollars (exact for decimal strings)."""
    return int((Decimal(str(amount)) * MICRO_PER_DOLLAR).to_integral_value())


def format_usd(micro: int) -> str:
    """Render micro-dollars as '$X.XX', rounding half-up to cents."""
    sign = "-" if micro < 0 else ""
    cents = (abs(micro) + 5_000) // 10_000
    return f"{sign}${cents // 100}.{cents % 100:02d}"


@dataclass(frozen=True)
class Target:
    host: str
    own_ip: str = ""
    username: str = ""

    def __post_init__(self) -> None:
        if not self.host:
            raise InvalidTarget("target host must be non-empty")


def validate_target(raw: str, own_ip: str = "", username: str = "") -> Target:
    """Normalize user input into a Target: canonical IP form or lower-cased hostname."""
    candidate = (raw or "").strip()
    if not candidate:
        raise InvalidTarget("empty target")
    try:
        return Target(host=str(ipaddress.ip_address(candidate)), own_ip=own_ip, username=username)
    except ValueError:
        pass
    host = candidate.lower().rstrip(".")
    if len(host) > 253 or not host:
        raise InvalidTarget(f"not an IP address or hostname: {raw!r}")
    if not all(_HOST_LABEL.match(label) for label in host.split(".")):
        raise InvalidTarget(f"not an IP address or hostname: {raw!r}")
    return Target(host=host, own_ip=own_ip, username=username)


@dataclass(frozen=True)
class Pricing:
    """Provider token pricing in integer micro-dollars per 1K tokens."""

    input_per_1k: int
    output_per_1k: int

    @classmethod
    def from_dollars(cls, input_per_1k: str | float, output_per_1k: str | float) -> "Pricing":
        return cls(dollars_to_micro(input_per_1k), dollars_to_micro(output_per_1k))


DEFAULT_PRICING = Pricing.from_dollars("0.005", "0.015")


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
        )


class UsageLedger:
    """Per-run token accounting. Completion and embedding usage are kept apart:
    cost reports cover completions only."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._completions: list[TokenUsage] = []
        self._embeddings: list[TokenUsage] = []
        self._completion_total = TokenUsage()
        self._embedding_total = TokenUsage()

    def record_completion(self, usage: TokenUsage) -> None:
        with self._lock:
            self._completions.append(usage)
            self._completion_total = self._completion_total + usage

    def record_embedding(self, usage: TokenUsage) -> None:
        with self._lock:
            self._embeddings.append(usage)
            self._embedding_total = self._embedding_total + usage

    @property
    def completion_entries(self) -> tuple[TokenUsage, ...]:
        with self._lock:
            return tuple(self._completions)

    @property
    def embedding_entries(self) -> tuple[TokenUsage, ...]:
        with self._lock:
            return tuple(self._embeddings)

    @property
    def completion_total(self) -> TokenUsage:
        with self._lock:
            return self._completion_total

    @property
    def embedding_total(self) -> TokenUsage:
        with self._lock:
            return self._embedding_total


@dataclass(frozen=True)
class ServiceRecord:
    port: int
    transport: str
    service_name: str
    product: str | None = None
    version: str | None = None
    cpes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port out of range: {self.port}")
        if self.transport not in ("tcp", "udp"):
            raise ValueError(f"transport must be tcp or udp, got {self.transport!r}")
        for cpe in self.cpes:
            if not cpe.startswith("cpe:2.3:"):
                raise ValueError(f"not a CPE 2.3 URI: {cpe!r}")


@dataclass(frozen=True)
class CveRecord:
    id: str
    description: str
    cvss_score: float | None = None
    references: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not _CVE_ID.match(self.id):
            raise ValueError(f"not a CVE id: {self.id!r}")
        if self.cvss_score is not None and not 0.0 <= self.cvss_score <= 10.0:
            raise ValueError(f"CVSS score out of range: {self.cvss_score}")


@dataclass(frozen=True)
class ServiceDiscoveryReport:
    """Immutable result of the initial enumeration, shared by all later agents."""

    target: Target
    os_guess: str | None
    services: tuple[ServiceRecord, ...]
    cves: tuple[CveRecord, ...]
    rendered_context: str
    enrichment_errors: tuple[str, ...] = ()


@dataclass(frozen=True)
class Plan:
    steps: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for step in self.steps:
            if not step.strip():
                raise ValueError("plan steps must be non-empty")


class WorkerName(str, Enum):
    ENUMERATION = "Enumeration"
    BROKEN_ACCESS_CONTROL = "BrokenAccessControl"
    CRYPTOGRAPHIC_FAILURES = "CryptographicFailures"
    INJECTION = "Injection"
    INSECURE_DESIGN = "InsecureDesign"
    SECURITY_CONFIGURATION = "SecurityConfiguration"
    IDENTIFICATION_AND_AUTHENTICATION_FAILURES = "IdentificationAndAuthenticationFailures"
    PRIVILEGE_ESCALATION = "PrivilegeEscalation"


@dataclass(frozen=True)
class Observation:
    step: str
    worker: WorkerName
    summary: str
    synthesized: bool = False

    def __post_init__(self) -> None:
        if not self.summary.strip():
            raise ValueError("observation summary must be non-empty")


@dataclass(frozen=True)
class ToolCallRequest:
    id: str
    name: str
    arguments: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class TranscriptMessage:
    role: str
    content: str
    timestamp: float = 0.0
    usage: TokenUsage | None = None
    tool_call: ToolCallRequest | None = None
    tool_call_id: str | None = None

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "agent", "tool"):
            raise ValueError(f"unknown transcript role: {self.role!r}")


def check_transcript_monotone(messages: Iterable[TranscriptMessage]) -> bool:
    """True when timestamps are non-decreasing in transcript order."""
    last = float("-inf")
    for message in messages:
        if message.timestamp < last:
            return False
        last = message.timestamp
    return True


class ApprovalState(str, Enum):
    PENDING = "pending"
    APPROVED = "approved"
    DENIED = "denied"


@dataclass
class ApprovalRequest:
    id: str
    command: str
    tool: str
    worker: WorkerName
    state: ApprovalState = ApprovalState.PENDING

    def resolve(self, approved: bool) -> None:
        if self.state is not ApprovalState.PENDING:
            raise AlreadyResolved(f"approval {self.id} already {self.state.value}")
        self.state = ApprovalState.APPROVED if approved else ApprovalState.DENIED


@dataclass(frozen=True)
class RunConfig:
    target: Target
    review_enabled: bool = True
    temperature: float = 0.0
    max_worker_iterations: int = MAX_WORKER_ITERATIONS_DEFAULT
    session_budget: float = SESSION_BUDGET_SECONDS_DEFAULT
    restart_gap: float = RESTART_GAP_SECONDS_DEFAULT
    pricing: Pricing = DEFAULT_PRICING
    provider: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature out of range: {self.temperature}")
        if self.max_worker_iterations < 1:
            raise ValueError("max_worker_iterations must be >= 1")
        if self.session_budget <= 0 or self.restart_gap <= 0:
            raise ValueError("durations must be positive")


class RunPhase(str, Enum):
    DISCOVERING = "Discovering"
    PLANNING = "Planning"
    ROUTING = "Routing"
    EXECUTING = "Executing"
    REPLANNING = "Replanning"
    FINISHED = "Finished"


LEGAL_PHASE_TRANSITIONS: frozenset[tuple[RunPhase, RunPhase]] = frozenset(
    {
        (RunPhase.DISCOVERING, RunPhase.PLANNING),
        (RunPhase.PLANNING, RunPhase.ROUTING),
        (RunPhase.ROUTING, RunPhase.EXECUTING),
        (RunPhase.EXECUTING, RunPhase.REPLANNING),
        (RunPhase.REPLANNING, RunPhase.ROUTING),
        (RunPhase.REPLANNING, RunPhase.FINISHED),
    }
)


class RunState:
    """Mutable state of one run. Mutation is owned by the agent-graph run loop;
    phase changes outside LEGAL_PHASE_TRANSITIONS raise."""

    def __init__(self, config: RunConfig, ledger: UsageLedger | None = None) -> None:
        self.config = config
        self.phase = RunPhase.DISCOVERING
        self.discovery: ServiceDiscoveryReport | None = None
        self.plan = Plan()
        self.ledger = ledger if ledger is not None else UsageLedger()
        self.final_response: str | None = None
        self._past_steps: list[Observation] = []

    @property
    def past_steps(self) -> tuple[Observation, ...]:
        return tuple(self._past_steps)

    def advance(self, phase: RunPhase, *, final_response: str | None = None) -> None:
        if (self.phase, phase) not in LEGAL_PHASE_TRANSITIONS:
            raise IllegalPhaseTransition(f"{self.phase.value} -> {phase.value}")
        if (phase is RunPhase.FINISHED) != (final_response is not None):
            raise ValueError("final_response must be set exactly when finishing")
        self.phase = phase
        if final_response is not None:
            self.final_response = final_response

    def record_observation(self, observation: Observation) -> None:
        self._past_steps.append(observation)

    def snapshot(self) -> dict[str, Any]:
        total = self.ledger.completion_total
        return {
            "phase": self.phase.value,
            "target": self.config.target.host,
            "plan": list(self.plan.steps),
            "past_steps": [
                {
                    "step": o.step,
                    "worker": o.worker.value,
                    "summary": o.summary,
                    "synthesized": o.synthesized,
                }
                for o in self._past_steps
            ],
            "usage": {"input_tokens": total.input_tokens, "output_tokens": total.output_tokens},
            "final_response": self.final_response,
        }

    def snapshot_json(self) -> str:
        return json.dumps(self.snapshot(), sort_keys=True, ensure_ascii=False)
