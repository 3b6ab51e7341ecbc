"""Human-in-the-loop command review: every approval-requiring tool call passes
through a decision source (terminal prompt, control-API queue, or auto-approve)
before anything is spawned.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Callable

from .domain import AlreadyResolved, ApprovalRequest, ApprovalState, WorkerName
from .events import EventKind

REVIEW_ENV_VAR = "AUTOPENTEST_REVIEW"
PROMPT = "approve command? [y/n] > "
DECLINE_MESSAGE = "The user has declined to execute the command. Try a different approach."

INTERACTIVE = "interactive"
API = "api"
AUTO = "auto"


def decline_message() -> str:
    return DECLINE_MESSAGE


@dataclass(frozen=True)
class ApprovalPolicy:
    mode: str = INTERACTIVE
    decision_timeout: float = 600.0

    def __post_init__(self) -> None:
        if self.mode not in (INTERACTIVE, API, AUTO):
            raise ValueError(f"unknown approval mode: {self.mode!r}")
        if self.decision_timeout <= 0:
            raise ValueError("decision_timeout must be positive")


def policy_for(review_enabled: bool, serve: bool = False, decision_timeout: float = 600.0) -> ApprovalPolicy:
    """Map run settings to a policy; auto mode is only reachable with review off."""
    if not review_enabled:
        return ApprovalPolicy(mode=AUTO)
    return ApprovalPolicy(mode=API if serve else INTERACTIVE, decision_timeout=decision_timeout)


class UnknownApproval(KeyError):
    pass


class ApprovalQueue:
    """Pending-approval store shared between the blocked worker loop and the
    resolver (control API or terminal)."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._requests: dict[str, ApprovalRequest] = {}
        self._signals: dict[str, threading.Event] = {}

    def submit(self, request: ApprovalRequest) -> threading.Event:
        with self._lock:
            self._requests[request.id] = request
            signal = threading.Event()
            self._signals[request.id] = signal
            return signal

    def pending(self) -> list[ApprovalRequest]:
        with self._lock:
            return [r for r in self._requests.values() if r.state is ApprovalState.PENDING]

    def get(self, request_id: str) -> ApprovalRequest:
        with self._lock:
            if request_id not in self._requests:
                raise UnknownApproval(request_id)
            return self._requests[request_id]

    def resolve(self, request_id: str, approved: bool) -> ApprovalRequest:
        with self._lock:
            if request_id not in self._requests:
                raise UnknownApproval(request_id)
            request = self._requests[request_id]
            request.resolve(approved)
            self._signals[request_id].set()
            return request


def request_approval(
    request: ApprovalRequest,
    policy: ApprovalPolicy,
    *,
    queue: ApprovalQueue | None = None,
    reader: Callable[[str], str] | None = None,
) -> bool:
    """Resolve one pending request according to the policy; returns approval.

    Interactive mode accepts exactly y/yes/n/no and re-prompts on anything
    else. API mode parks the request on the queue and blocks until resolved;
    a decision timeout counts as a denial.
    """
    if request.state is not ApprovalState.PENDING:
        raise AlreadyResolved(f"approval {request.id} already {request.state.value}")
    if policy.mode == AUTO:
        request.resolve(True)
        return True
    if policy.mode == INTERACTIVE:
        ask = reader if reader is not None else input
        while True:
            answer = ask(PROMPT).strip()
            if answer in ("y", "yes"):
                request.resolve(True)
                return True
            if answer in ("n", "no"):
                request.resolve(False)
                return False
    assert policy.mode == API
    if queue is None:
        raise ValueError("api approval mode requires a queue")
    signal = queue.submit(request)
    signal.wait(timeout=policy.decision_timeout)
    if request.state is ApprovalState.PENDING:
        try:
            queue.resolve(request.id, approved=False)
        except AlreadyResolved:
            pass
    return request.state is ApprovalState.APPROVED


class ApprovalGate:
    """Per-run review gate with a per-task denial memory: a command denied once
    is auto-denied on exact repetition for the rest of the worker task."""

    def __init__(
        self,
        policy: ApprovalPolicy,
        queue: ApprovalQueue | None = None,
        *,
        reader: Callable[[str], str] | None = None,
        emit: Callable[[EventKind, dict], None] | None = None,
        clock: Callable[[], float] = time.time,
    ) -> None:
        self.policy = policy
        self.queue = queue if queue is not None else ApprovalQueue()
        self._reader = reader
        self._emit = emit
        self._clock = clock
        self._counter = 0
        self._denied_commands: set[str] = set()
        self._lock = threading.Lock()

    def begin_task(self) -> None:
        """Reset the denial memory at the start of each worker task."""
        with self._lock:
            self._denied_commands = set()

    def _next_id(self) -> str:
        with self._lock:
            self._counter += 1
            return f"appr-{self._counter}"

    def _note(self, kind: EventKind, payload: dict) -> None:
        if self._emit is not None:
            self._emit(kind, payload)

    def review(self, command: str, tool: str, worker: WorkerName) -> bool:
        request = ApprovalRequest(id=self._next_id(), command=command, tool=tool, worker=worker)
        self._note(
            EventKind.APPROVAL_REQUESTED,
            {"id": request.id, "command": command, "tool": tool, "worker": worker.value},
        )
        with self._lock:
            repeat_denied = command in self._denied_commands
        if repeat_denied:
            request.resolve(False)
            self._note(
                EventKind.APPROVAL_RESOLVED,
                {"id": request.id, "decision": "denied", "auto": True},
            )
            return False
        approved = request_approval(
            request, self.policy, queue=self.queue, reader=self._reader
        )
        self._note(
            EventKind.APPROVAL_RESOLVED,
            {
                "id": request.id,
                "decision": "approved" if approved else "denied",
                "auto": self.policy.mode == AUTO,
            },
        )
        if not approved:
            with self._lock:
                self._denied_commands.add(command)
        return approved
