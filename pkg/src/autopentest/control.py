"""Operator-facing HTTP control surface: start runs, follow the event stream,
resolve pending approvals, and mark benchmark subtasks.

The event stream is server-sent events with sequence-number resumption; all
state of record lives in the run itself.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass
from typing import Callable, Iterator

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from .approval import ApprovalQueue, UnknownApproval
from .bench import AlreadyMarked, BadIndex, BenchSession
from .domain import (
    AlreadyResolved,
    InvalidTarget,
    RunConfig,
    format_usd,
    validate_target,
)
from .events import EventKind, EventLog, RunEvent
from .graph import RunReport

API_PREFIX = "/v1"

# launcher(config, event_log, approval_queue, cancel) -> zero-arg callable that
# executes the run to completion and returns its report
Launcher = Callable[
    [RunConfig, EventLog, ApprovalQueue, threading.Event], Callable[[], RunReport]
]


class StartRunBody(BaseModel):
    target: str
    own_ip: str = ""
    username: str = ""
    review: bool = True
    budget_min: float | None = Field(default=None, gt=0)


class ResolveApprovalBody(BaseModel):
    decision: str


@dataclass
class ManagedRun:
    id: str
    config: RunConfig
    event_log: EventLog
    cancel: threading.Event
    thread: threading.Thread | None = None
    report: RunReport | None = None
    error: str | None = None
    phase: str = "Discovering"

    @property
    def active(self) -> bool:
        return self.thread is not None and self.thread.is_alive()


class CapacityExceeded(RuntimeError):
    pass


class RunManager:
    """Owns run containers, the shared approval queue, and bench sessions."""

    def __init__(self, launcher: Launcher, max_concurrent: int = 1) -> None:
        self.launcher = launcher
        self.max_concurrent = max_concurrent
        self.approvals = ApprovalQueue()
        self._runs: dict[str, ManagedRun] = {}
        self._bench: BenchSession | None = None
        self._lock = threading.Lock()

    def register_bench(self, session: BenchSession) -> None:
        with self._lock:
            self._bench = session

    def adopt(self, managed: ManagedRun) -> None:
        """Expose an externally executed run (CLI --serve mode) through the API."""
        with self._lock:
            self._runs[managed.id] = managed

    @property
    def bench(self) -> BenchSession | None:
        with self._lock:
            return self._bench

    def start_run(self, body: StartRunBody) -> ManagedRun:
        target = validate_target(body.target, own_ip=body.own_ip, username=body.username)
        kwargs = {"target": target, "review_enabled": body.review}
        if body.budget_min is not None:
            kwargs["session_budget"] = body.budget_min * 60.0
        config = RunConfig(**kwargs)
        with self._lock:
            if sum(1 for run in self._runs.values() if run.active) >= self.max_concurrent:
                raise CapacityExceeded(f"at most {self.max_concurrent} concurrent run(s)")
            run_id = uuid.uuid4().hex[:12]
            event_log = EventLog()
            cancel = threading.Event()
            managed = ManagedRun(id=run_id, config=config, event_log=event_log, cancel=cancel)
            self._runs[run_id] = managed
        execute = self.launcher(config, event_log, self.approvals, cancel)

        def runner() -> None:
            try:
                managed.report = execute()
                managed.phase = "Finished"
            except Exception as exc:  # run failures land in the container, not the API
                managed.error = str(exc)
                managed.phase = "Failed"
                if not event_log.closed:
                    event_log.close()

        thread = threading.Thread(target=runner, daemon=True, name=f"run-{run_id}")
        managed.thread = thread
        thread.start()
        return managed

    def get(self, run_id: str) -> ManagedRun:
        with self._lock:
            if run_id not in self._runs:
                raise KeyError(run_id)
            return self._runs[run_id]

    def runs(self) -> list[ManagedRun]:
        with self._lock:
            return list(self._runs.values())


def _sse_frames(events: Iterator[RunEvent]) -> Iterator[str]:
    for event in events:
        yield f"id: {event.seq}\nevent: {event.kind.value}\ndata: {event.to_json()}\n\n"


def create_app(manager: RunManager) -> FastAPI:
    app = FastAPI(title="autopentest control service", version="1")

    @app.post(API_PREFIX + "/runs", status_code=202)
    def start_run(body: StartRunBody) -> JSONResponse:
        try:
            managed = manager.start_run(body)
        except InvalidTarget as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except CapacityExceeded as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return JSONResponse(status_code=202, content={"id": managed.id})

    def _get_run(run_id: str) -> ManagedRun:
        try:
            return manager.get(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id}")

    @app.get(API_PREFIX + "/runs/{run_id}")
    def run_status(run_id: str) -> dict:
        managed = _get_run(run_id)
        return {
            "id": managed.id,
            "target": managed.config.target.host,
            "active": managed.active,
            "phase": managed.phase,
            "error": managed.error,
            "final_response": managed.report.final_response if managed.report else None,
            "last_seq": managed.event_log.last_seq(),
        }

    @app.get(API_PREFIX + "/runs/{run_id}/events")
    def run_events(run_id: str, from_seq: int = 1) -> StreamingResponse:
        managed = _get_run(run_id)
        return StreamingResponse(
            _sse_frames(managed.event_log.stream(from_seq=from_seq)),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache"},
        )

    @app.get(API_PREFIX + "/runs/{run_id}/cost")
    def run_cost(run_id: str) -> dict:
        managed = _get_run(run_id)
        ledger = None
        if managed.report is not None:
            usage = managed.report.usage
            cost = managed.report.cost_micro
        else:
            # live runs expose the running total through CostUpdated events;
            # fall back to zero before the first completion
            events = managed.event_log.events()
            cost_events = [e for e in events if e.kind is EventKind.COST_UPDATED]
            if cost_events:
                last = cost_events[-1].payload
                return {
                    "input_tokens": last["total_input_tokens"],
                    "output_tokens": last["total_output_tokens"],
                    "cost": last["cost"],
                }
            return {"input_tokens": 0, "output_tokens": 0, "cost": format_usd(0)}
        return {
            "input_tokens": usage.input_tokens,
            "output_tokens": usage.output_tokens,
            "cost": format_usd(cost),
        }

    @app.get(API_PREFIX + "/approvals")
    def list_approvals() -> list[dict]:
        return [
            {
                "id": request.id,
                "command": request.command,
                "tool": request.tool,
                "worker": request.worker.value,
            }
            for request in manager.approvals.pending()
        ]

    @app.post(API_PREFIX + "/approvals/{approval_id}")
    def resolve_approval(approval_id: str, body: ResolveApprovalBody) -> dict:
        if body.decision not in ("approved", "denied"):
            raise HTTPException(status_code=400, detail="decision must be approved or denied")
        try:
            request = manager.approvals.resolve(approval_id, body.decision == "approved")
        except UnknownApproval:
            raise HTTPException(status_code=404, detail=f"unknown approval {approval_id}")
        except AlreadyResolved as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"id": request.id, "state": request.state.value}

    @app.post(API_PREFIX + "/bench/{machine}/subtasks/{index}")
    def mark_subtask(machine: str, index: int) -> dict:
        session = manager.bench
        if session is None or session.checklist.machine.lower() != machine.lower():
            raise HTTPException(status_code=404, detail=f"no active bench session for {machine}")
        try:
            log = session.mark(index)
        except BadIndex as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except AlreadyMarked as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {
            "machine": log.machine,
            "completed": len(log.completions),
            "total": len(session.checklist.subtasks),
        }

    return app
