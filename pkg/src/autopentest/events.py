"""Run event stream: a dense, strictly ordered sequence per run, written to a
line-delimited log and fanned out to live subscribers (terminal, HTTP stream).
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterator


class EventKind(str, Enum):
    PLAN_CREATED = "PlanCreated"
    STEP_ROUTED = "StepRouted"
    WORKER_ACTION = "WorkerAction"
    TOOL_OUTPUT = "ToolOutput"
    APPROVAL_REQUESTED = "ApprovalRequested"
    APPROVAL_RESOLVED = "ApprovalResolved"
    OBSERVATION_RECORDED = "ObservationRecorded"
    REPLANNED = "Replanned"
    FINISHED = "Finished"
    COST_UPDATED = "CostUpdated"
    SUBTASK_MARKED = "SubtaskMarked"
    WARNING = "Warning"


@dataclass(frozen=True)
class RunEvent:
    seq: int
    kind: EventKind
    payload: dict[str, Any]
    timestamp: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "kind": self.kind.value,
                "payload": self.payload,
                "timestamp": self.timestamp,
            },
            sort_keys=True,
            ensure_ascii=False,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "RunEvent":
        raw = json.loads(line)
        return cls(
            seq=raw["seq"],
            kind=EventKind(raw["kind"]),
            payload=raw["payload"],
            timestamp=raw["timestamp"],
        )


class EventLog:
    """Single-producer ordered event buffer with optional JSONL persistence.

    Sequence numbers start at 1 and are dense. `stream()` yields a gapless
    replay from any starting sequence and then follows the live tail until the
    log is closed.
    """

    def __init__(self, path: str | Path | None = None, clock: Callable[[], float] = time.time):
        self.path = Path(path) if path is not None else None
        self._clock = clock
        self._events: list[RunEvent] = []
        self._cond = threading.Condition()
        self._closed = False
        self._handle = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = self.path.open("w", encoding="utf-8")

    def emit(self, kind: EventKind, payload: dict[str, Any]) -> RunEvent:
        with self._cond:
            if self._closed:
                raise RuntimeError("event log is closed")
            event = RunEvent(
                seq=len(self._events) + 1,
                kind=kind,
                payload=payload,
                timestamp=self._clock(),
            )
            self._events.append(event)
            if self._handle is not None:
                self._handle.write(event.to_json() + "\n")
                self._handle.flush()
            self._cond.notify_all()
            return event

    def close(self) -> None:
        with self._cond:
            self._closed = True
            if self._handle is not None:
                self._handle.close()
                self._handle = None
            self._cond.notify_all()

    @property
    def closed(self) -> bool:
        with self._cond:
            return self._closed

    def events(self, from_seq: int = 1) -> list[RunEvent]:
        with self._cond:
            return [e for e in self._events if e.seq >= from_seq]

    def last_seq(self) -> int:
        with self._cond:
            return len(self._events)

    def stream(self, from_seq: int = 1, poll_timeout: float = 0.5) -> Iterator[RunEvent]:
        """Replay events >= from_seq, then follow live until closed."""
        next_seq = max(1, from_seq)
        while True:
            with self._cond:
                while len(self._events) < next_seq and not self._closed:
                    self._cond.wait(timeout=poll_timeout)
                batch = self._events[next_seq - 1 :]
                closed = self._closed
            for event in batch:
                yield event
                next_seq = event.seq + 1
            if closed and not batch:
                return


def load_event_log(path: str | Path) -> list[RunEvent]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [RunEvent.from_json(line) for line in lines if line.strip()]
