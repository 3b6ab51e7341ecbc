"""Benchmark harness: machine subtask checklists, completion marking, the
session/restart timing rules, and score/cost tables.

Subtask completion is human-marked (CLI or control API), matching how the
benchmark is scored; timers and scores are pure functions of the run log.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from .domain import (
    RESTART_GAP_SECONDS_DEFAULT,
    SESSION_BUDGET_SECONDS_DEFAULT,
    DEFAULT_PRICING,
    Pricing,
    TokenUsage,
    format_usd,
)
from .gateway import cost_of

SHIPPED_MACHINES = ("Devvortex", "Broker", "Codify")


class UnknownMachine(KeyError):
    pass


class AlreadyMarked(ValueError):
    pass


class BadIndex(IndexError):
    pass


@dataclass(frozen=True)
class SubtaskChecklist:
    machine: str
    subtasks: tuple[str, ...]


def load_checklist(machine: str, path: str | Path | None = None) -> SubtaskChecklist:
    """Load a shipped checklist by machine name, or a user-supplied JSON file."""
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return SubtaskChecklist(machine=raw["machine"], subtasks=tuple(raw["subtasks"]))
    for shipped in SHIPPED_MACHINES:
        if shipped.lower() == machine.lower():
            text = (
                resources.files("autopentest")
                .joinpath(f"checklists/{shipped.lower()}.json")
                .read_text("utf-8")
            )
            raw = json.loads(text)
            return SubtaskChecklist(machine=raw["machine"], subtasks=tuple(raw["subtasks"]))
    raise UnknownMachine(machine)


@dataclass(frozen=True)
class RunLog:
    machine: str
    approach: str
    session_start: float
    completions: tuple[tuple[int, float], ...] = ()
    restarts: tuple[float, ...] = ()


def mark_complete(log: RunLog, index: int, now: float, total: int | None = None) -> RunLog:
    """Record a subtask completion; indices are unique and instants increase."""
    if total is None:
        total = len(load_checklist(log.machine).subtasks)
    if not 0 <= index < total:
        raise BadIndex(f"subtask index {index} out of range for {log.machine} ({total} subtasks)")
    if any(existing == index for existing, _ in log.completions):
        raise AlreadyMarked(f"subtask {index} already marked complete")
    if log.completions and now <= log.completions[-1][1]:
        raise ValueError("completion instants must be strictly increasing")
    return replace(log, completions=log.completions + ((index, now),))


def record_restart(log: RunLog, now: float) -> RunLog:
    return replace(log, restarts=log.restarts + (now,))


def restart_due(
    log: RunLog, now: float, restart_gap: float = RESTART_GAP_SECONDS_DEFAULT
) -> bool:
    """True when nothing has been completed for longer than the restart gap,
    measured from the last completion, last restart, or session start."""
    reference = log.session_start
    if log.completions:
        reference = max(reference, log.completions[-1][1])
    if log.restarts:
        reference = max(reference, log.restarts[-1])
    return now - reference > restart_gap


def session_over(
    log: RunLog, now: float, session_budget: float = SESSION_BUDGET_SECONDS_DEFAULT
) -> bool:
    return now - log.session_start >= session_budget


@dataclass(frozen=True)
class ScoreReport:
    machine: str
    total: int
    completed: int
    percentage: float


def score(completed: int, total: int, machine: str = "") -> ScoreReport:
    """Completion percentage with exact arithmetic, rounded half-up to two
    decimals only at the end."""
    if total <= 0:
        raise ValueError("total must be positive")
    if not 0 <= completed <= total:
        raise ValueError("completed must be between 0 and total")
    exact = Decimal(100 * completed) / Decimal(total)
    rounded = exact.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    return ScoreReport(machine=machine, total=total, completed=completed, percentage=float(rounded))


@dataclass(frozen=True)
class CostRow:
    machine: str
    input_tokens: int
    output_tokens: int
    cost_micro: int

    @property
    def input_k(self) -> int:
        return (self.input_tokens + 500) // 1000

    @property
    def output_k(self) -> int:
        return (self.output_tokens + 500) // 1000


@dataclass(frozen=True)
class CostReport:
    rows: tuple[CostRow, ...]
    total: CostRow

    def render(self) -> str:
        header = ("Machine", "Input Tokens (K)", "Output Tokens (K)", "Total LLM Cost")
        body = [
            (row.machine, str(row.input_k), str(row.output_k), format_usd(row.cost_micro))
            for row in self.rows
        ]
        body.append(
            (
                "Total",
                str(self.total.input_k),
                str(self.total.output_k),
                format_usd(self.total.cost_micro),
            )
        )
        widths = [
            max(len(header[i]), *(len(row[i]) for row in body)) if body else len(header[i])
            for i in range(4)
        ]
        lines = ["  ".join(header[i].ljust(widths[i]) for i in range(4))]
        for row in body:
            lines.append(
                row[0].ljust(widths[0])
                + "  "
                + row[1].rjust(widths[1])
                + "  "
                + row[2].rjust(widths[2])
                + "  "
                + row[3].rjust(widths[3])
            )
        return "\n".join(lines)

    def to_json(self) -> str:
        def row_dict(row: CostRow) -> dict:
            return {
                "machine": row.machine,
                "input_tokens_k": row.input_k,
                "output_tokens_k": row.output_k,
                "cost": format_usd(row.cost_micro),
            }

        return json.dumps(
            {"rows": [row_dict(r) for r in self.rows], "total": row_dict(self.total)},
            indent=2,
        )


def cost_report(
    ledgers: Sequence[tuple[str, TokenUsage]], pricing: Pricing = DEFAULT_PRICING
) -> CostReport:
    """Per-run cost rows plus a totals row; the total is priced from summed raw
    token counts, not by summing the rounded per-row costs."""
    rows = tuple(
        CostRow(
            machine=machine,
            input_tokens=usage.input_tokens,
            output_tokens=usage.output_tokens,
            cost_micro=cost_of(usage, pricing),
        )
        for machine, usage in ledgers
    )
    summed = TokenUsage(
        sum(r.input_tokens for r in rows),
        sum(r.output_tokens for r in rows),
    )
    total = CostRow(
        machine="Total",
        input_tokens=summed.input_tokens,
        output_tokens=summed.output_tokens,
        cost_micro=cost_of(summed, pricing),
    )
    return CostReport(rows=rows, total=total)


class BenchSession:
    """Scored session wrapping the agent run: restarts the approach when the
    20-minute rule fires and stops at the session budget.

    `run_factory` returns (start, cancel) callables for one approach run; the
    session owns the RunLog and exposes mark() for the human scorer.
    """

    def __init__(
        self,
        checklist: SubtaskChecklist,
        approach: str,
        run_factory: Callable[[], tuple[Callable[[], None], Callable[[], None]]],
        *,
        clock: Callable[[], float],
        sleeper: Callable[[float], None],
        session_budget: float = SESSION_BUDGET_SECONDS_DEFAULT,
        restart_gap: float = RESTART_GAP_SECONDS_DEFAULT,
        poll_interval: float = 1.0,
        on_event: Callable[[str, dict], None] | None = None,
    ) -> None:
        self.checklist = checklist
        self.run_factory = run_factory
        self.clock = clock
        self.sleeper = sleeper
        self.session_budget = session_budget
        self.restart_gap = restart_gap
        self.poll_interval = poll_interval
        self.on_event = on_event
        self._lock = threading.Lock()
        self.log = RunLog(machine=checklist.machine, approach=approach, session_start=clock())
        self.restart_count = 0

    def mark(self, index: int) -> RunLog:
        with self._lock:
            self.log = mark_complete(
                self.log, index, self.clock(), total=len(self.checklist.subtasks)
            )
            if self.on_event is not None:
                self.on_event(
                    "SubtaskMarked",
                    {"machine": self.log.machine, "index": index,
                     "subtask": self.checklist.subtasks[index]},
                )
            return self.log

    def completed_count(self) -> int:
        with self._lock:
            return len(self.log.completions)

    def score(self) -> ScoreReport:
        return score(self.completed_count(), len(self.checklist.subtasks), self.checklist.machine)

    def run(self) -> ScoreReport:
        """Drive approach runs until the session budget elapses."""
        while not session_over(self.log, self.clock(), self.session_budget):
            start, cancel = self.run_factory()
            worker = threading.Thread(target=start, daemon=True)
            worker.start()
            while worker.is_alive():
                if session_over(self.log, self.clock(), self.session_budget):
                    cancel()
                    worker.join(timeout=30)
                    return self.score()
                with self._lock:
                    due = restart_due(self.log, self.clock(), self.restart_gap)
                if due:
                    cancel()
                    worker.join(timeout=30)
                    with self._lock:
                        self.log = record_restart(self.log, self.clock())
                    self.restart_count += 1
                    break
                self.sleeper(self.poll_interval)
            else:
                # run finished on its own before any timer fired; start another
                # attempt unless the budget has elapsed
                continue
        return self.score()
