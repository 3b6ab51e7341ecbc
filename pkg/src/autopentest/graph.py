"""Orchestration core: initial prompt construction, planning and re-planning,
supervisor routing, the specialised-worker execution loop, and termination.

One run executes as a single sequential loop; concurrency lives underneath it
(reverse listener, approval resolution, event-stream fan-out).
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .approval import ApprovalGate, ApprovalPolicy, ApprovalQueue
from .domain import (
    Observation,
    Plan,
    RunConfig,
    RunPhase,
    RunState,
    ServiceDiscoveryReport,
    TokenUsage,
    TranscriptMessage,
    UsageLedger,
    WorkerName,
    format_usd,
)
from .events import EventKind, EventLog
from .gateway import (
    FREE_TEXT,
    STRUCTURED,
    ChatProvider,
    CompletionRequest,
    EmbeddingProvider,
    GatewayError,
    LlmGateway,
    cost_of,
)
from .rag.store import (
    RETRIEVAL_K,
    RetrievalResult,
    VectorStore,
    render_retrieval_block,
    summarize_memory,
)
from .templates import (
    build_initial_user_prompt,
    load_specialization,
    planner_system_prompt,
    render_past_steps,
    replanner_system_prompt,
    supervisor_intro_prompt,
    supervisor_select_prompt,
    worker_system_prompt,
)
from .tools.base import ToolRegistry, registry_for
from .tools.belt import RunToolset

FINISH_TOKEN = "FINISH"

PLAN_REFORMAT_INSTRUCTION = (
    "Reformat your plan as a list with one step per line and output only the plan steps."
)
REPLAN_REFORMAT_INSTRUCTION = (
    'Reply with a JSON object: {"action": "plan", "steps": ["..."]} to continue working, '
    'or {"action": "respond", "response": "..."} to finish and answer the user.'
)
ROUTE_RETRY_INSTRUCTION = "Answer with exactly one of: {options}"

_BULLET_LINE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+(.*\S)\s*$")
_RESPOND_MARKER = re.compile(r"(?is)^respond(?:\s+to\s+the\s+user)?\s*[:,\-]?\s*(.*)$")


class UnparseablePlan(RuntimeError):
    pass


class UnparseableReplan(RuntimeError):
    pass


class RunAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class FinalResponse:
    text: str


@dataclass(frozen=True)
class WorkerSpec:
    name: WorkerName
    specialization: str
    registry: ToolRegistry
    extra_instructions: str = ""
    namespace: WorkerName | None = None

    @property
    def rag_namespace(self) -> WorkerName:
        return self.namespace if self.namespace is not None else self.name


def default_worker_specs() -> dict[WorkerName, WorkerSpec]:
    """One spec per worker; specialization texts come from the prompt assets
    (first line fills the template, remaining lines are extra instructions)."""
    specs: dict[WorkerName, WorkerSpec] = {}
    for worker in WorkerName:
        text = load_specialization(worker)
        first, _, rest = text.partition("\n")
        specs[worker] = WorkerSpec(
            name=worker,
            specialization=first,
            extra_instructions=rest,
            registry=registry_for(worker),
            namespace=worker,
        )
    return specs


@dataclass(frozen=True)
class PlannerContext:
    input: str
    plan: Plan
    past_steps: tuple[Observation, ...]


@dataclass(frozen=True)
class SupervisorContext:
    members: tuple[str, ...]
    options: tuple[str, ...]
    conversation: tuple[TranscriptMessage, ...]

    def __post_init__(self) -> None:
        if self.options != self.members + (FINISH_TOKEN,):
            raise ValueError("options must be exactly members plus FINISH")


@dataclass(frozen=True)
class RunReport:
    final_response: str
    plans: tuple[Plan, ...]
    observations: tuple[Observation, ...]
    usage: TokenUsage
    cost_micro: int
    replan_count: int
    event_log_path: Path | None


def parse_plan_steps(text: str) -> list[str]:
    """Extract plan steps from a completion: the maximal trailing block of
    bullet items; if the reply has no bullets at all, every non-empty line is
    an item."""
    lines = text.splitlines()
    trailing: list[str] = []
    for line in reversed(lines):
        if not line.strip():
            continue
        matched = _BULLET_LINE.match(line)
        if matched:
            trailing.append(matched.group(1))
        else:
            break
    if trailing:
        return list(reversed(trailing))
    bullets = [m.group(1) for line in lines if (m := _BULLET_LINE.match(line))]
    if bullets:
        return bullets
    return [line.strip() for line in lines if line.strip()]


def parse_replan(content: str) -> Plan | FinalResponse | None:
    """Replan outcome: a JSON object with an action discriminator, or free text
    (leading 'respond' marker ends the run, anything else is a new plan)."""
    text = content.strip()
    if not text:
        return None
    try:
        data = json.loads(text)
    except ValueError:
        data = None
    if isinstance(data, dict) and "action" in data:
        if data["action"] == "respond":
            response = str(data.get("response", "")).strip()
            return FinalResponse(response) if response else None
        if data["action"] == "plan":
            steps = [str(s).strip() for s in data.get("steps", []) if str(s).strip()]
            return Plan(tuple(steps)) if steps else None
        return None
    marker = _RESPOND_MARKER.match(text)
    if marker:
        remainder = marker.group(1).strip()
        return FinalResponse(remainder if remainder else text)
    steps = parse_plan_steps(text)
    return Plan(tuple(steps)) if steps else None


class AgentGraph:
    """Wires one run together: discovery, planner, supervisor, workers, events."""

    def __init__(
        self,
        config: RunConfig,
        *,
        chat_provider: ChatProvider,
        discovery_runner: Callable[[], ServiceDiscoveryReport],
        embedding_provider: EmbeddingProvider | None = None,
        vector_store: VectorStore | None = None,
        approval_policy: ApprovalPolicy | None = None,
        approval_queue: ApprovalQueue | None = None,
        approval_reader: Callable[[str], str] | None = None,
        toolset_factory: Callable[[ApprovalGate], RunToolset] | None = None,
        event_log: EventLog | None = None,
        worker_specs: dict[WorkerName, WorkerSpec] | None = None,
        retrieval_k: int = RETRIEVAL_K,
        clock: Callable[[], float] = time.time,
        cancel: threading.Event | None = None,
    ) -> None:
        self.config = config
        self.event_log = event_log if event_log is not None else EventLog()
        self.ledger = UsageLedger()
        self.gateway = LlmGateway(
            chat_provider,
            embedding_provider,
            ledger=self.ledger,
            on_completion_usage=self._emit_cost,
        )
        self.store = vector_store if vector_store is not None else VectorStore()
        policy = approval_policy if approval_policy is not None else ApprovalPolicy(
            mode="auto" if not config.review_enabled else "interactive"
        )
        self.approval_gate = ApprovalGate(
            policy,
            approval_queue,
            reader=approval_reader,
            emit=self.event_log.emit,
            clock=clock,
        )
        if toolset_factory is not None:
            self.toolset = toolset_factory(self.approval_gate)
        else:
            self.toolset = RunToolset(approval_gate=self.approval_gate)
        self.discovery_runner = discovery_runner
        self.worker_specs = worker_specs if worker_specs is not None else default_worker_specs()
        self.retrieval_k = retrieval_k
        self.clock = clock
        self.cancel = cancel
        self.state = RunState(config, ledger=self.ledger)
        self.last_worker_transcript: list[TranscriptMessage] = []

    # --- event helpers ---

    def _emit(self, kind: EventKind, payload: dict) -> None:
        self.event_log.emit(kind, payload)

    def _emit_cost(self, usage: TokenUsage) -> None:
        totals = self.ledger.completion_total
        cost = cost_of(totals, self.config.pricing)
        self._emit(
            EventKind.COST_UPDATED,
            {
                "input_tokens": usage.input_tokens,
                "output_tokens": usage.output_tokens,
                "total_input_tokens": totals.input_tokens,
                "total_output_tokens": totals.output_tokens,
                "cost": format_usd(cost),
            },
        )

    def _check_cancel(self) -> None:
        if self.cancel is not None and self.cancel.is_set():
            raise RunAborted("run cancelled")

    def _message(self, role: str, content: str, **kwargs) -> TranscriptMessage:
        return TranscriptMessage(role=role, content=content, timestamp=self.clock(), **kwargs)

    def _complete_text(
        self, messages: list[TranscriptMessage], response_mode: str = FREE_TEXT, **kwargs
    ) -> str:
        request = CompletionRequest(
            messages=tuple(messages),
            temperature=self.config.temperature,
            response_mode=response_mode,
            **kwargs,
        )
        return self.gateway.complete(request).content

    # --- planner ---

    def plan(self, initial_prompt: str) -> Plan:
        base = [
            self._message("system", planner_system_prompt()),
            self._message("user", initial_prompt),
        ]
        content = self._complete_text(base)
        steps = parse_plan_steps(content)
        if not steps:
            retry = base + [
                self._message("agent", content),
                self._message("user", PLAN_REFORMAT_INSTRUCTION),
            ]
            content = self._complete_text(retry)
            steps = parse_plan_steps(content)
            if not steps:
                raise UnparseablePlan("planner returned no parseable steps after a retry")
        return Plan(tuple(steps))

    def replan(self, ctx: PlannerContext) -> Plan | FinalResponse:
        if not ctx.past_steps:
            raise ValueError("replan requires at least one observation")
        system_text = replanner_system_prompt(ctx.input, ctx.plan, ctx.past_steps)
        base = [self._message("system", system_text)]
        content = self._complete_text(base, response_mode=STRUCTURED)
        outcome = parse_replan(content)
        if outcome is None:
            retry = base + [
                self._message("agent", content),
                self._message("user", REPLAN_REFORMAT_INSTRUCTION),
            ]
            content = self._complete_text(retry, response_mode=STRUCTURED)
            outcome = parse_replan(content)
            if outcome is None:
                raise UnparseableReplan("replanner returned no parseable outcome after a retry")
        return outcome

    # --- supervisor ---

    def _supervisor_context(self, step: str) -> SupervisorContext:
        members = tuple(w.value for w in self.worker_specs)
        conversation: list[TranscriptMessage] = []
        if self.state.discovery is not None:
            conversation.append(self._message("user", self.state.discovery.rendered_context))
        for observation in self.state.past_steps:
            conversation.append(
                self._message(
                    "user",
                    f"Observation from {observation.worker.value}: {observation.summary}",
                )
            )
        conversation.append(self._message("user", f"The next planned step is: {step}"))
        return SupervisorContext(
            members=members,
            options=members + (FINISH_TOKEN,),
            conversation=tuple(conversation),
        )

    def route(self, ctx: SupervisorContext) -> str:
        """Pick the next actor; out-of-set completions get one retry with a
        hint, then fall back to Enumeration with a warning."""
        messages = (
            [self._message("system", supervisor_intro_prompt(ctx.members))]
            + list(ctx.conversation)
            + [self._message("system", supervisor_select_prompt(ctx.options))]
        )
        reply = self._complete_text(messages).strip().strip("\"'`.")
        if reply in ctx.options:
            return reply
        retry = messages + [
            self._message("agent", reply),
            self._message(
                "user", ROUTE_RETRY_INSTRUCTION.format(options=", ".join(ctx.options))
            ),
        ]
        second = self._complete_text(retry).strip().strip("\"'`.")
        if second in ctx.options:
            return second
        self._emit(
            EventKind.WARNING,
            {
                "message": "supervisor returned no valid worker; defaulting to Enumeration",
                "replies": [reply, second],
            },
        )
        return WorkerName.ENUMERATION.value

    # --- worker loop ---

    def _worker_context_message(self, task: str) -> str:
        parts = [f"Your current task:\n{task}"]
        if self.state.discovery is not None:
            parts += ["", "Information gathered about the target host:",
                      self.state.discovery.rendered_context]
        if self.state.past_steps:
            parts += ["", "Observations from previous workers:",
                      render_past_steps(self.state.past_steps)]
        return "\n".join(parts)

    def _synthesized_observation(
        self, spec: WorkerSpec, task: str, transcript: list[TranscriptMessage], reason: str
    ) -> Observation:
        tail = [m for m in transcript if m.role in ("agent", "tool")][-3:]
        lines = []
        for m in tail:
            body = m.content or (m.tool_call.name if m.tool_call else "")
            lines.append(f"{m.role}: {body[:400]}")
        summary = f"No final observations were reported by the worker ({reason})."
        if lines:
            summary += " Most recent activity:\n" + "\n".join(lines)
        return Observation(step=task, worker=spec.name, summary=summary, synthesized=True)

    def run_worker(self, spec: WorkerSpec, task: str) -> Observation:
        """Iterate the worker until it reports back, the iteration limit trips,
        or the provider fails; every outcome becomes exactly one Observation."""
        self.approval_gate.begin_task()
        belt = self.toolset.belt(spec.name)
        transcript = [
            self._message(
                "system", worker_system_prompt(spec.specialization, spec.extra_instructions)
            ),
            self._message("user", self._worker_context_message(task)),
        ]
        self.last_worker_transcript = transcript
        for iteration in range(1, self.config.max_worker_iterations + 1):
            self._check_cancel()
            summary = ""
            try:
                summary = summarize_memory(self.gateway, transcript, self.config.temperature)
            except GatewayError as exc:
                self._emit(
                    EventKind.WARNING,
                    {"message": f"memory summarization failed; retrieval skipped: {exc}"},
                )
            retrieved: list[RetrievalResult] = []
            if summary.strip():
                try:
                    retrieved = self.store.retrieve(
                        spec.rag_namespace, summary, self.retrieval_k, self.gateway
                    )
                except GatewayError as exc:
                    self._emit(
                        EventKind.WARNING,
                        {"message": f"retrieval embedding failed; continuing without it: {exc}"},
                    )
            messages = list(transcript)
            if retrieved:
                messages.append(self._message("system", render_retrieval_block(retrieved)))
            request = CompletionRequest(
                messages=tuple(messages),
                temperature=self.config.temperature,
                tool_schemas=spec.registry.tools,
            )
            try:
                result = self.gateway.complete(request)
            except GatewayError as exc:
                self._emit(
                    EventKind.WARNING,
                    {"message": f"worker completion failed: {exc}", "worker": spec.name.value},
                )
                return self._synthesized_observation(spec, task, transcript, f"provider error: {exc}")
            if result.tool_call is None:
                transcript.append(self._message("agent", result.content, usage=result.usage))
                self._emit(
                    EventKind.WORKER_ACTION,
                    {
                        "worker": spec.name.value,
                        "iteration": iteration,
                        "action": "final",
                        "content": result.content,
                        "memory_summary": summary,
                        "retrieved": [r.chunk.id for r in retrieved],
                    },
                )
                summary_text = result.content.strip() or "(worker returned an empty final response)"
                return Observation(step=task, worker=spec.name, summary=summary_text)
            transcript.append(
                self._message("agent", result.content, usage=result.usage, tool_call=result.tool_call)
            )
            self._emit(
                EventKind.WORKER_ACTION,
                {
                    "worker": spec.name.value,
                    "iteration": iteration,
                    "action": "tool_call",
                    "tool": result.tool_call.name,
                    "arguments": dict(result.tool_call.arguments),
                    "memory_summary": summary,
                    "retrieved": [r.chunk.id for r in retrieved],
                },
            )
            tool_result = belt.execute(result.tool_call)
            self._emit(
                EventKind.TOOL_OUTPUT,
                {
                    "worker": spec.name.value,
                    "tool": result.tool_call.name,
                    "output": tool_result.text,
                    "exit_status": tool_result.exit_status,
                    "truncated": tool_result.truncated,
                },
            )
            transcript.append(
                self._message("tool", tool_result.text, tool_call_id=result.tool_call.id)
            )
        self._emit(
            EventKind.WARNING,
            {
                "message": f"worker hit the {self.config.max_worker_iterations}-iteration limit",
                "worker": spec.name.value,
            },
        )
        return self._synthesized_observation(
            spec, task, transcript, f"{self.config.max_worker_iterations}-iteration limit reached"
        )

    # --- run loop ---

    def run(self) -> RunReport:
        state = self.state
        plans: list[Plan] = []
        replan_count = 0
        try:
            state.discovery = self.discovery_runner()
            state.advance(RunPhase.PLANNING)
            target = self.config.target
            initial_prompt = build_initial_user_prompt(
                target.host, target.own_ip, target.username, state.discovery.rendered_context
            )
            plan = self.plan(initial_prompt)
            state.plan = plan
            plans.append(plan)
            self._emit(EventKind.PLAN_CREATED, {"steps": list(plan.steps)})
            while True:
                self._check_cancel()
                state.advance(RunPhase.ROUTING)
                step = state.plan.steps[0]
                token = self.route(self._supervisor_context(step))
                if token == FINISH_TOKEN:
                    self._emit(
                        EventKind.WARNING,
                        {
                            "message": "supervisor selected FINISH with plan steps pending; "
                            "executing the step with Enumeration"
                        },
                    )
                    token = WorkerName.ENUMERATION.value
                worker = WorkerName(token)
                self._emit(EventKind.STEP_ROUTED, {"step": step, "worker": worker.value})
                state.advance(RunPhase.EXECUTING)
                observation = self.run_worker(self.worker_specs[worker], step)
                state.record_observation(observation)
                self._emit(
                    EventKind.OBSERVATION_RECORDED,
                    {
                        "step": observation.step,
                        "worker": observation.worker.value,
                        "summary": observation.summary,
                        "synthesized": observation.synthesized,
                    },
                )
                state.advance(RunPhase.REPLANNING)
                outcome = self.replan(
                    PlannerContext(
                        input=initial_prompt, plan=state.plan, past_steps=state.past_steps
                    )
                )
                replan_count += 1
                if isinstance(outcome, FinalResponse):
                    self._emit(EventKind.REPLANNED, {"action": "respond"})
                    state.advance(RunPhase.FINISHED, final_response=outcome.text)
                    self._emit(EventKind.FINISHED, {"final_response": outcome.text})
                    break
                state.plan = outcome
                plans.append(outcome)
                self._emit(EventKind.REPLANNED, {"action": "plan", "steps": list(outcome.steps)})
        finally:
            self.toolset.close()
            self.event_log.close()
        totals = self.ledger.completion_total
        return RunReport(
            final_response=state.final_response or "",
            plans=tuple(plans),
            observations=state.past_steps,
            usage=totals,
            cost_micro=cost_of(totals, self.config.pricing),
            replan_count=replan_count,
            event_log_path=self.event_log.path,
        )
