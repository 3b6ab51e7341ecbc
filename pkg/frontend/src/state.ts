/**
 * Console state and its reducer.
 *
 * The reducer is the single place server events become UI state, and it is a
 * pure function of the ordered event prefix: replaying the same events always
 * yields the same state. Events must arrive densely by sequence number; an
 * event from the future flags a forced resubscribe instead of rendering a gap.
 */

import type { PendingApproval, RunEvent } from "./types.js";

export type Connection = "idle" | "connecting" | "live" | "closed" | "error";

export interface TranscriptEntry {
  seq: number;
  kind: string;
  text: string;
}

export interface CostMeter {
  inputTokens: number;
  outputTokens: number;
  display: string;
}

export interface ConsoleState {
  runId: string | null;
  connection: Connection;
  lastSeq: number;
  needsResubscribe: boolean;
  plan: string[];
  transcript: TranscriptEntry[];
  approvalOrder: string[];
  pendingApprovals: Record<string, PendingApproval>;
  resolvedApprovals: Record<string, string>;
  cost: CostMeter;
  finalResponse: string | null;
  lastError: string | null;
}

export function initialState(): ConsoleState {
  return {
    runId: null,
    connection: "idle",
    lastSeq: 0,
    needsResubscribe: false,
    plan: [],
    transcript: [],
    approvalOrder: [],
    pendingApprovals: {},
    resolvedApprovals: {},
    cost: { inputTokens: 0, outputTokens: 0, display: "$0.00" },
    finalResponse: null,
    lastError: null,
  };
}

const asString = (value: unknown): string => (typeof value === "string" ? value : String(value ?? ""));
const asNumber = (value: unknown): number => (typeof value === "number" ? value : 0);

function transcriptText(event: RunEvent): string | null {
  const p = event.payload;
  switch (event.kind) {
    case "PlanCreated":
      return `plan created:\n${(p.steps as string[]).map((s) => `  - ${s}`).join("\n")}`;
    case "StepRouted":
      return `step routed to ${asString(p.worker)}: ${asString(p.step)}`;
    case "WorkerAction":
      if (p.action === "tool_call") {
        return `[${asString(p.worker)}] calls ${asString(p.tool)} ${JSON.stringify(p.arguments ?? {})}`;
      }
      return `[${asString(p.worker)}] reports back`;
    case "ToolOutput":
      return `${asString(p.tool)} output:\n${indent(asString(p.output))}`;
    case "ApprovalRequested":
      return `approval requested [${asString(p.id)}] ${asString(p.tool)} (${asString(p.worker)}): ${asString(p.command)}`;
    case "ApprovalResolved":
      return `approval ${asString(p.id)} ${asString(p.decision)}${p.auto ? " (auto)" : ""}`;
    case "ObservationRecorded":
      return `observation [${asString(p.worker)}]${p.synthesized ? " (synthesized)" : ""}:\n${indent(asString(p.summary))}`;
    case "Replanned":
      return p.action === "plan"
        ? `replanned:\n${(p.steps as string[]).map((s) => `  - ${s}`).join("\n")}`
        : "replanned: responding to the user";
    case "Finished":
      return `finished: ${asString(p.final_response)}`;
    case "SubtaskMarked":
      return `subtask marked: ${asString(p.subtask ?? p.index)}`;
    case "Warning":
      return `warning: ${asString(p.message)}`;
    case "CostUpdated":
      return null; // feeds the cost meter, not the transcript
  }
}

function indent(text: string): string {
  return text
    .split("\n")
    .map((line) => `  ${line}`)
    .join("\n");
}

/** Apply one server event. Out-of-order events never corrupt the view:
 * duplicates are dropped, future events flag a resubscribe. */
export function applyEvent(state: ConsoleState, event: RunEvent): ConsoleState {
  if (event.seq <= state.lastSeq) {
    return state;
  }
  if (event.seq !== state.lastSeq + 1) {
    return { ...state, needsResubscribe: true };
  }
  const next: ConsoleState = {
    ...state,
    lastSeq: event.seq,
    transcript: state.transcript,
    plan: state.plan,
    pendingApprovals: state.pendingApprovals,
    approvalOrder: state.approvalOrder,
    resolvedApprovals: state.resolvedApprovals,
    cost: state.cost,
  };
  const p = event.payload;
  switch (event.kind) {
    case "PlanCreated":
      next.plan = [...(p.steps as string[])];
      break;
    case "Replanned":
      if (p.action === "plan") {
        next.plan = [...(p.steps as string[])];
      } else {
        next.plan = [];
      }
      break;
    case "ApprovalRequested": {
      const approval: PendingApproval = {
        id: asString(p.id),
        command: asString(p.command),
        tool: asString(p.tool),
        worker: asString(p.worker),
      };
      next.pendingApprovals = { ...state.pendingApprovals, [approval.id]: approval };
      next.approvalOrder = [...state.approvalOrder, approval.id];
      break;
    }
    case "ApprovalResolved": {
      const id = asString(p.id);
      const { [id]: _resolved, ...remaining } = state.pendingApprovals;
      next.pendingApprovals = remaining;
      next.approvalOrder = state.approvalOrder.filter((existing) => existing !== id);
      next.resolvedApprovals = { ...state.resolvedApprovals, [id]: asString(p.decision) };
      break;
    }
    case "CostUpdated":
      next.cost = {
        inputTokens: asNumber(p.total_input_tokens),
        outputTokens: asNumber(p.total_output_tokens),
        display: asString(p.cost),
      };
      break;
    case "Finished":
      next.finalResponse = asString(p.final_response);
      break;
    default:
      break;
  }
  const line = transcriptText(event);
  if (line !== null) {
    next.transcript = [...state.transcript, { seq: event.seq, kind: event.kind, text: line }];
  }
  return next;
}

export function applyEvents(state: ConsoleState, events: Iterable<RunEvent>): ConsoleState {
  let current = state;
  for (const event of events) {
    current = applyEvent(current, event);
  }
  return current;
}

/** An approval is actionable exactly while it is pending. */
export function isApprovalActionable(state: ConsoleState, id: string): boolean {
  return id in state.pendingApprovals && !(id in state.resolvedApprovals);
}
