/** Wire types of the control-service v1 API and its event stream. */

export type EventKind =
  | "PlanCreated"
  | "StepRouted"
  | "WorkerAction"
  | "ToolOutput"
  | "ApprovalRequested"
  | "ApprovalResolved"
  | "ObservationRecorded"
  | "Replanned"
  | "Finished"
  | "CostUpdated"
  | "SubtaskMarked"
  | "Warning";

export interface RunEvent {
  seq: number;
  kind: EventKind;
  payload: Record<string, unknown>;
  timestamp: number | string;
}

export interface PendingApproval {
  id: string;
  command: string;
  tool: string;
  worker: string;
}

export interface RunStatus {
  id: string;
  target: string;
  active: boolean;
  phase: string;
  error: string | null;
  final_response: string | null;
  last_seq: number;
}

export interface StartRunRequest {
  target: string;
  own_ip?: string;
  username?: string;
  review?: boolean;
  budget_min?: number;
}

export type ApprovalDecision = "approved" | "denied";
