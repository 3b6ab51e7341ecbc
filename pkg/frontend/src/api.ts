/** Typed client for the control-service v1 HTTP API. */

import type {
  ApprovalDecision,
  PendingApproval,
  RunStatus,
  StartRunRequest,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`${status}: ${detail}`);
  }
}

async function raise(response: Response): Promise<never> {
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class ControlApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}/v1${path}`;
  }

  async startRun(request: StartRunRequest): Promise<string> {
    const response = await this.fetchFn(this.url("/runs"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(request),
    });
    if (response.status !== 202) await raise(response);
    const body = (await response.json()) as { id: string };
    return body.id;
  }

  async runStatus(runId: string): Promise<RunStatus> {
    const response = await this.fetchFn(this.url(`/runs/${runId}`));
    if (!response.ok) await raise(response);
    return (await response.json()) as RunStatus;
  }

  async runCost(runId: string): Promise<{ input_tokens: number; output_tokens: number; cost: string }> {
    const response = await this.fetchFn(this.url(`/runs/${runId}/cost`));
    if (!response.ok) await raise(response);
    return (await response.json()) as { input_tokens: number; output_tokens: number; cost: string };
  }

  async listApprovals(): Promise<PendingApproval[]> {
    const response = await this.fetchFn(this.url("/approvals"));
    if (!response.ok) await raise(response);
    return (await response.json()) as PendingApproval[];
  }

  async resolveApproval(id: string, decision: ApprovalDecision): Promise<void> {
    const response = await this.fetchFn(this.url(`/approvals/${id}`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ decision }),
    });
    if (!response.ok) await raise(response);
  }

  async markSubtask(machine: string, index: number): Promise<void> {
    const response = await this.fetchFn(this.url(`/bench/${machine}/subtasks/${index}`), {
      method: "POST",
    });
    if (!response.ok) await raise(response);
  }

  eventsUrl(runId: string, fromSeq: number): string {
    return this.url(`/runs/${runId}/events?from_seq=${fromSeq}`);
  }
}
