/**
 * Test helpers: the golden event log fixture and a scripted backend that
 * implements the documented control-API wire surface (runs, SSE events,
 * approvals) over a real local HTTP server.
 */

import { createServer, type Server } from "node:http";
import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import path from "node:path";

import type { RunEvent } from "../src/types.js";

const here = path.dirname(fileURLToPath(import.meta.url));

export const DECLINE_TEXT =
  "The user has declined to execute the command. Try a different approach.";

export function loadGoldenEvents(): RunEvent[] {
  const raw = readFileSync(path.join(here, "..", "fixtures", "golden_events.jsonl"), "utf-8");
  return raw
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .map((line) => JSON.parse(line) as RunEvent);
}

function frame(event: RunEvent): string {
  return `id: ${event.seq}\nevent: ${event.kind}\ndata: ${JSON.stringify(event)}\n\n`;
}

export interface ScriptedBackendOptions {
  /** Event sequence numbers the stream must not pass until released. */
  gateAfterSeq?: number;
  /** Close each stream response after this many frames (forces reconnects). */
  framesPerConnection?: number;
}

/**
 * Minimal scripted implementation of the run/approval wire surface. Events up
 * to the gate are visible immediately; resolving the pending approval appends
 * the post-gate tail (whose tool output depends on the decision).
 */
export class ScriptedBackend {
  readonly runId = "scripted-run";
  port = 0;
  resolveCalls = 0;
  private server: Server | null = null;
  private events: RunEvent[] = [];
  private pending: { id: string; command: string; tool: string; worker: string } | null = null;
  private tail: ((decision: string) => RunEvent[]) | null = null;

  constructor(private readonly options: ScriptedBackendOptions = {}) {}

  /** Scenario: plan → route → tool call → approval gate → decision-dependent tail. */
  loadApprovalScenario(): void {
    const base: RunEvent[] = [
      { seq: 1, kind: "PlanCreated", payload: { steps: ["probe the host"] }, timestamp: 0 },
      { seq: 2, kind: "StepRouted", payload: { step: "probe the host", worker: "Enumeration" }, timestamp: 0 },
      {
        seq: 3,
        kind: "WorkerAction",
        payload: { worker: "Enumeration", iteration: 1, action: "tool_call", tool: "temp_shell", arguments: { command: "id" }, retrieved: [] },
        timestamp: 0,
      },
      {
        seq: 4,
        kind: "ApprovalRequested",
        payload: { id: "appr-1", command: "id", tool: "temp_shell", worker: "Enumeration" },
        timestamp: 0,
      },
    ];
    this.events = base;
    this.pending = { id: "appr-1", command: "id", tool: "temp_shell", worker: "Enumeration" };
    this.tail = (decision) => [
      { seq: 5, kind: "ApprovalResolved", payload: { id: "appr-1", decision, auto: false }, timestamp: 0 },
      {
        seq: 6,
        kind: "ToolOutput",
        payload: {
          worker: "Enumeration",
          tool: "temp_shell",
          output: decision === "approved" ? "uid=0(root)\n" : DECLINE_TEXT,
          exit_status: decision === "approved" ? 0 : null,
          truncated: false,
        },
        timestamp: 0,
      },
      {
        seq: 7,
        kind: "ObservationRecorded",
        payload: { step: "probe the host", worker: "Enumeration", summary: "done", synthesized: false },
        timestamp: 0,
      },
      { seq: 8, kind: "Finished", payload: { final_response: "wrapped up" }, timestamp: 0 },
    ];
  }

  loadReplay(events: RunEvent[]): void {
    this.events = [...events];
    this.pending = null;
    this.tail = null;
  }

  async start(): Promise<void> {
    this.server = createServer((request, response) => {
      const url = new URL(request.url ?? "/", `http://127.0.0.1:${this.port}`);
      if (request.method === "POST" && url.pathname === "/v1/runs") {
        response.writeHead(202, { "content-type": "application/json" });
        response.end(JSON.stringify({ id: this.runId }));
        return;
      }
      if (request.method === "GET" && url.pathname === `/v1/runs/${this.runId}/events`) {
        const fromSeq = Number(url.searchParams.get("from_seq") ?? "1");
        response.writeHead(200, { "content-type": "text/event-stream" });
        const limit = this.options.framesPerConnection ?? Infinity;
        let sent = 0;
        const pump = () => {
          if (response.destroyed || response.writableEnded) {
            return;
          }
          const visible = this.events.filter((event) => event.seq >= fromSeq + sent);
          for (const event of visible) {
            response.write(frame(event));
            sent += 1;
            if (sent >= limit) {
              response.end();
              return;
            }
          }
          if (this.events.some((event) => event.kind === "Finished")) {
            response.end();
            return;
          }
          setTimeout(pump, 5);
        };
        response.on("error", () => undefined);
        pump();
        return;
      }
      if (request.method === "GET" && url.pathname === "/v1/approvals") {
        response.writeHead(200, { "content-type": "application/json" });
        response.end(JSON.stringify(this.pending ? [this.pending] : []));
        return;
      }
      if (request.method === "POST" && url.pathname.startsWith("/v1/approvals/")) {
        const id = url.pathname.split("/").pop();
        if (!this.pending || this.pending.id !== id) {
          response.writeHead(this.pending ? 404 : 409, { "content-type": "application/json" });
          response.end(JSON.stringify({ detail: "unknown or already resolved" }));
          return;
        }
        let body = "";
        request.on("data", (chunk) => (body += chunk));
        request.on("end", () => {
          const decision = (JSON.parse(body) as { decision: string }).decision;
          this.resolveCalls += 1;
          this.pending = null;
          if (this.tail) {
            this.events = [...this.events, ...this.tail(decision)];
            this.tail = null;
          }
          response.writeHead(200, { "content-type": "application/json" });
          response.end(JSON.stringify({ id, state: decision }));
        });
        return;
      }
      response.writeHead(404, { "content-type": "application/json" });
      response.end(JSON.stringify({ detail: "not found" }));
    });
    await new Promise<void>((resolve) => {
      this.server!.listen(0, "127.0.0.1", () => {
        const address = this.server!.address();
        if (address && typeof address === "object") this.port = address.port;
        resolve();
      });
    });
  }

  get baseUrl(): string {
    return `http://127.0.0.1:${this.port}`;
  }

  async stop(): Promise<void> {
    await new Promise<void>((resolve) => this.server?.close(() => resolve()));
  }
}
