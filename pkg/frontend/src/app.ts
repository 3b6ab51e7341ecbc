/**
 * Browser wiring: launch form, live panel, approval buttons. All state of
 * record lives server-side; this file only feeds the reducer and re-renders.
 */

import { ControlApi, ApiError } from "./api.js";
import { applyEvent, initialState, isApprovalActionable, type ConsoleState } from "./state.js";
import { renderConsole } from "./render.js";
import { followRun } from "./stream.js";
import type { ApprovalDecision } from "./types.js";

export class ConsoleApp {
  state: ConsoleState = initialState();
  private abort: AbortController | null = null;

  constructor(
    private readonly api: ControlApi,
    private readonly onRender: (view: string, state: ConsoleState) => void,
  ) {}

  private render(): void {
    this.onRender(renderConsole(this.state), this.state);
  }

  async launchRun(target: string, review: boolean): Promise<void> {
    try {
      const runId = await this.api.startRun({ target, review });
      this.state = { ...initialState(), runId, connection: "connecting" };
      this.render();
      void this.follow(runId);
    } catch (error) {
      const message = error instanceof ApiError ? error.detail : String(error);
      this.state = { ...this.state, connection: "error", lastError: message };
      this.render();
    }
  }

  private async follow(runId: string): Promise<void> {
    this.abort?.abort();
    this.abort = new AbortController();
    this.state = { ...this.state, connection: "live" };
    this.render();
    await followRun(
      (fromSeq) => this.api.eventsUrl(runId, fromSeq),
      (event) => {
        this.state = applyEvent(this.state, event);
        if (this.state.needsResubscribe) {
          // dense delivery is enforced in followRun; this is belt-and-braces
          this.state = { ...this.state, needsResubscribe: false };
        }
        this.render();
      },
      { signal: this.abort.signal },
    );
    this.state = { ...this.state, connection: "closed" };
    this.render();
  }

  async resolveApproval(id: string, decision: ApprovalDecision): Promise<void> {
    if (!isApprovalActionable(this.state, id)) {
      return; // never actionable twice; the panel updates on ApprovalResolved
    }
    try {
      await this.api.resolveApproval(id, decision);
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // resolved elsewhere (terminal); the stream will deliver the resolution
        return;
      }
      this.state = { ...this.state, lastError: String(error) };
      this.render();
    }
  }

  stop(): void {
    this.abort?.abort();
  }
}

/** Entry point used by index.html. */
export function mount(root: Document = document): ConsoleApp {
  const api = new ControlApi(
    (root.querySelector("#base-url") as HTMLInputElement | null)?.value ?? "http://127.0.0.1:8000",
  );
  const output = root.querySelector("#console") as HTMLPreElement;
  const approvals = root.querySelector("#approvals") as HTMLDivElement;
  const app = new ConsoleApp(api, (view, state) => {
    output.textContent = view;
    approvals.replaceChildren(
      ...state.approvalOrder.map((id) => {
        const approval = state.pendingApprovals[id]!;
        const row = root.createElement("div");
        row.className = "approval-row";
        const command = root.createElement("code");
        command.textContent = `[${approval.worker}/${approval.tool}] ${approval.command}`;
        const approve = root.createElement("button");
        approve.textContent = "approve";
        approve.onclick = () => void app.resolveApproval(id, "approved");
        const deny = root.createElement("button");
        deny.textContent = "deny";
        deny.onclick = () => void app.resolveApproval(id, "denied");
        row.append(command, approve, deny);
        return row;
      }),
    );
  });
  const form = root.querySelector("#launch-form") as HTMLFormElement;
  form.addEventListener("submit", (submitEvent) => {
    submitEvent.preventDefault();
    const target = (root.querySelector("#target") as HTMLInputElement).value;
    const review = (root.querySelector("#review") as HTMLInputElement).checked;
    void app.launchRun(target, review);
  });
  return app;
}
