/**
 * Plain-text panel rendering: a pure function of ConsoleState, so snapshots of
 * golden event logs pin the whole view.
 */

import type { ConsoleState } from "./state.js";

const RULE = "=".repeat(72);
const THIN = "-".repeat(72);

export function renderConsole(state: ConsoleState): string {
  const lines: string[] = [];
  lines.push(RULE);
  lines.push(
    `run: ${state.runId ?? "(none)"}  connection: ${state.connection}  last event: ${state.lastSeq}`,
  );
  if (state.needsResubscribe) {
    lines.push("!! stream gap detected: resubscribing from the last sequence number");
  }
  if (state.lastError) {
    lines.push(`!! ${state.lastError}`);
  }
  lines.push(RULE);

  lines.push("PLAN");
  if (state.plan.length === 0) {
    lines.push(state.finalResponse !== null ? "  (complete)" : "  (no plan yet)");
  } else {
    state.plan.forEach((step, index) => lines.push(`  ${index + 1}. ${step}`));
  }
  lines.push(THIN);

  lines.push("PENDING APPROVALS");
  if (state.approvalOrder.length === 0) {
    lines.push("  (none)");
  } else {
    for (const id of state.approvalOrder) {
      const approval = state.pendingApprovals[id];
      if (!approval) continue;
      lines.push(`  [${approval.id}] ${approval.tool} requested by ${approval.worker}`);
      lines.push(`      $ ${approval.command}`);
    }
  }
  lines.push(THIN);

  lines.push("TRANSCRIPT");
  if (state.transcript.length === 0) {
    lines.push("  (empty)");
  } else {
    for (const entry of state.transcript) {
      const [first, ...rest] = entry.text.split("\n");
      lines.push(`  #${String(entry.seq).padStart(3, "0")} ${first}`);
      for (const continuation of rest) {
        lines.push(`       ${continuation}`);
      }
    }
  }
  lines.push(THIN);

  lines.push(
    `COST  input ${state.cost.inputTokens} tokens  output ${state.cost.outputTokens} tokens  total ${state.cost.display}`,
  );
  if (state.finalResponse !== null) {
    lines.push(RULE);
    lines.push(`FINAL RESPONSE: ${state.finalResponse}`);
  }
  lines.push(RULE);
  return lines.join("\n");
}
