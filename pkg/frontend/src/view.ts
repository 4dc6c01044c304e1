/**
 * Pure view-model helpers: status JSON in, display strings out.  Kept free of
 * DOM access so they are unit-testable under node.
 */

import type { Reply, SessionStatus } from "./api.js";

export function phaseLine(status: SessionStatus): string {
  if (status.phase === "done") {
    return `run ${status.verdict ?? "ended"} after step ${status.step}`;
  }
  if (status.phase === "boundary") {
    return `step ${status.step} ended; boundary actions available`;
  }
  return `step ${status.step}, ${status.round} round(s) delivered`;
}

export function registryLines(status: SessionStatus): string[] {
  return status.registry.map((entry) => {
    const where = entry.locations.join(", ");
    const tail =
      entry.status === "delivered" ? `delivered ${entry.value ?? ""}`.trim() : "awaiting";
    return `${entry.query} -> ${where} [${tail}] (step ${entry.step})`;
  });
}

/** Replies for the selected pending queries; blank values are rejected here
 * so a half-filled form never reaches the service. */
export function buildRound(selected: Array<{ query: string; value: string }>): Reply[] {
  const replies: Reply[] = [];
  for (const { query, value } of selected) {
    const trimmed = value.trim();
    if (!trimmed) {
      throw new Error(`no reply value for ${query}`);
    }
    replies.push({ query, value: trimmed });
  }
  if (replies.length === 0) {
    throw new Error("select at least one pending query");
  }
  return replies;
}

export function traceTail(trace: string, lines: number): string {
  const all = trace.trimEnd().split("\n");
  return all.slice(Math.max(0, all.length - lines)).join("\n");
}
