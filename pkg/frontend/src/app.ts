/**
 * Single-page environment console.  One session per tab; the view is redrawn
 * from polled status snapshots, and every action is a plain service call.
 */

import { ServiceRejection, SessionStatus, StepperClient } from "./api.js";
import { buildRound, phaseLine, registryLines, traceTail } from "./view.js";

const POLL_MS = 1000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

let client: StepperClient | null = null;
let sessionId: string | null = null;
let lastStatus: SessionStatus | null = null;
let pollTimer: number | undefined;

function showError(message: string) {
  const banner = el<HTMLDivElement>("error");
  banner.textContent = message;
  banner.style.display = message ? "block" : "none";
}

function render(status: SessionStatus) {
  lastStatus = status;
  el<HTMLDivElement>("phase").textContent = phaseLine(status);

  const pendingBox = el<HTMLDivElement>("pending");
  pendingBox.innerHTML = "";
  for (const query of status.pending) {
    const row = document.createElement("div");
    const check = document.createElement("input");
    check.type = "checkbox";
    check.dataset.query = query;
    const label = document.createElement("code");
    label.textContent = query + " = ";
    const value = document.createElement("input");
    value.type = "text";
    value.size = 8;
    value.dataset.queryValue = query;
    row.append(check, label, value);
    pendingBox.appendChild(row);
  }
  el<HTMLButtonElement>("send-round").disabled = status.phase !== "round";

  const dueBox = el<HTMLDivElement>("due");
  dueBox.innerHTML = "";
  for (const query of status.dueDeliveries) {
    const row = document.createElement("div");
    const check = document.createElement("input");
    check.type = "checkbox";
    check.dataset.due = query;
    check.checked = true;
    const label = document.createElement("code");
    label.textContent = query;
    row.append(check, label);
    dueBox.appendChild(row);
  }
  el<HTMLButtonElement>("advance").disabled = status.phase !== "boundary";

  const registryBox = el<HTMLUListElement>("registry");
  registryBox.innerHTML = "";
  for (const line of registryLines(status)) {
    const item = document.createElement("li");
    item.textContent = line;
    registryBox.appendChild(item);
  }

  el<HTMLPreElement>("state").textContent = status.state;
}

async function refresh() {
  if (!client || !sessionId) return;
  try {
    render(await client.status(sessionId));
    el<HTMLPreElement>("trace").textContent = traceTail(
      await client.trace(sessionId), 30,
    );
  } catch (err) {
    showError(err instanceof Error ? `service unreachable: ${err.message}` : String(err));
  }
}

async function createSession() {
  const base = el<HTMLInputElement>("service-url").value;
  client = new StepperClient(base);
  try {
    const created = await client.createSession(
      el<HTMLTextAreaElement>("program").value,
      el<HTMLTextAreaElement>("state-input").value,
      el<HTMLTextAreaElement>("scenario").value || undefined,
    );
    sessionId = created.id;
    showError("");
    render(created.status);
    if (pollTimer !== undefined) clearInterval(pollTimer);
    pollTimer = window.setInterval(refresh, POLL_MS);
  } catch (err) {
    showError(err instanceof Error ? err.message : String(err));
  }
}

async function sendRound() {
  if (!client || !sessionId || !lastStatus) return;
  const selected: Array<{ query: string; value: string }> = [];
  for (const check of document.querySelectorAll<HTMLInputElement>("[data-query]")) {
    if (!check.checked) continue;
    const query = check.dataset.query ?? "";
    const value = document.querySelector<HTMLInputElement>(
      `[data-query-value="${CSS.escape(query)}"]`,
    );
    selected.push({ query, value: value?.value ?? "" });
  }
  try {
    const out = await client.postRound(sessionId, buildRound(selected));
    showError("");
    render(out.status);
  } catch (err) {
    // Rejected rounds (non-pending query, undef to a persistent query) come
    // back verbatim from the service; the session itself is untouched.
    showError(err instanceof ServiceRejection ? err.message : String(err));
  }
}

async function advanceBoundary() {
  if (!client || !sessionId) return;
  const deliveries: string[] = [];
  for (const check of document.querySelectorAll<HTMLInputElement>("[data-due]")) {
    if (check.checked) deliveries.push(check.dataset.due ?? "");
  }
  try {
    const out = await client.postBoundary(sessionId, deliveries);
    showError("");
    render(out.status);
  } catch (err) {
    showError(err instanceof ServiceRejection ? err.message : String(err));
  }
}

export function wire() {
  el<HTMLButtonElement>("create").addEventListener("click", () => void createSession());
  el<HTMLButtonElement>("send-round").addEventListener("click", () => void sendRound());
  el<HTMLButtonElement>("advance").addEventListener("click", () => void advanceBoundary());
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  wire();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", wire);
}
